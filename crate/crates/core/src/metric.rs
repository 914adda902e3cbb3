//! Upper bounds for the relabeling-invariant distance `J`, its chained version `d`,
//! and the stability experiment built on them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_to, EvolveConfig};
use crate::grid;
use crate::projection::{pi, pi_relabeling};
use crate::state::{apply_relabeling, enorm_diff, LagrangianState, Relabeling};
use crate::transforms::{default_plateau_eps, interpolate, to_eulerian, to_lagrangian};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Spline knots of the searched relabeling.
    pub knots: usize,
    pub max_sweeps: usize,
    pub initial_step: f64,
    pub initial_shift_step: f64,
    pub min_step: f64,
    /// A sweep counts as progress when it improves by more than this fraction.
    pub rel_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            knots: 8,
            max_sweeps: 200,
            initial_step: 0.5,
            initial_shift_step: 0.02,
            min_step: 1e-4,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub j_upper: f64,
    pub f_witness: Relabeling,
    pub g_witness: Relabeling,
    pub candidates_tried: usize,
    /// `||y_a - y_b||_inf + ||U_a - U_b||_inf + |h_a - h_b|` on the inputs.
    pub linf_diag: f64,
    pub enorm: f64,
}

/// `||y_a - y_b||_inf + ||U_a - U_b||_inf + |h_a - h_b|`.
pub fn linf_diag(a: &LagrangianState, b: &LagrangianState) -> f64 {
    let sup = |p: &[f64], q: &[f64]| {
        p.iter()
            .zip(q)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    };
    sup(&a.y, &b.y) + sup(&a.u, &b.u) + (a.h() - b.h()).abs()
}

/// Monotone periodic cubic through the knots `(k/K, F_k)`, `F_k` the partial sums of
/// `theta^2 / sum theta^2`, plus a shift. Knot slopes are harmonic means of the
/// neighbouring secants, which keeps the interpolant increasing.
fn spline_relabeling(n: usize, theta: &[f64], shift: f64) -> Relabeling {
    let k = theta.len();
    let kf = k as f64;
    let floor = 1e-6;
    let w: Vec<f64> = theta.iter().map(|t| t * t + floor).collect();
    let total: f64 = w.iter().sum();
    let mut knots = Vec::with_capacity(k + 1);
    let mut acc = 0.0;
    knots.push(0.0);
    for wi in &w {
        acc += wi / total;
        knots.push(acc);
    }
    knots[k] = 1.0;
    let secant: Vec<f64> = (0..k).map(|i| kf * (knots[i + 1] - knots[i])).collect();
    let slope: Vec<f64> = (0..k)
        .map(|i| {
            let (a, b) = (secant[(i + k - 1) % k], secant[i]);
            2.0 * a * b / (a + b)
        })
        .collect();
    Relabeling::from_fn(n, |xi| {
        let x = xi * kf;
        let i = (x.floor() as usize).min(k - 1);
        let s = x - i as f64;
        let h = 1.0 / kf;
        let (p0, p1) = (knots[i], knots[i + 1]);
        let (m0, m1) = (slope[i], slope[(i + 1) % k]);
        let (s2, s3) = (s * s, s * s * s);
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * h * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * h * m1;
        v + shift
    })
}

struct Side<'a> {
    moving: &'a LagrangianState,
    base_moving: &'a Relabeling,
    fixed_image: &'a LagrangianState,
}

impl Side<'_> {
    fn value(&self, g: &Relabeling) -> Option<(f64, Relabeling)> {
        let composed = self.base_moving.compose(g).ok()?;
        let img = apply_relabeling(self.moving, &composed).ok()?;
        Some((enorm_diff(&img, self.fixed_image).ok()?, composed))
    }
}

/// Coordinate descent over spline knots and shift, relabeling the `moving` side.
fn descend(side: &Side, n: usize, cfg: &SearchConfig, tried: &mut usize) -> (f64, Relabeling) {
    let k = cfg.knots.max(2);
    let mut params = vec![1.0; k + 1];
    params[k] = 0.0;
    let eval = |p: &[f64], tried: &mut usize| {
        *tried += 1;
        side.value(&spline_relabeling(n, &p[..k], p[k]))
    };
    let (mut best, mut best_f) = eval(&params, tried).expect("identity spline is admissible");
    let mut steps: Vec<f64> = vec![cfg.initial_step; k];
    steps.push(cfg.initial_shift_step);
    for _ in 0..cfg.max_sweeps {
        let start = best;
        for i in 0..=k {
            for dir in [1.0, -1.0] {
                let mut trial = params.clone();
                trial[i] += dir * steps[i];
                if let Some((v, f)) = eval(&trial, tried) {
                    if v < best {
                        best = v;
                        best_f = f;
                        params = trial;
                        break;
                    }
                }
            }
        }
        if start - best <= cfg.rel_tol * start {
            steps.iter_mut().for_each(|s| *s *= 0.5);
            if steps[..k].iter().all(|&s| s < cfg.min_step) {
                break;
            }
        }
    }
    (best, best_f)
}

/// Certified upper bound for `J(a, b) = inf_{f,g} ||a • f - b • g||_E`.
///
/// Every candidate value is an E-norm of explicitly relabeled states, so the result
/// bounds the discrete `J` from above. Both search directions run and the smaller
/// result is kept, which makes the bound symmetric in `(a, b)`.
pub fn j_upper(
    a: &LagrangianState,
    b: &LagrangianState,
    cfg: &SearchConfig,
) -> Result<MetricReport> {
    if a.n != b.n {
        return Err(Error::Dimension(a.n, b.n));
    }
    let n = a.n;
    let id = Relabeling::identity(n);
    let enorm = enorm_diff(a, b)?;
    let mut report = MetricReport {
        j_upper: enorm,
        f_witness: id.clone(),
        g_witness: id.clone(),
        candidates_tried: 1,
        linf_diag: linf_diag(a, b),
        enorm,
    };
    if enorm == 0.0 {
        return Ok(report);
    }
    if let (Ok(wa), Ok(wb)) = (pi_relabeling(a), pi_relabeling(b)) {
        report.candidates_tried += 1;
        let va = apply_relabeling(a, &wa)?;
        let vb = apply_relabeling(b, &wb)?;
        let v = enorm_diff(&va, &vb)?;
        if v < report.j_upper {
            report.j_upper = v;
            report.f_witness = wa;
            report.g_witness = wb;
        }
    }
    let (fa, fb) = (report.f_witness.clone(), report.g_witness.clone());
    let img_a = apply_relabeling(a, &fa)?;
    let img_b = apply_relabeling(b, &fb)?;
    let mut tried = 0;
    let (vb, gb) = descend(
        &Side {
            moving: b,
            base_moving: &fb,
            fixed_image: &img_a,
        },
        n,
        cfg,
        &mut tried,
    );
    let (va, ga) = descend(
        &Side {
            moving: a,
            base_moving: &fa,
            fixed_image: &img_b,
        },
        n,
        cfg,
        &mut tried,
    );
    report.candidates_tried += tried;
    if vb < report.j_upper && vb <= va {
        report.j_upper = vb;
        report.g_witness = gb;
    } else if va < report.j_upper {
        report.j_upper = va;
        report.f_witness = ga;
    }
    Ok(report)
}

/// Chained upper bound `d̂` with midpoints `L((M a + M b)/2)`, recursion `depth`.
pub fn d_upper(
    a: &LagrangianState,
    b: &LagrangianState,
    depth: usize,
    cfg: &SearchConfig,
) -> Result<f64> {
    let direct = j_upper(a, b, cfg)?.j_upper;
    if depth == 0 || direct == 0.0 {
        return Ok(direct);
    }
    let m = a.n;
    let ea = to_eulerian(a, m, default_plateau_eps(a));
    let eb = to_eulerian(b, m, default_plateau_eps(b));
    let z = to_lagrangian(&interpolate(&ea, &eb, 0.5)?, a.n)?;
    let (left, right) = rayon::join(
        || d_upper(a, &z, depth - 1, cfg),
        || d_upper(&z, b, depth - 1, cfg),
    );
    Ok(direct.min(left? + right?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRow {
    pub pair_id: usize,
    pub t: f64,
    pub j0: f64,
    pub jt: f64,
    pub ratio: f64,
    /// `||·||_E` ratio of the evolved states as they are, without relabeling.
    pub enorm_ratio: f64,
    /// Same ratio for the discrete `H^1` distance of the Eulerian `u`.
    pub h1_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSummary {
    pub rows: Vec<LipschitzRow>,
    pub skipped: Vec<usize>,
    pub max_ratio: f64,
    /// Least-squares slope of `log r(t)` against `t` over all rows.
    pub log_slope: f64,
    pub max_enorm_ratio: f64,
    pub max_h1_ratio: f64,
}

fn h1_distance(a: &LagrangianState, b: &LagrangianState, m: usize) -> f64 {
    let ea = to_eulerian(a, m, default_plateau_eps(a));
    let eb = to_eulerian(b, m, default_plateau_eps(b));
    let du: Vec<f64> = ea.u.iter().zip(&eb.u).map(|(x, y)| x - y).collect();
    let dux = grid::centered_diff(&du, 0.0);
    let s: Vec<f64> = (0..m).map(|k| du[k] * du[k] + dux[k] * dux[k]).collect();
    grid::trapz(&s).sqrt()
}

/// `r(t) = j(S̄_t a, S̄_t b) / j(a, b)` for each pair and time.
pub fn lipschitz_experiment(
    pairs: &[(LagrangianState, LagrangianState)],
    times: &[f64],
    cfg: &EvolveConfig,
    search: &SearchConfig,
) -> Result<LipschitzSummary> {
    let per_pair: Vec<Result<Option<Vec<LipschitzRow>>>> = pairs
        .par_iter()
        .enumerate()
        .map(|(id, (a, b))| {
            let m = a.n;
            let (pa0, pb0) = (pi(a)?, pi(b)?);
            let j0 = j_upper(&pa0, &pb0, search)?.j_upper;
            if j0 == 0.0 {
                return Ok(None);
            }
            let e0 = enorm_diff(a, b)?;
            let h0 = h1_distance(&pa0, &pb0, m);
            let (mut xa, mut xb) = (a.clone(), b.clone());
            let mut rows = Vec::with_capacity(times.len());
            for &t in times {
                xa = evolve_to(&xa, a.t + t, cfg.dt)?;
                xb = evolve_to(&xb, b.t + t, cfg.dt)?;
                let (pa, pb) = (pi(&xa)?, pi(&xb)?);
                let jt = j_upper(&pa, &pb, search)?.j_upper;
                rows.push(LipschitzRow {
                    pair_id: id,
                    t,
                    j0,
                    jt,
                    ratio: jt / j0,
                    enorm_ratio: enorm_diff(&xa, &xb)? / e0,
                    h1_ratio: h1_distance(&pa, &pb, m) / h0,
                });
            }
            Ok(Some(rows))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (id, r) in per_pair.into_iter().enumerate() {
        match r? {
            Some(v) => rows.extend(v),
            None => skipped.push(id),
        }
    }
    let max = |f: fn(&LipschitzRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.ratio > 0.0)
        .map(|r| (r.t, r.ratio.ln()))
        .collect();
    let log_slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        if sxx > 0.0 {
            sxy / sxx
        } else {
            0.0
        }
    } else {
        0.0
    };
    Ok(LipschitzSummary {
        max_ratio: max(|r| r.ratio),
        max_enorm_ratio: max(|r| r.enorm_ratio),
        max_h1_ratio: max(|r| r.h1_ratio),
        log_slope,
        rows,
        skipped,
    })
}
