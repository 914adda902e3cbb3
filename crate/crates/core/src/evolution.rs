//! Fixed-step RK4 integration of the Lagrangian system and checks on the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::nonlocal::qp_fast_unchecked;
use crate::peakons::{green, green_prime};
use crate::state::{apply_relabeling, enorm_diff, LagrangianState, Relabeling, Tolerances};
use crate::transforms::{default_plateau_eps, to_eulerian};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Keep every `snapshot_every`-th step; the final state is always kept.
    pub snapshot_every: usize,
    pub tol: Tolerances,
    /// Abort when the compatibility residual exceeds this, relative to `(1+h)^2`.
    pub max_compat: f64,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        EvolveConfig {
            dt,
            t_end,
            snapshot_every: 1,
            tol: Tolerances::default(),
            max_compat: 1e-6,
        }
    }

    pub fn every(mut self, stride: usize) -> Self {
        self.snapshot_every = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::domain(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        if self.snapshot_every == 0 {
            return Err(Error::domain("snapshot_every must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    pub h: f64,
    pub umax: f64,
    pub min_yxi: f64,
    pub compat_residual: f64,
    /// Largest negative value set to zero since the previous snapshot.
    pub clamp: f64,
}

impl Diagnostics {
    fn of(x: &LagrangianState, clamp: f64) -> Self {
        Diagnostics {
            t: x.t,
            h: x.h(),
            umax: x.umax(),
            min_yxi: x.yxi.iter().copied().fold(f64::INFINITY, f64::min),
            compat_residual: x.compat_residual(),
            clamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<LagrangianState>,
    pub diagnostics: Vec<Diagnostics>,
}

impl Trajectory {
    pub fn last(&self) -> &LagrangianState {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Largest `|h(t) - h(0)| / h(0)` over the snapshots.
    pub fn energy_drift(&self) -> f64 {
        let h0 = self.diagnostics[0].h;
        let scale = if h0 > 0.0 { h0 } else { 1.0 };
        self.diagnostics
            .iter()
            .map(|d| (d.h - h0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Time of the smallest `||U||_inf`, refined by a parabola through the neighbours.
    pub fn collision_time(&self) -> Option<f64> {
        let d = &self.diagnostics;
        if d.len() < 3 {
            return None;
        }
        let k = (0..d.len()).min_by(|&a, &b| d[a].umax.total_cmp(&d[b].umax))?;
        if k == 0 || k + 1 == d.len() {
            return Some(d[k].t);
        }
        let (t0, t1, t2) = (d[k - 1].t, d[k].t, d[k + 1].t);
        let (f0, f1, f2) = (d[k - 1].umax, d[k].umax, d[k + 1].umax);
        let num = (t1 - t0).powi(2) * (f1 - f2) - (t1 - t2).powi(2) * (f1 - f0);
        let den = (t1 - t0) * (f1 - f2) - (t1 - t2) * (f1 - f0);
        if den == 0.0 {
            return Some(t1);
        }
        Some((t1 - 0.5 * num / den).clamp(t0, t2))
    }
}

/// Time derivative `(y_t, U_t, y_xi_t, U_xi_t, nu_t)`, returned in the fields of a state.
pub fn rhs(x: &LagrangianState) -> Result<LagrangianState> {
    let qp = qp_fast_unchecked(x)?;
    let n = x.n;
    let mut d = x.clone();
    for j in 0..n {
        let (u, yxi, uxi, nu) = (x.u[j], x.yxi[j], x.uxi[j], x.nu[j]);
        let (q, p) = (qp.q[j], qp.p[j]);
        d.y[j] = u;
        d.u[j] = -q;
        d.yxi[j] = uxi;
        d.uxi[j] = 0.5 * nu + (0.5 * u * u - p) * yxi;
        d.nu[j] = -2.0 * q * u * yxi + (3.0 * u * u - 2.0 * p) * uxi;
    }
    Ok(d)
}

fn axpy(x: &LagrangianState, k: &LagrangianState, h: f64) -> LagrangianState {
    let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a + h * b).collect();
    LagrangianState {
        n: x.n,
        t: x.t + h,
        y: f(&x.y, &k.y),
        u: f(&x.u, &k.u),
        yxi: f(&x.yxi, &k.yxi),
        uxi: f(&x.uxi, &k.uxi),
        nu: f(&x.nu, &k.nu),
    }
}

fn rk4_step(x: &LagrangianState, h: f64) -> Result<LagrangianState> {
    let k1 = rhs(x)?;
    let k2 = rhs(&axpy(x, &k1, 0.5 * h))?;
    let k3 = rhs(&axpy(x, &k2, 0.5 * h))?;
    let k4 = rhs(&axpy(x, &k3, h))?;
    let comb = |a: &[f64], b1: &[f64], b2: &[f64], b3: &[f64], b4: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|j| a[j] + h / 6.0 * (b1[j] + 2.0 * b2[j] + 2.0 * b3[j] + b4[j]))
            .collect()
    };
    Ok(LagrangianState {
        n: x.n,
        t: x.t + h,
        y: comb(&x.y, &k1.y, &k2.y, &k3.y, &k4.y),
        u: comb(&x.u, &k1.u, &k2.u, &k3.u, &k4.u),
        yxi: comb(&x.yxi, &k1.yxi, &k2.yxi, &k3.yxi, &k4.yxi),
        uxi: comb(&x.uxi, &k1.uxi, &k2.uxi, &k3.uxi, &k4.uxi),
        nu: comb(&x.nu, &k1.nu, &k2.nu, &k3.nu, &k4.nu),
    })
}

/// Zeroes negative `y_xi`, `nu` above `-limit`; returns the largest magnitude removed.
fn clamp(x: &mut LagrangianState, limit: f64) -> std::result::Result<f64, String> {
    let mut worst = 0.0_f64;
    for (name, v) in [("y_xi", &mut x.yxi), ("nu", &mut x.nu)] {
        for (j, a) in v.iter_mut().enumerate() {
            if *a < 0.0 {
                if *a < -limit {
                    return Err(format!("{name} = {a:e} at node {j}"));
                }
                worst = worst.max(-*a);
                *a = 0.0;
            }
        }
    }
    Ok(worst)
}

/// Integrates from `x0.t` to `x0.t + cfg.t_end` with steps of `cfg.dt` (the last one
/// shortened to land on `t_end`).
pub fn evolve(x0: &LagrangianState, cfg: &EvolveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    x0.validate()?;
    let t0 = x0.t;
    let steps = (cfg.t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut x = x0.clone();
    let mut traj = Trajectory {
        snapshots: vec![x.clone()],
        diagnostics: vec![Diagnostics::of(&x, 0.0)],
    };
    let mut clamped = 0.0_f64;
    for k in 1..=steps {
        let t_next = if k == steps {
            t0 + cfg.t_end
        } else {
            t0 + k as f64 * cfg.dt
        };
        let mut next = rk4_step(&x, t_next - x.t).map_err(|e| Error::Integration {
            t: x.t,
            reason: e.to_string(),
            snapshot: Box::new(x.clone()),
        })?;
        next.t = t_next;
        let fail = |reason: String, s: &LagrangianState| Error::Integration {
            t: t_next,
            reason,
            snapshot: Box::new(s.clone()),
        };
        if next.validate().is_err() {
            return Err(fail("non-finite values".into(), &x));
        }
        clamped = clamped.max(clamp(&mut next, cfg.tol.clamp).map_err(|r| fail(r, &next))?);
        let s = 1.0 + next.h();
        let compat = next.compat_residual();
        if compat > cfg.max_compat * s * s {
            return Err(fail(format!("compatibility residual {compat:e}"), &next));
        }
        x = next;
        if k % cfg.snapshot_every == 0 || k == steps {
            traj.diagnostics.push(Diagnostics::of(&x, clamped));
            traj.snapshots.push(x.clone());
            clamped = 0.0;
        }
    }
    Ok(traj)
}

/// The state at absolute time `t`, without intermediate snapshots.
pub fn evolve_to(x0: &LagrangianState, t: f64, dt: f64) -> Result<LagrangianState> {
    let mut cfg = EvolveConfig::new(dt, t - x0.t);
    cfg.snapshot_every = usize::MAX;
    Ok(evolve(x0, &cfg)?.last().clone())
}

/// `||S_t(X • f) - S_t(X) • f||_E`.
pub fn check_equivariance(
    x: &LagrangianState,
    f: &Relabeling,
    t: f64,
    cfg: &EvolveConfig,
) -> Result<f64> {
    let a = evolve_to(&apply_relabeling(x, f)?, x.t + t, cfg.dt)?;
    let b = apply_relabeling(&evolve_to(x, x.t + t, cfg.dt)?, f)?;
    enorm_diff(&a, &b)
}

/// `phi(t, x) = psi(t) chi(x)` with `psi(t) = exp(1 - 1/(1 - (t/T)^2))` on `[0, T)` and the
/// periodic bump `chi(x) = exp(kappa (cos 2π(x - c) - 1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub t_end: f64,
    pub center: f64,
    pub kappa: f64,
}

impl TestFunction {
    fn psi(&self, t: f64) -> (f64, f64) {
        let s = t / self.t_end;
        if s >= 1.0 {
            return (0.0, 0.0);
        }
        let r = 1.0 - s * s;
        let v = (1.0 - 1.0 / r).exp();
        (v, v * (-2.0 * s / (self.t_end * r * r)))
    }

    fn chi(&self, x: f64) -> (f64, f64) {
        let tau = 2.0 * std::f64::consts::PI;
        let a = tau * (x - self.center);
        let v = (self.kappa * (a.cos() - 1.0)).exp();
        (v, -v * self.kappa * tau * a.sin())
    }
}

/// `P` and `P_x` on the x-grid from `u` and the energy measure:
/// `P = G * (u^2/2 + mu/2)` with the period-1 kernel `G`.
fn eulerian_p(u: &[f64], density: &[f64], atoms: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    let m = u.len();
    let src: Vec<f64> = (0..m).map(|l| 0.5 * (u[l] * u[l] + density[l])).collect();
    let g: Vec<f64> = (0..m).map(|k| green(k as f64 / m as f64)).collect();
    let gp: Vec<f64> = (0..m).map(|k| green_prime(k as f64 / m as f64)).collect();
    (0..m)
        .into_par_iter()
        .map(|k| {
            let x = k as f64 / m as f64;
            let mut p = 0.0;
            let mut px = 0.0;
            for (l, s) in src.iter().enumerate() {
                let d = (k + m - l) % m;
                p += g[d] * s;
                px += gp[d] * s;
            }
            p /= m as f64;
            px /= m as f64;
            for &(pos, w) in atoms {
                p += 0.5 * w * green(x - pos);
                px += 0.5 * w * green_prime(x - pos);
            }
            (p, px)
        })
        .unzip()
}

/// Residuals of the two weak identities, by the trapezoid rule over the snapshots and
/// the x-grid of size `m`.
///
/// `u_x^2` is read off the absolutely continuous energy density as `density - u^2`.
pub fn weak_residual(traj: &Trajectory, phi: &TestFunction, m: usize) -> (f64, f64) {
    let t0 = traj.snapshots[0].t;
    let per_snapshot: Vec<(f64, f64, f64, f64)> = traj
        .snapshots
        .iter()
        .map(|x| {
            let e = to_eulerian(x, m, default_plateau_eps(x));
            let (p, px) = eulerian_p(&e.u, &e.density, &e.atoms);
            let sq: Vec<f64> = e.u.iter().map(|v| 0.5 * v * v).collect();
            let uux = grid::centered_diff(&sq, 0.0);
            let (psi, psi_t) = phi.psi(x.t - t0);
            let (mut i1, mut i2, mut init) = (0.0, 0.0, 0.0);
            for k in 0..m {
                let (c, cx) = phi.chi(k as f64 / m as f64);
                let u = e.u[k];
                let half_ux2 = 0.5 * (e.density[k] - u * u);
                i1 += -u * psi_t * c + (uux[k] + px[k]) * psi * c;
                i2 += (p[k] - u * u - half_ux2) * psi * c + px[k] * psi * cx;
                init += u * c;
            }
            let mf = m as f64;
            (x.t, i1 / mf, i2 / mf, init / mf)
        })
        .collect();
    let mut r1 = -per_snapshot[0].3;
    let mut r2 = 0.0;
    for w in per_snapshot.windows(2) {
        let dt = w[1].0 - w[0].0;
        r1 += 0.5 * dt * (w[0].1 + w[1].1);
        r2 += 0.5 * dt * (w[0].2 + w[1].2);
    }
    (r1, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peakons::{aligned_lagrangian, antisymmetric_pair, evolve_peakons, PeakonState};
    use crate::samples::smooth_state;
    use crate::state::random_relabeling;

    #[test]
    fn rest_is_stationary() {
        let d = rhs(&LagrangianState::rest(128)).unwrap();
        for v in [&d.y, &d.u, &d.yxi, &d.uxi, &d.nu] {
            assert!(v.iter().all(|&a| a == 0.0));
        }
    }

    #[test]
    fn compatibility_is_kept_along_the_flow() {
        let x = smooth_state(256, 4, 0.2);
        let tr = evolve(&x, &EvolveConfig::new(2e-3, 1.0).every(50)).unwrap();
        for d in &tr.diagnostics {
            assert!(d.compat_residual < 1e-12, "{d:?}");
            assert_eq!(d.clamp, 0.0);
        }
    }

    #[test]
    fn last_step_lands_on_t_end() {
        let x = smooth_state(64, 0, 0.1);
        let tr = evolve(&x, &EvolveConfig::new(0.03, 0.1)).unwrap();
        assert_eq!(tr.snapshots.len(), 5);
        assert_eq!(tr.last().t, 0.1);
        assert!(evolve(&x, &EvolveConfig::new(-1.0, 1.0)).is_err());
        assert!(evolve(&x, &EvolveConfig::new(0.1, 1.0).every(0)).is_err());
    }

    #[test]
    fn single_peakon_follows_the_oracle() {
        let s = PeakonState::new(vec![1.0], vec![0.3]).unwrap();
        let x = evolve_to(&aligned_lagrangian(&s, 1024).unwrap(), 1.0, 1e-3).unwrap();
        let oracle = evolve_peakons(&s, 1e-4, 1.0).unwrap();
        let o = oracle.last();
        let err = (0..x.n)
            .map(|j| (x.u[j] - o.u(x.y_full(j))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
        // speed p G(0)
        let q = (0.3 + crate::peakons::green(0.0)).rem_euclid(1.0);
        assert!((o.q[0] - q).abs() < 1e-12);
    }

    #[test]
    fn collision_is_found_and_energy_kept() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        let x = aligned_lagrangian(&s, 256).unwrap();
        let tr = evolve(&x, &EvolveConfig::new(2e-3, 3.0).every(5)).unwrap();
        let ts = tr.collision_time().unwrap();
        assert!((ts - 2.56).abs() < 0.01, "{ts}");
        assert!(tr.energy_drift() < 1e-5, "{}", tr.energy_drift());
    }

    #[test]
    fn relabeling_commutes_with_the_flow() {
        let f = |n| random_relabeling(n, 0.5, 3).unwrap();
        let r = |n| {
            check_equivariance(
                &smooth_state(n, 2, 0.2),
                &f(n),
                0.5,
                &EvolveConfig::new(1e-2, 0.5),
            )
            .unwrap()
        };
        let (a, b) = (r(256), r(512));
        assert!(b < 1e-2 && a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn test_function_is_compactly_supported() {
        let phi = TestFunction {
            t_end: 2.0,
            center: 0.5,
            kappa: 4.0,
        };
        assert_eq!(phi.psi(0.0), (1.0, 0.0));
        assert_eq!(phi.psi(2.0), (0.0, 0.0));
        assert!(phi.psi(1.99).0 < 1e-40);
        assert_eq!(phi.chi(0.5).0, 1.0);
    }

    #[test]
    fn peakon_pair_is_a_weak_solution() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        let phi = TestFunction {
            t_end: 2.0,
            center: 0.45,
            kappa: 4.0,
        };
        let res = |n: usize, dt: f64| {
            let x = aligned_lagrangian(&s, n).unwrap();
            let tr = evolve(&x, &EvolveConfig::new(dt, 2.0).every((0.02 / dt) as usize)).unwrap();
            weak_residual(&tr, &phi, n)
        };
        let (a1, a2) = res(256, 4e-3);
        let (b1, b2) = res(512, 2e-3);
        assert!(a1.abs().max(a2.abs()) < 5e-3);
        assert!(
            b1.abs() < 1e-5 && b2.abs() < 0.5 * a2.abs(),
            "{a2} {b1} {b2}"
        );
    }
}
