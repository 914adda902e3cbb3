//! Period-1 multipeakons: `u = sum_i p_i G(x - q_i)` with the periodic kernel `G`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid;
use crate::state::{restore_compat, LagrangianState};
use crate::transforms::EulerianState;

/// `2 sinh(1/2)`.
fn two_sinh_half() -> f64 {
    2.0 * 0.5_f64.sinh()
}

#[inline]
fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `G(x) = cosh(frac(x) - 1/2) / (2 sinh(1/2))`, the sum of `e^{-|x-k|}/2` over `k`.
pub fn green(x: f64) -> f64 {
    (frac(x) - 0.5).cosh() / two_sinh_half()
}

/// `G'` with the symmetric value `G'(0) = 0` at the corners.
pub fn green_prime(x: f64) -> f64 {
    let f = frac(x);
    if f == 0.0 {
        0.0
    } else {
        (f - 0.5).sinh() / two_sinh_half()
    }
}

/// One-sided derivatives `(G'(x-), G'(x+))`.
fn green_prime_sides(x: f64) -> (f64, f64) {
    let f = frac(x);
    if f == 0.0 {
        (0.5, -0.5)
    } else {
        let v = (f - 0.5).sinh() / two_sinh_half();
        (v, v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakonState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub t: f64,
}

impl PeakonState {
    /// Wraps positions into `[0, 1)` and sorts the pairs by position.
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::Dimension(p.len(), q.len()));
        }
        if p.is_empty() {
            return Err(Error::domain("at least one peakon is required"));
        }
        if p.iter().chain(&q).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite peakon parameter"));
        }
        let mut s = PeakonState { p, q, t: 0.0 };
        s.normalize();
        Ok(s)
    }

    fn normalize(&mut self) {
        let mut pairs: Vec<(f64, f64)> = self
            .q
            .iter()
            .map(|&q| frac(q))
            .zip(self.p.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.q = pairs.iter().map(|v| v.0).collect();
        self.p = pairs.iter().map(|v| v.1).collect();
    }

    pub fn u(&self, x: f64) -> f64 {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(p, q)| p * green(x - q))
            .sum()
    }

    /// `(u_x(x-), u_x(x+))`.
    pub fn ux_sides(&self, x: f64) -> (f64, f64) {
        self.p
            .iter()
            .zip(&self.q)
            .fold((0.0, 0.0), |(l, r), (p, q)| {
                let (a, b) = green_prime_sides(x - q);
                (l + p * a, r + p * b)
            })
    }

    /// `h = sum_ij p_i p_j G(q_i - q_j)`, the H^1 energy of the profile.
    pub fn energy(&self) -> f64 {
        let mut h = 0.0;
        for (pi, qi) in self.p.iter().zip(&self.q) {
            for (pj, qj) in self.p.iter().zip(&self.q) {
                h += pi * pj * green(qi - qj);
            }
        }
        h
    }

    /// Hamiltonian of the peakon ODEs, half the energy.
    pub fn hamiltonian(&self) -> f64 {
        0.5 * self.energy()
    }

    pub fn momentum(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Smallest cyclic distance between neighbouring positions.
    pub fn min_gap(&self) -> f64 {
        let k = self.q.len();
        if k < 2 {
            return f64::INFINITY;
        }
        let mut q: Vec<f64> = self.q.iter().map(|&v| frac(v)).collect();
        q.sort_by(f64::total_cmp);
        (0..k)
            .map(|i| {
                if i + 1 == k {
                    q[0] + 1.0 - q[i]
                } else {
                    q[i + 1] - q[i]
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// `max |u|`, attained at a peak.
    pub fn umax(&self) -> f64 {
        self.q.iter().map(|&q| self.u(q).abs()).fold(0.0, f64::max)
    }
}

/// Samples `u` and its energy density on `x_k = k/m`.
///
/// The density uses the exact one-sided derivatives, averaged in square at a corner,
/// so its trapezoidal integral converges to `h` at second order.
pub fn sample_u(s: &PeakonState, m: usize) -> EulerianState {
    let mut u = Vec::with_capacity(m);
    let mut density = Vec::with_capacity(m);
    for k in 0..m {
        let x = k as f64 / m as f64;
        let v = s.u(x);
        let (l, r) = s.ux_sides(x);
        u.push(v);
        density.push(v * v + 0.5 * (l * l + r * r));
    }
    EulerianState {
        m,
        u,
        density,
        atoms: Vec::new(),
    }
}

/// Peakon and antipeakon `p = (A, -A)` at `q = (1/2 - delta, 1/2 + delta)`.
pub fn antisymmetric_pair(a: f64, delta: f64) -> Result<PeakonState> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("amplitude {a} must be positive")));
    }
    if !(delta > 0.0 && delta < 0.25) {
        return Err(Error::domain(format!(
            "half-separation {delta} outside (0, 1/4)"
        )));
    }
    PeakonState::new(vec![a, -a], vec![0.5 - delta, 0.5 + delta])
}

/// Closed-form `G(x) = x + ∫_0^x (u^2 + u_x^2)` of a multipeakon on one period.
///
/// Between consecutive positions `u = a e^x + b e^{-x}`, so the density integrates to
/// `a^2 e^{2x} - b^2 e^{-2x}`.
struct EnergyCdf {
    starts: Vec<f64>,
    coef: Vec<(f64, f64)>,
    base: Vec<f64>,
    period: f64,
}

impl EnergyCdf {
    fn new(s: &PeakonState) -> Self {
        let mut starts = vec![0.0];
        starts.extend(s.q.iter().copied().filter(|&q| q > 0.0));
        let scale = 2.0 * two_sinh_half();
        let coef: Vec<(f64, f64)> = starts
            .iter()
            .map(|&a| {
                s.p.iter().zip(&s.q).fold((0.0, 0.0), |(ca, cb), (p, &q)| {
                    let c = q + 0.5 - if a < q { 1.0 } else { 0.0 };
                    (ca + p * (-c).exp() / scale, cb + p * c.exp() / scale)
                })
            })
            .collect();
        let prim = |i: usize, x: f64| {
            let (a, b) = coef[i];
            a * a * (2.0 * x).exp() - b * b * (-2.0 * x).exp()
        };
        let mut base = vec![0.0; starts.len()];
        for i in 1..starts.len() {
            base[i] = base[i - 1] + prim(i - 1, starts[i]) - prim(i - 1, starts[i - 1]);
        }
        let last = starts.len() - 1;
        let period = 1.0 + base[last] + prim(last, 1.0) - prim(last, starts[last]);
        EnergyCdf {
            starts,
            coef,
            base,
            period,
        }
    }

    fn piece(&self, x: f64) -> usize {
        self.starts.partition_point(|&a| a <= x).saturating_sub(1)
    }

    /// `G` on `[0, 1]`.
    fn eval(&self, x: f64) -> f64 {
        let i = self.piece(x);
        let (a, b) = self.coef[i];
        let prim = |x: f64| a * a * (2.0 * x).exp() - b * b * (-2.0 * x).exp();
        x + self.base[i] + prim(x) - prim(self.starts[i])
    }

    /// `G^{-1}(s)` for any real `s`, using `G(x + 1) = G(x) + period`.
    fn inverse(&self, s: f64) -> f64 {
        let k = (s / self.period).floor();
        let r = s - k * self.period;
        let (mut lo, mut hi) = (0.0, 1.0);
        // G' >= 1, so bisection on [0, 1] resolves x to rounding in ~55 halvings
        while hi - lo > 4.0 * f64::EPSILON {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        k + 0.5 * (lo + hi)
    }
}

/// Lagrangian image of a multipeakon with every corner on a half-node `(k + 1/2)/n`.
///
/// The state is the `H` representative composed with a piecewise-linear relabeling
/// that pins the corners between grid nodes. Corners follow characteristics, so they
/// stay there for all time and the node quadrature never straddles one. All fields
/// are evaluated in closed form; `y_xi` and `nu` are cell differences over
/// `[xi_{j-1/2}, xi_{j+1/2}]`, so `trapz(nu) = h` to rounding.
pub fn aligned_lagrangian(s: &PeakonState, n: usize) -> Result<LagrangianState> {
    if n < 64 || !n.is_power_of_two() {
        return Err(Error::GridSize(n));
    }
    let cdf = EnergyCdf::new(s);
    let period = cdf.period;
    let nf = n as f64;
    let xi = |j: f64| j / nf;
    let int_y = |c: f64| {
        let v: Vec<f64> = (0..n)
            .map(|j| cdf.inverse(period * (xi(j as f64) + c)) - xi(j as f64))
            .collect();
        grid::trapz(&v) + 0.5
    };
    // the centering only picks which half-nodes the corners go to
    let c = -int_y(0.0);
    let zeta: Vec<f64> = s.q.iter().map(|&q| cdf.eval(q) / period).collect();
    let anchors: Vec<f64> = zeta
        .iter()
        .map(|&z| ((nf * (z - c) - 0.5).round() + 0.5) / nf)
        .collect();
    let k = zeta.len();
    if (1..k).any(|i| anchors[i] <= anchors[i - 1]) || anchors[k - 1] >= anchors[0] + 1.0 {
        return Err(Error::domain(
            "peakons closer than one grid cell in energy label",
        ));
    }
    let phi = |x: f64| -> f64 {
        let shift = (x - anchors[0]).floor();
        let r = x - shift;
        let i = anchors.partition_point(|&a| a <= r) - 1;
        let (a0, z0) = (anchors[i], zeta[i]);
        let (a1, z1) = if i + 1 < k {
            (anchors[i + 1], zeta[i + 1])
        } else {
            (anchors[0] + 1.0, zeta[0] + 1.0)
        };
        shift + z0 + (r - a0) * (z1 - z0) / (a1 - a0)
    };
    let y_at = |x: f64| cdf.inverse(period * phi(x));
    let half: Vec<f64> = (0..=n).map(|j| y_at((j as f64 - 0.5) / nf)).collect();
    let mut out = LagrangianState::rest(n);
    for j in 0..n {
        let x = xi(j as f64);
        let y = y_at(x);
        let yxi = nf * (half[j + 1] - half[j]);
        let mass = period * nf * (phi(x + 0.5 / nf) - phi(x - 0.5 / nf));
        let nu = (mass - yxi).max(0.0);
        let mut u = s.u(y);
        let (l, r) = s.ux_sides(y);
        let mut uxi = 0.5 * (l + r) * yxi;
        restore_compat(yxi, nu, &mut u, &mut uxi);
        out.y[j] = y - x;
        out.yxi[j] = yxi;
        out.nu[j] = nu;
        out.u[j] = u;
        out.uxi[j] = uxi;
    }
    Ok(out)
}

fn vector_field(p: &[f64], q: &[f64], dp: &mut [f64], dq: &mut [f64]) {
    let k = p.len();
    for i in 0..k {
        let (mut a, mut b) = (0.0, 0.0);
        for j in 0..k {
            let d = q[i] - q[j];
            a += p[j] * green(d);
            b += p[j] * green_prime(d);
        }
        dq[i] = a;
        dp[i] = -p[i] * b;
    }
}

fn rk4_step(p: &mut [f64], q: &mut [f64], h: f64) {
    let k = p.len();
    let mut kp = [vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]];
    let mut kq = kp.clone();
    let mut tp = vec![0.0; k];
    let mut tq = vec![0.0; k];
    vector_field(p, q, &mut kp[0], &mut kq[0]);
    for stage in 1..4 {
        let c = if stage == 3 { h } else { 0.5 * h };
        for i in 0..k {
            tp[i] = p[i] + c * kp[stage - 1][i];
            tq[i] = q[i] + c * kq[stage - 1][i];
        }
        let (dp, dq) = (&mut kp[stage], &mut kq[stage]);
        vector_field(&tp, &tq, dp, dq);
    }
    for i in 0..k {
        p[i] += h / 6.0 * (kp[0][i] + 2.0 * kp[1][i] + 2.0 * kp[2][i] + kp[3][i]);
        q[i] += h / 6.0 * (kq[0][i] + 2.0 * kq[1][i] + 2.0 * kq[2][i] + kq[3][i]);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakonTrajectory {
    pub states: Vec<PeakonState>,
    /// Time at which two positions came closer than `10 dt max|u|`, if they did.
    pub near_collision: Option<f64>,
}

impl PeakonTrajectory {
    pub fn last(&self) -> &PeakonState {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }
}

/// RK4 for `q_i' = sum_j p_j G(q_i - q_j)`, `p_i' = -p_i sum_j p_j G'(q_i - q_j)`.
///
/// Steps have length at most `dt` and land on `t_end`. Integration stops early when
/// two peakons come within `10 dt max|u|` of each other.
pub fn evolve_peakons(s0: &PeakonState, dt: f64, t_end: f64) -> Result<PeakonTrajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::domain("dt must be positive and t_end nonnegative"));
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if steps == 0 {
        0.0
    } else {
        t_end / steps as f64
    };
    let mut p = s0.p.clone();
    let mut q = s0.q.clone();
    let mut states = vec![s0.clone()];
    let mut near_collision = None;
    for i in 1..=steps {
        rk4_step(&mut p, &mut q, h);
        let mut s = PeakonState {
            p: p.clone(),
            q: q.clone(),
            t: s0.t + i as f64 * h,
        };
        s.normalize();
        let margin = 10.0 * dt * s.umax();
        let stop = !s.p.iter().chain(&s.q).all(|v| v.is_finite()) || s.min_gap() < margin;
        if stop {
            near_collision = Some(s.t);
            break;
        }
        states.push(s);
    }
    Ok(PeakonTrajectory {
        states,
        near_collision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_sum(x: f64) -> f64 {
        (-40..=40)
            .map(|k| 0.5 * (-(x - k as f64).abs()).exp())
            .sum()
    }

    #[test]
    fn green_values() {
        assert!((green(0.0) - 1.081_976_7).abs() < 1e-7);
        assert!((green(0.5) - 0.959_517_4).abs() < 1e-7);
        assert!((green(0.0) - 0.5 / (0.5_f64).tanh()).abs() < 1e-15);
        for &x in &[0.0, 0.1, 0.5, 0.73, -0.2, 1.3] {
            assert!((green(x) - image_sum(x)).abs() < 1e-13, "{x}");
            assert!((green(x) - green(-x)).abs() < 1e-15);
            assert!((green(x) - green(1.0 - x)).abs() < 1e-14);
        }
        assert_eq!(green_prime(0.0), 0.0);
        // jump of -1 in G' at the integers
        let e = 1e-9;
        assert!((green_prime(e) - green_prime(-e) + 1.0).abs() < 1e-8);
    }

    #[test]
    fn green_solves_helmholtz_weakly() {
        // int G (phi - phi'') = phi(0) for a smooth periodic phi
        let m = 1 << 14;
        let tau = 2.0 * std::f64::consts::PI;
        let phi = |x: f64| (tau * x).cos() + 0.3 * (2.0 * tau * x).sin();
        let lap =
            |x: f64| -tau * tau * (tau * x).cos() - 0.3 * 4.0 * tau * tau * (2.0 * tau * x).sin();
        let s: f64 = (0..m)
            .map(|k| {
                let x = k as f64 / m as f64;
                green(x) * (phi(x) - lap(x))
            })
            .sum::<f64>()
            / m as f64;
        assert!((s - phi(0.0)).abs() < 1e-6);
    }

    #[test]
    fn single_peakon_profile_and_energy() {
        let s = PeakonState::new(vec![1.0], vec![0.3]).unwrap();
        let e = sample_u(&s, 1000);
        let imax =
            e.u.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
        assert_eq!(imax, 300);
        assert!((e.u[300] - green(0.0)).abs() < 1e-14);
        // frozen dense-quadrature value at m = 2^16
        let dense = sample_u(&s, 1 << 16).h();
        assert!((dense - 1.081_976_7).abs() < 1e-6);
        assert!((s.energy() - green(0.0)).abs() < 1e-15);
    }

    #[test]
    fn antisymmetric_profile_is_odd() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        assert!(s.u(0.5).abs() < 1e-15);
        for &x in &[0.1, 0.27, 0.4] {
            assert!((s.u(0.5 + x) + s.u(0.5 - x)).abs() < 1e-14);
        }
        assert!(antisymmetric_pair(-1.0, 0.1).is_err());
        assert!(antisymmetric_pair(1.0, 0.3).is_err());
    }

    #[test]
    fn single_peakon_translates() {
        let s = PeakonState::new(vec![0.7], vec![0.2]).unwrap();
        let tr = evolve_peakons(&s, 1e-3, 1.0).unwrap();
        let last = tr.last();
        let expect = (0.2 + 0.7 * green(0.0) * 1.0).rem_euclid(1.0);
        assert!((last.q[0] - expect).abs() < 1e-12);
        assert_eq!(last.p[0], 0.7);
        assert!(tr.near_collision.is_none());
    }

    #[test]
    fn pair_invariants() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        let tr = evolve_peakons(&s, 1e-4, 1.0).unwrap();
        let h0 = s.hamiltonian();
        for st in &tr.states {
            assert!((st.p[0] + st.p[1]).abs() < 1e-10);
            assert!((st.q[0] + st.q[1] - 1.0).abs() < 1e-10);
            assert!(((st.hamiltonian() - h0) / h0).abs() < 1e-8);
            assert!(st.momentum().abs() < 1e-10);
        }
    }

    #[test]
    fn collision_halts_integration() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        let tr = evolve_peakons(&s, 1e-3, 10.0).unwrap();
        let t = tr.near_collision.expect("pair collides");
        let last = tr.last();
        assert!(last.min_gap() < 0.02);
        assert!(last.p[0].abs() > 5.0);
        assert!(t > 0.5 && t < 10.0);
    }

    #[test]
    fn closed_form_cumulative_energy() {
        let s = PeakonState::new(vec![1.0, -0.6, 0.3], vec![0.2, 0.45, 0.8]).unwrap();
        let cdf = EnergyCdf::new(&s);
        assert!((cdf.period - 1.0 - s.energy()).abs() < 1e-14);
        // midpoint rule on a fine grid, split at the corners
        let mut acc = 0.0;
        for (a, b) in [(0.0, 0.2), (0.2, 0.45), (0.45, 0.6)] {
            let m = 100_000;
            let w = (b - a) / m as f64;
            for k in 0..m {
                let x = a + (k as f64 + 0.5) * w;
                let (l, _) = s.ux_sides(x);
                acc += (1.0 + s.u(x).powi(2) + l * l) * w;
            }
        }
        assert!(
            (cdf.eval(0.6) - acc).abs() < 1e-9,
            "{} {acc}",
            cdf.eval(0.6)
        );
        let r = cdf.inverse(cdf.eval(0.37) + 2.0 * cdf.period);
        assert!((r - 2.37).abs() < 1e-14);
    }

    #[test]
    fn aligned_image_is_exact() {
        let s = antisymmetric_pair(1.0, 0.15).unwrap();
        let x = aligned_lagrangian(&s, 256).unwrap();
        let r = crate::state::check_membership(&x, &Default::default());
        assert!(r.in_f, "{r:?}");
        assert!((x.h() - s.energy()).abs() < 1e-13);
        for j in 0..x.n {
            assert!((x.u[j] - s.u(x.y_full(j))).abs() < 1e-13);
        }
        // corners move by at most half a cell, so the image stays nearly centred
        assert!(x.int_y().abs() < 1e-3);
        assert!(aligned_lagrangian(&s, 100).is_err());
    }
}
