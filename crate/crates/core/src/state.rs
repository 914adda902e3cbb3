//! Lagrangian states, the E-norm, membership tests and the relabeling action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Cumulative};

/// Grid samples of `(y, U, y_xi, U_xi, nu)` on one period.
///
/// `y` holds the periodic part `y(xi_j) - xi_j`; the full map is recovered with
/// [`LagrangianState::y_full`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub n: usize,
    pub t: f64,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub yxi: Vec<f64>,
    pub uxi: Vec<f64>,
    pub nu: Vec<f64>,
}

pub fn check_grid_size(n: usize) -> Result<()> {
    if n >= 64 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::GridSize(n))
    }
}

impl LagrangianState {
    pub fn new(
        t: f64,
        y: Vec<f64>,
        u: Vec<f64>,
        yxi: Vec<f64>,
        uxi: Vec<f64>,
        nu: Vec<f64>,
    ) -> Result<Self> {
        let s = LagrangianState {
            n: y.len(),
            t,
            y,
            u,
            yxi,
            uxi,
            nu,
        };
        s.validate()?;
        Ok(s)
    }

    /// `y = xi`, `U = 0`, `nu = 0`.
    pub fn rest(n: usize) -> Self {
        LagrangianState {
            n,
            t: 0.0,
            y: vec![0.0; n],
            u: vec![0.0; n],
            yxi: vec![1.0; n],
            uxi: vec![0.0; n],
            nu: vec![0.0; n],
        }
    }

    /// Structural checks: grid size, array lengths, finite values.
    pub fn validate(&self) -> Result<()> {
        check_grid_size(self.n)?;
        for v in [&self.y, &self.u, &self.yxi, &self.uxi, &self.nu] {
            if v.len() != self.n {
                return Err(Error::Dimension(self.n, v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain("non-finite sample"));
            }
        }
        Ok(())
    }

    /// Total energy `h`, the trapezoidal integral of `nu`.
    pub fn h(&self) -> f64 {
        grid::trapz(&self.nu)
    }

    #[inline]
    pub fn y_full(&self, j: usize) -> f64 {
        grid::node(j, self.n) + self.y[j]
    }

    /// `int_0^1 y dxi` of the full map.
    pub fn int_y(&self) -> f64 {
        grid::trapz(&self.y) + 0.5
    }

    /// Worst pointwise violation of `y_xi nu = y_xi^2 U^2 + U_xi^2`.
    pub fn compat_residual(&self) -> f64 {
        (0..self.n)
            .map(|j| {
                let (a, u, b, nu) = (self.yxi[j], self.u[j], self.uxi[j], self.nu[j]);
                (a * nu - a * a * u * u - b * b).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `int y_xi - 1`; zero for a carried `y_xi` consistent with the periodic `y`.
    pub fn quad_residual(&self) -> f64 {
        grid::trapz(&self.yxi) - 1.0
    }

    pub fn umax(&self) -> f64 {
        grid::linf(&self.u)
    }

    /// `||U||_{W11} + ||y_xi||_{L1} + ||nu||_{L1}`, the quantity bounded by `M` in `B_M`.
    pub fn ball_norm(&self) -> f64 {
        grid::linf(&self.u) + grid::l1(&self.uxi) + grid::l1(&self.yxi) + grid::l1(&self.nu)
    }
}

/// Thresholds that turn the almost-everywhere conditions into grid inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Compatibility residual, relative to `(1+h)^2`.
    pub compat: f64,
    /// `int y_xi = 1` and `int y = 0`.
    pub quad: f64,
    /// `y_xi + nu = 1 + h`, relative to `1 + h`.
    pub f0: f64,
    /// Largest negative `y_xi` or `nu` accepted as rounding.
    pub clamp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            compat: 1e-8,
            quad: 1e-10,
            f0: 1e-8,
            clamp: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub in_f: bool,
    pub in_f0: bool,
    pub in_h: bool,
    /// Grid infimum of `y_xi + nu`.
    pub c_lower: f64,
    /// Smallest `alpha` with the state in `F_alpha`.
    pub alpha: f64,
    pub h: f64,
    pub enorm_bound: f64,
    pub compat_residual: f64,
    /// `int y_xi - 1`, reported but not part of `in_f` (see README).
    pub quad_residual: f64,
    pub int_y: f64,
}

impl MembershipReport {
    pub fn in_ball(&self, m: f64) -> bool {
        self.enorm_bound <= m
    }

    /// `H^M`: normalized states with energy at most `m`.
    pub fn in_h_m(&self, m: f64) -> bool {
        self.in_h && self.h <= m
    }
}

pub fn check_membership(x: &LagrangianState, tol: &Tolerances) -> MembershipReport {
    let h = x.h();
    let s = 1.0 + h;
    let mut c_lower = f64::INFINITY;
    let mut c_upper = 0.0_f64;
    let mut dev_f0 = 0.0_f64;
    let mut min_yxi = f64::INFINITY;
    let mut min_nu = f64::INFINITY;
    for j in 0..x.n {
        let c = x.yxi[j] + x.nu[j];
        c_lower = c_lower.min(c);
        c_upper = c_upper.max(c);
        dev_f0 = dev_f0.max((c - s).abs());
        min_yxi = min_yxi.min(x.yxi[j]);
        min_nu = min_nu.min(x.nu[j]);
    }
    let compat = x.compat_residual();
    let alpha = if c_lower > 0.0 {
        (c_upper / s - 1.0).max(s / c_lower - 1.0).max(0.0)
    } else {
        f64::INFINITY
    };
    let in_f = min_yxi >= -tol.clamp
        && min_nu >= -tol.clamp
        && c_lower > 0.0
        && compat <= tol.compat * s * s;
    let in_f0 = in_f && dev_f0 <= tol.f0 * s;
    let int_y = x.int_y();
    let in_h = in_f0 && int_y.abs() <= tol.quad;
    MembershipReport {
        in_f,
        in_f0,
        in_h,
        c_lower,
        alpha,
        h,
        enorm_bound: x.ball_norm(),
        compat_residual: compat,
        quad_residual: x.quad_residual(),
        int_y,
    }
}

/// E-norm of the difference: grid max for the `L_inf` terms, trapezoid for the `L1` terms.
pub fn enorm_diff(a: &LagrangianState, b: &LagrangianState) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::Dimension(a.n, b.n));
    }
    let sup = |p: &[f64], q: &[f64]| {
        p.iter()
            .zip(q)
            .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let l1 = |p: &[f64], q: &[f64]| {
        grid::neumaier_sum(p.iter().zip(q).map(|(x, y)| (x - y).abs())) / p.len() as f64
    };
    Ok(sup(&a.y, &b.y)
        + l1(&a.yxi, &b.yxi)
        + sup(&a.u, &b.u)
        + l1(&a.uxi, &b.uxi)
        + l1(&a.nu, &b.nu))
}

/// Monotone grid homeomorphism with `f(xi+1) = f(xi) + 1`; `f` holds `f(xi_j) - xi_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relabeling {
    pub n: usize,
    pub f: Vec<f64>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Relabeling { n, f: vec![0.0; n] }
    }

    /// Samples a full map `xi -> f(xi)` on the grid.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        Relabeling {
            n,
            f: (0..n)
                .map(|j| {
                    let xi = grid::node(j, n);
                    f(xi) - xi
                })
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.f.iter().all(|&v| v == 0.0)
    }

    #[inline]
    pub fn full(&self, j: usize) -> f64 {
        grid::node(j, self.n) + self.f[j]
    }

    /// Evaluates the full map at any real argument through the monotone cubic Hermite
    /// interpolant of the samples, see [`Relabeling::knot_slopes`].
    pub fn eval(&self, s: f64) -> f64 {
        self.eval_with(&self.knot_slopes(), s)
    }

    /// Knot slopes of the interpolant: harmonic means of the neighbouring secants.
    ///
    /// They are second-order accurate and keep every cubic segment increasing.
    pub fn knot_slopes(&self) -> Vec<f64> {
        let n = self.n;
        let sec = self.scaled_increments();
        (0..n)
            .map(|k| {
                let (a, b) = (sec[(k + n - 1) % n], sec[k]);
                if a > 0.0 && b > 0.0 {
                    2.0 * a * b / (a + b)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn eval_with(&self, slopes: &[f64], s: f64) -> f64 {
        let n = self.n;
        let nf = n as f64;
        let x = s * nf;
        let kf = x.floor();
        let t = x - kf;
        let wrap = kf.div_euclid(nf);
        let k = (kf as i64).rem_euclid(n as i64) as usize;
        let k1 = if k + 1 == n { 0 } else { k + 1 };
        let a = self.full(k);
        let b = if k1 == 0 {
            self.full(0) + 1.0
        } else {
            self.full(k1)
        };
        wrap + hermite(a, b, slopes[k] / nf, slopes[k1] / nf, t)
    }

    /// `n (f_{j+1} - f_j)` including the wrap-around increment.
    pub fn scaled_increments(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|j| {
                let next = if j + 1 == n {
                    self.full(0) + 1.0
                } else {
                    self.full(j + 1)
                };
                n as f64 * (next - self.full(j))
            })
            .collect()
    }

    pub fn check_monotone(&self) -> Result<()> {
        if self.f.len() != self.n {
            return Err(Error::Dimension(self.n, self.f.len()));
        }
        match self.scaled_increments().iter().position(|&d| !(d > 0.0)) {
            None => Ok(()),
            Some(j) => Err(Error::domain(format!(
                "relabeling not strictly increasing at node {j}"
            ))),
        }
    }

    /// Smallest `alpha` with `1/(1+alpha) <= n Δf <= 1+alpha`.
    pub fn alpha(&self) -> f64 {
        let d = self.scaled_increments();
        let lo = d.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = d.iter().copied().fold(0.0, f64::max);
        if lo <= 0.0 {
            return f64::INFINITY;
        }
        (hi - 1.0).max(1.0 / lo - 1.0).max(0.0)
    }

    /// `self ∘ inner`, so that `(X • self) • inner = X • (self ∘ inner)`.
    pub fn compose(&self, inner: &Relabeling) -> Result<Relabeling> {
        if self.n != inner.n {
            return Err(Error::Dimension(self.n, inner.n));
        }
        let n = self.n;
        let slopes = self.knot_slopes();
        Ok(Relabeling {
            n,
            f: (0..n)
                .map(|j| self.eval_with(&slopes, inner.full(j)) - grid::node(j, n))
                .collect(),
        })
    }
}

/// Cubic Hermite segment on `[0, 1]` with end values `a`, `b` and end slopes `ma`, `mb`.
#[inline]
pub(crate) fn hermite(a: f64, b: f64, ma: f64, mb: f64, t: f64) -> f64 {
    let (t2, t3) = (t * t, t * t * t);
    (2.0 * t3 - 3.0 * t2 + 1.0) * a
        + (t3 - 2.0 * t2 + t) * ma
        + (-2.0 * t3 + 3.0 * t2) * b
        + (t3 - t2) * mb
}

/// `t` in `[0, 1]` with `hermite(a, b, ma, mb, t) = r` on an increasing segment.
pub(crate) fn hermite_solve(a: f64, b: f64, ma: f64, mb: f64, r: f64) -> f64 {
    let dh = |t: f64| {
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) * (a - b) + (3.0 * t2 - 4.0 * t + 1.0) * ma + (3.0 * t2 - 2.0 * t) * mb
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut t = ((r - a) / (b - a)).clamp(0.0, 1.0);
    for _ in 0..60 {
        let v = hermite(a, b, ma, mb, t) - r;
        if v == 0.0 {
            return t;
        }
        if v < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = dh(t);
        let next = if d > 0.0 { t - v / d } else { f64::NAN };
        t = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 {
            break;
        }
    }
    t
}

/// Makes `y_xi nu = y_xi^2 U^2 + U_xi^2` hold at one node.
///
/// `y_xi` and `nu` are kept, so `y_xi + nu` and the energy are untouched; `|U_xi|`
/// is recomputed with the sign of the incoming value. When interpolation left
/// `nu < y_xi U^2`, `|U|` is lowered onto the boundary instead.
#[inline]
pub(crate) fn restore_compat(yxi: f64, nu: f64, u: &mut f64, uxi: &mut f64) {
    let disc = yxi * (nu - yxi * *u * *u);
    if disc >= 0.0 {
        let m = disc.sqrt();
        *uxi = if *uxi < 0.0 { -m } else { m };
    } else {
        *uxi = 0.0;
        *u = u.signum() * (nu / yxi).sqrt();
    }
}

/// Cell integrals `n ∫_{a_j}^{b_j} v` of the piecewise-linear interpolant of `v`.
fn remap(v: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let c = Cumulative::new(v);
    let n = v.len() as f64;
    a.iter()
        .zip(b)
        .map(|(&a, &b)| n * (c.at(b) - c.at(a)))
        .collect()
}

/// `X • f`.
///
/// `y` and `U` are composed by linear interpolation. The derivative fields follow the
/// chain rule in cell-integrated form: with `f_{j±1/2}` the midpoints of neighbouring
/// samples, `nu_bar_j = n ∫_{f_{j-1/2}}^{f_{j+1/2}} nu`, which is `(nu∘f) f_xi` up to
/// second order with `f_xi` the centered difference, and keeps `∫nu`, `∫y_xi` exact.
pub fn apply_relabeling(x: &LagrangianState, f: &Relabeling) -> Result<LagrangianState> {
    if x.n != f.n {
        return Err(Error::Dimension(x.n, f.n));
    }
    if f.is_identity() {
        return Ok(x.clone());
    }
    f.check_monotone()?;
    let n = x.n;
    let full: Vec<f64> = (0..n).map(|j| f.full(j)).collect();
    let hi: Vec<f64> = (0..n)
        .map(|j| {
            let next = if j + 1 == n {
                full[0] + 1.0
            } else {
                full[j + 1]
            };
            0.5 * (full[j] + next)
        })
        .collect();
    let lo: Vec<f64> = (0..n)
        .map(|j| if j == 0 { hi[n - 1] - 1.0 } else { hi[j - 1] })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|j| f.f[j] + grid::interp(&x.y, full[j]))
        .collect();
    let mut u: Vec<f64> = full.iter().map(|&s| grid::interp(&x.u, s)).collect();
    let yxi: Vec<f64> = remap(&x.yxi, &lo, &hi)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let nu: Vec<f64> = remap(&x.nu, &lo, &hi)
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let mut uxi = remap(&x.uxi, &lo, &hi);
    for j in 0..n {
        restore_compat(yxi[j], nu[j], &mut u[j], &mut uxi[j]);
    }
    Ok(LagrangianState {
        n,
        t: x.t,
        y,
        u,
        yxi,
        uxi,
        nu,
    })
}

/// `f = xi + amplitude * p(xi)` with `p` a trigonometric polynomial of at most four
/// random modes, scaled so that `1 - amplitude <= f_xi <= 1 + amplitude`.
pub fn random_relabeling(n: usize, amplitude: f64, seed: u64) -> Result<Relabeling> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::domain(format!(
            "amplitude {amplitude} outside [0, 1)"
        )));
    }
    if amplitude == 0.0 {
        return Ok(Relabeling::identity(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(1..=4usize);
    let mut ks: Vec<f64> = (1..=4).map(f64::from).collect();
    for i in 0..count {
        let j = rng.gen_range(i..4);
        ks.swap(i, j);
    }
    let modes: Vec<(f64, f64, f64)> = ks[..count]
        .iter()
        .map(|&k| (k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let tau = 2.0 * std::f64::consts::PI;
    let scale: f64 = modes
        .iter()
        .map(|(k, a, b)| tau * k * (a.abs() + b.abs()))
        .sum();
    let c = amplitude / scale;
    Ok(Relabeling::from_fn(n, |xi| {
        xi + c * modes
            .iter()
            .map(|(k, a, b)| a * (tau * k * xi).sin() + b * (tau * k * xi).cos())
            .sum::<f64>()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::smooth_state;

    #[test]
    fn enorm_of_constant_velocity_shift() {
        let a = LagrangianState::rest(128);
        let mut b = a.clone();
        b.u.iter_mut().for_each(|v| *v = 0.5);
        assert_eq!(enorm_diff(&a, &a).unwrap(), 0.0);
        assert_eq!(enorm_diff(&a, &b).unwrap(), 0.5);
        assert!(matches!(
            enorm_diff(&a, &LagrangianState::rest(256)),
            Err(Error::Dimension(..))
        ));
    }

    #[test]
    fn rest_state_membership() {
        let r = check_membership(&LagrangianState::rest(64), &Tolerances::default());
        assert!(r.in_f && r.in_f0);
        assert_eq!(r.c_lower, 1.0);
        assert_eq!(r.h, 0.0);
        // int y = 1/2 for y = xi, so the rest state is not centered
        assert!(!r.in_h);
        let mut c = LagrangianState::rest(64);
        c.y.iter_mut().for_each(|v| *v = -0.5);
        assert!(check_membership(&c, &Tolerances::default()).in_h);
    }

    #[test]
    fn degenerate_cell_leaves_f() {
        let mut x = LagrangianState::rest(64);
        x.yxi[10] = 0.0;
        let r = check_membership(&x, &Tolerances::default());
        assert!(!r.in_f);
        assert_eq!(r.c_lower, 0.0);
    }

    #[test]
    fn identity_relabeling_is_exact() {
        let x = smooth_state(128, 3, 0.5);
        let y = apply_relabeling(&x, &Relabeling::identity(128)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn relabeling_keeps_energy_and_compatibility() {
        let x = smooth_state(1024, 11, 0.8);
        let f = random_relabeling(1024, 0.6, 5).unwrap();
        let y = apply_relabeling(&x, &f).unwrap();
        let h = x.h();
        assert!((y.h() - h).abs() <= 1e-10 * (1.0 + h));
        assert!((grid::l1(&y.yxi) - grid::l1(&x.yxi)).abs() < 1e-12);
        assert!(y.compat_residual() <= 1e-8 * (1.0 + h).powi(2));
        assert!(check_membership(&y, &Tolerances::default()).in_f);
    }

    #[test]
    fn random_relabeling_bounds() {
        assert!(random_relabeling(256, 0.0, 9).unwrap().is_identity());
        let f = random_relabeling(1024, 0.5, 7).unwrap();
        assert!(f.check_monotone().is_ok());
        assert!(f.alpha() <= 1.0);
        let d = f.scaled_increments();
        assert!(d.iter().all(|&v| (0.5 - 1e-9..=1.5 + 1e-9).contains(&v)));
        assert_eq!(f, random_relabeling(1024, 0.5, 7).unwrap());
        assert_ne!(f, random_relabeling(1024, 0.5, 8).unwrap());
        assert!(random_relabeling(64, 1.0, 0).is_err());
    }

    #[test]
    fn non_monotone_relabeling_rejected() {
        let mut f = Relabeling::identity(64);
        f.f[5] = 0.1;
        let x = LagrangianState::rest(64);
        assert!(matches!(apply_relabeling(&x, &f), Err(Error::Domain(_))));
    }
}
