//! The projections `Π1` (into `F0`), `Π2` (into `H`), `Π`, and the normalized flow.

use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolveConfig};
use crate::grid::{self, Cumulative};
use crate::state::{apply_relabeling, hermite_solve, restore_compat, LagrangianState, Relabeling};

/// `f = (y + int_0^xi nu) / (1 + h)`.
pub fn canonical_relabeling(x: &LagrangianState) -> Result<Relabeling> {
    x.validate()?;
    if x.nu.iter().chain(&x.yxi).any(|&v| v < 0.0) {
        return Err(Error::domain("negative y_xi or nu"));
    }
    let s = 1.0 + x.h();
    let cum = Cumulative::new(&x.nu);
    let n = x.n;
    let f = Relabeling {
        n,
        f: (0..n)
            .map(|j| (x.y_full(j) + cum.nodes()[j]) / s - grid::node(j, n))
            .collect(),
    };
    f.check_monotone()?;
    Ok(f)
}

/// Inverse sampled on the grid.
///
/// `f` is read as its monotone cubic Hermite interpolant. A piecewise-linear inverse would put an `O(Δ^2)`
/// non-smooth error on the samples, which the difference quotients used by
/// [`apply_relabeling`] turn into `O(Δ)`.
pub fn invert_relabeling(f: &Relabeling) -> Result<Relabeling> {
    f.check_monotone()?;
    if f.is_identity() {
        return Ok(f.clone());
    }
    let n = f.n;
    let nf = n as f64;
    let vals: Vec<f64> = (0..n).map(|k| f.full(k)).collect();
    let slope = f.knot_slopes();
    let f0 = vals[0];
    let g = (0..n)
        .map(|j| {
            let s = grid::node(j, n);
            let wrap = (s - f0).floor();
            let r = s - wrap;
            let k = vals.partition_point(|&v| v <= r).max(1) - 1;
            let (a, b) = (vals[k], if k + 1 == n { f0 + 1.0 } else { vals[k + 1] });
            let (ma, mb) = (slope[k] / nf, slope[(k + 1) % n] / nf);
            let t = hermite_solve(a, b, ma, mb, r);
            grid::node(k, n) + t / nf + wrap - s
        })
        .collect();
    Ok(Relabeling { n, f: g })
}

fn in_f0(x: &LagrangianState, tol: f64) -> bool {
    let s = 1.0 + x.h();
    (0..x.n).all(|j| (x.yxi[j] + x.nu[j] - s).abs() <= tol * s)
}

const F0_TOL: f64 = 1e-12;

/// `X(xi - a)`, by linear interpolation of the periodic parts.
///
/// Node weights of the interpolant sum to one, so trapezoid integrals are unchanged.
pub fn translate(x: &LagrangianState, a: f64) -> LagrangianState {
    if a == 0.0 {
        return x.clone();
    }
    let n = x.n;
    let at = |v: &[f64], j: usize| grid::interp(v, grid::node(j, n) - a);
    let mut out = x.clone();
    for j in 0..n {
        out.y[j] = at(&x.y, j) - a;
        out.yxi[j] = at(&x.yxi, j);
        out.nu[j] = at(&x.nu, j);
        out.u[j] = at(&x.u, j);
        out.uxi[j] = at(&x.uxi, j);
        restore_compat(out.yxi[j], out.nu[j], &mut out.u[j], &mut out.uxi[j]);
    }
    out
}

/// `Π1(X) = X • f^{-1}` with `f` the canonical relabeling.
///
/// `nu` is remapped conservatively and `y_xi` is then set to `1 + h - nu`, so the
/// output satisfies the `F0` identity to rounding. On `F0` inputs `f` is the
/// translation by `y(0)/(1+h)` and is applied as such.
pub fn pi1(x: &LagrangianState) -> Result<LagrangianState> {
    let s = 1.0 + x.h();
    if in_f0(x, F0_TOL) {
        return Ok(translate(x, x.y[0] / s));
    }
    let f = canonical_relabeling(x)?;
    let g = invert_relabeling(&f)?;
    let mut out = apply_relabeling(x, &g)?;
    for j in 0..out.n {
        out.yxi[j] = (s - out.nu[j]).max(0.0);
        restore_compat(out.yxi[j], out.nu[j], &mut out.u[j], &mut out.uxi[j]);
    }
    Ok(out)
}

/// `Π2(X) = X(xi - a)` with `a = int y`.
pub fn pi2(x: &LagrangianState) -> LagrangianState {
    translate(x, x.int_y())
}

/// `Π`: `Π1` first, then `Π2`.
///
/// On `F0` the translation of `Π1` and the one of `Π2` add up to a single shift by
/// `int y`, which is what gets applied; in particular `Π` is the identity on `H`.
pub fn pi(x: &LagrangianState) -> Result<LagrangianState> {
    if in_f0(x, F0_TOL) {
        return Ok(pi2(x));
    }
    Ok(pi2(&pi1(x)?))
}

/// A relabeling `w` with `X • w` equal to `Π(X)` up to interpolation error.
pub fn pi_relabeling(x: &LagrangianState) -> Result<Relabeling> {
    let n = x.n;
    let shift = |a: f64| Relabeling { n, f: vec![-a; n] };
    if in_f0(x, F0_TOL) {
        return Ok(shift(x.int_y()));
    }
    let g = invert_relabeling(&canonical_relabeling(x)?)?;
    let a = pi1(x)?.int_y();
    g.compose(&shift(a))
}

/// `S̄_t = Π ∘ S_t`.
pub fn bar_s_t(x0: &LagrangianState, cfg: &EvolveConfig) -> Result<LagrangianState> {
    let traj = evolve(x0, cfg)?;
    pi(traj.last())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples::smooth_state;
    use crate::state::{check_membership, enorm_diff, random_relabeling, Tolerances};

    #[test]
    fn canonical_relabeling_of_rest_is_identity() {
        let f = canonical_relabeling(&LagrangianState::rest(128)).unwrap();
        assert!(f.is_identity());
    }

    #[test]
    fn canonical_relabeling_increments() {
        let x = smooth_state(256, 3, 0.5);
        let rep = check_membership(&x, &Tolerances::default());
        let f = canonical_relabeling(&x).unwrap();
        let min = f
            .scaled_increments()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        // n Δf is a cell average of (y_xi + nu)/(1+h)
        assert!(min >= rep.c_lower / (1.0 + rep.h) * (1.0 - 1e-3));
    }

    #[test]
    fn inverse_round_trip() {
        let n = 1024;
        let tau = 2.0 * std::f64::consts::PI;
        let f = Relabeling::from_fn(n, |xi| xi + 0.1 * (tau * xi).sin() / tau);
        let g = invert_relabeling(&f).unwrap();
        let fg = f.compose(&g).unwrap();
        assert!(grid::linf(&fg.f) <= 1e-5);
        let ff = invert_relabeling(&g).unwrap();
        let d =
            ff.f.iter()
                .zip(&f.f)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d <= 1e-5);
        assert!(invert_relabeling(&Relabeling::identity(n))
            .unwrap()
            .is_identity());
    }

    #[test]
    fn affine_offset_is_recentered() {
        let mut x = LagrangianState::rest(256);
        x.y.iter_mut().for_each(|v| *v = 0.25);
        let out = pi2(&x);
        assert!(out.int_y().abs() < 1e-15);
        // the centered representative of y = xi + const is y = xi - 1/2
        assert!(out.y.iter().all(|&v| (v + 0.5).abs() < 1e-15));
        assert_eq!(pi2(&out), out);
    }

    #[test]
    fn pi_lands_in_h_and_is_idempotent() {
        let x = smooth_state(1024, 11, 0.4);
        let h = x.h();
        let p = pi(&x).unwrap();
        let rep = check_membership(&p, &Tolerances::default());
        assert!(rep.in_h, "{rep:?}");
        assert!(((p.h() - h) / h).abs() < 1e-10);
        let pp = pi(&p).unwrap();
        assert!(enorm_diff(&p, &pp).unwrap() <= 1e-6);
    }

    #[test]
    fn witness_reproduces_pi_at_second_order() {
        let err = |n: usize| {
            let x = smooth_state(n, 11, 0.1);
            let w = pi_relabeling(&x).unwrap();
            enorm_diff(&apply_relabeling(&x, &w).unwrap(), &pi(&x).unwrap()).unwrap()
        };
        // sign choices of U_xi at zero crossings make single doublings noisy
        let (a, b) = (err(256), err(1024));
        assert!(a / b > 8.0, "{a} {b}");
    }

    #[test]
    fn pi_forgets_relabeling() {
        let d = |n: usize| {
            let x = smooth_state(n, 5, 0.1);
            let f = random_relabeling(n, 0.3, 8).unwrap();
            let xf = apply_relabeling(&x, &f).unwrap();
            enorm_diff(&pi(&xf).unwrap(), &pi(&x).unwrap()).unwrap()
        };
        let (a, b) = (d(256), d(1024));
        assert!(b <= 2e-3, "{b}");
        assert!(a / b > 8.0, "{a} {b}");
    }
}
