//! The periodic nonlocal terms `Q = P_x ∘ y` and `P` in Lagrangian variables.
//!
//! Both are integrals of `w = U^2 y_xi + nu` against the period-1 kernel
//! `sum_k e^{-|d+k|}/4`, which on `d = y(xi) - y(eta)` in `[-1, 1]` reduces to a
//! `cosh`/`sinh` part with weight `1/(2(e-1))` and a one-sided exponential.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid;
use crate::state::LagrangianState;

/// `1/(2(e-1))`.
pub const C_PER: f64 = 0.5 / (std::f64::consts::E - 1.0);

#[derive(Clone, Debug, PartialEq)]
pub struct QpResult {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub qxi: Vec<f64>,
    pub pxi: Vec<f64>,
}

/// Constant of the sup bound `||Q|| <= C ||nu||_{L1}` on states with `U^2 y_xi <= nu`.
pub fn q_bound_constant() -> f64 {
    1f64.sinh() / (std::f64::consts::E - 1.0) + 1.0
}

fn check_input(x: &LagrangianState) -> Result<()> {
    x.validate()?;
    let slack = -1e-6 * (1.0 + x.h().abs());
    if x.yxi.iter().chain(&x.nu).any(|&v| v < slack) {
        return Err(Error::domain("negative y_xi or nu"));
    }
    Ok(())
}

fn weights(x: &LagrangianState) -> Vec<f64> {
    (0..x.n)
        .map(|j| x.u[j] * x.u[j] * x.yxi[j] + x.nu[j])
        .collect()
}

fn finish(x: &LagrangianState, q: Vec<f64>, p: Vec<f64>) -> QpResult {
    let qxi = (0..x.n)
        .map(|j| -0.5 * x.nu[j] - (0.5 * x.u[j] * x.u[j] - p[j]) * x.yxi[j])
        .collect();
    let pxi = (0..x.n).map(|j| q[j] * x.yxi[j]).collect();
    QpResult { q, p, qxi, pxi }
}

/// Direct `O(n^2)` trapezoidal quadrature of the kernel integrals.
///
/// `sign(0) = 0`, so the diagonal node contributes the mean of the two one-sided
/// kernel values.
pub fn qp_reference(x: &LagrangianState) -> Result<QpResult> {
    check_input(x)?;
    let n = x.n;
    let w = weights(x);
    let y: Vec<f64> = (0..n).map(|j| x.y_full(j)).collect();
    let (q, p): (Vec<f64>, Vec<f64>) = (0..n)
        .into_par_iter()
        .map(|j| {
            let qs = grid::neumaier_sum((0..n).map(|k| {
                let d = y[j] - y[k];
                let s = sign_index(j, k);
                (C_PER * d.sinh() - 0.25 * s * (-s * d).exp()) * w[k]
            }));
            let ps = grid::neumaier_sum((0..n).map(|k| {
                let d = y[j] - y[k];
                let s = sign_index(j, k);
                (C_PER * d.cosh() + 0.25 * (-s * d).exp()) * w[k]
            }));
            (qs / n as f64, ps / n as f64)
        })
        .unzip();
    Ok(finish(x, q, p))
}

#[inline]
fn sign_index(j: usize, k: usize) -> f64 {
    match j.cmp(&k) {
        std::cmp::Ordering::Greater => 1.0,
        std::cmp::Ordering::Less => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    }
}

/// Same contract as [`qp_reference`] in `O(n)`.
///
/// Every kernel term factors as `e^{±y(xi)}` times a global, prefix or suffix sum of
/// `e^{∓y(eta)} w(eta)`. `y` is shifted by `y(0)` first so the exponentials stay in
/// `[e^{-1}, e]`; the shift cancels in every product.
pub fn qp_fast(x: &LagrangianState) -> Result<QpResult> {
    check_input(x)?;
    let (q, p) = qp_fast_raw(x, &weights(x));
    Ok(finish(x, q, p))
}

/// `qp_fast` without the sign checks, for intermediate Runge–Kutta stages.
pub(crate) fn qp_fast_unchecked(x: &LagrangianState) -> Result<QpResult> {
    x.validate()?;
    let (q, p) = qp_fast_raw(x, &weights(x));
    Ok(finish(x, q, p))
}

pub(crate) fn qp_fast_raw(x: &LagrangianState, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.n;
    let y0 = x.y_full(0);
    let mut e = Vec::with_capacity(n);
    let mut ei = Vec::with_capacity(n);
    for j in 0..n {
        let s = x.y_full(j) - y0;
        e.push(s.exp());
        ei.push((-s).exp());
    }
    let a = grid::neumaier_sum((0..n).map(|k| ei[k] * w[k]));
    let b = grid::neumaier_sum((0..n).map(|k| e[k] * w[k]));

    // suffix sums of e^{-y} w over k > j, compensated
    let mut suffix = vec![0.0; n];
    let (mut s, mut c) = (0.0, 0.0);
    for j in (0..n).rev() {
        suffix[j] = s + c;
        let v = ei[j] * w[j];
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }

    let inv_n = 1.0 / n as f64;
    let mut q = vec![0.0; n];
    let mut p = vec![0.0; n];
    let (mut s, mut c) = (0.0, 0.0);
    for j in 0..n {
        let pre = s + c;
        let global_p = 0.5 * C_PER * (e[j] * a + ei[j] * b);
        let global_q = 0.5 * C_PER * (e[j] * a - ei[j] * b);
        let left = ei[j] * pre;
        let right = e[j] * suffix[j];
        p[j] = (global_p + 0.25 * (left + right + w[j])) * inv_n;
        q[j] = (global_q - 0.25 * (left - right)) * inv_n;
        let v = e[j] * w[j];
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    (q, p)
}

/// Normwise relative deviation `max |a - b| / max |b|` per field, maximized over fields.
pub fn relative_deviation(a: &QpResult, b: &QpResult) -> f64 {
    let dev = |x: &[f64], y: &[f64]| {
        let d = x
            .iter()
            .zip(y)
            .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()));
        let s = grid::linf(y);
        if s == 0.0 {
            d
        } else {
            d / s
        }
    };
    dev(&a.q, &b.q)
        .max(dev(&a.p, &b.p))
        .max(dev(&a.qxi, &b.qxi))
        .max(dev(&a.pxi, &b.pxi))
}
