//! Scalar models: the square-root law `x' = |x|^{1/2}`, the Heaviside law
//! `x' = 1 + alpha H(x)`, and the distances `J`, `J̄`, `d` on `(0, inf)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Increasing solution of `x' = |x|^{1/2}`: `sign(t/2 + v0) (t/2 + v0)^2`.
pub fn solve_sqrtlaw(x0: f64, t: f64) -> f64 {
    let v0 = x0.signum() * x0.abs().sqrt();
    let w = 0.5 * t + v0;
    if w == 0.0 {
        0.0
    } else {
        w.signum() * w * w
    }
}

/// `H(0) = 1`.
fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Solution of `x' = 1 + alpha H(x)`: `(1 + alpha H(t - t0)) (t - t0)`.
pub fn solve_heaviside(x0: f64, alpha: f64, t: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha = {alpha} must be positive")));
    }
    let t0 = -x0 / (1.0 + alpha * heaviside(x0));
    Ok((1.0 + alpha * heaviside(t - t0)) * (t - t0))
}

fn check_positive(x: f64, xbar: f64) -> Result<()> {
    if x > 0.0 && xbar > 0.0 && x.is_finite() && xbar.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "points ({x}, {xbar}) must be positive"
        )))
    }
}

/// `|x - x̄| / sqrt(min(x, x̄))`.
pub fn toy_j(x: f64, xbar: f64) -> Result<f64> {
    check_positive(x, xbar)?;
    Ok((x - xbar).abs() / x.min(xbar).sqrt())
}

/// `|x - x̄| / sqrt(max(x, x̄))`.
pub fn toy_jbar(x: f64, xbar: f64) -> Result<f64> {
    check_positive(x, xbar)?;
    Ok((x - xbar).abs() / x.max(xbar).sqrt())
}

/// Geometric chain `x r^i`, `i = 0..=n_chain+1`.
pub fn geometric_chain(x: f64, xbar: f64, n_chain: usize) -> Result<Vec<f64>> {
    check_positive(x, xbar)?;
    let segments = n_chain + 1;
    let r = (xbar / x).powf(1.0 / segments as f64);
    let mut pts: Vec<f64> = (0..=segments).map(|i| x * r.powi(i as i32)).collect();
    pts[segments] = xbar;
    Ok(pts)
}

/// Sum of `J` along a chain.
pub fn chain_length(pts: &[f64], j: fn(f64, f64) -> Result<f64>) -> Result<f64> {
    pts.windows(2).map(|w| j(w[0], w[1])).sum()
}

/// `J`-length of the geometric chain with `n_chain` intermediate points.
///
/// Equal ratios make every link contribute `sqrt(x_i) (r - 1)`, and the sum is
/// `(sqrt r + 1) |sqrt x̄ - sqrt x|`, decreasing in `n_chain` towards the Riemannian
/// distance `2 |sqrt x̄ - sqrt x|`.
pub fn toy_d(x: f64, xbar: f64, n_chain: usize) -> Result<f64> {
    if n_chain == 0 {
        return Err(Error::domain("n_chain must be at least 1"));
    }
    chain_length(&geometric_chain(x, xbar, n_chain)?, toy_j)
}

/// `|∫_x^x̄ z^{-1/2} dz|`.
pub fn riemannian_distance(x: f64, xbar: f64) -> f64 {
    2.0 * (xbar.abs().sqrt() - x.abs().sqrt()).abs()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JbarReport {
    /// `(x1, x2, x3)` with `J̄(x1,x3) < J̄(x1,x2) + J̄(x2,x3)`.
    pub triple: (f64, f64, f64),
    pub jbar_13: f64,
    pub jbar_12_plus_23: f64,
    /// The same triple under `J`, where the inequality is reversed.
    pub j_13: f64,
    pub j_12_plus_23: f64,
    /// `J̄(1, 4)` and the Riemannian distance it fails to reproduce.
    pub jbar_1_4: f64,
    pub riemannian_1_4: f64,
    /// Shortest `J̄` chain length found over random chains from 1 to 4.
    pub best_random_chain_1_4: f64,
    /// Largest `J̄(x(t), x̄(t)) / J̄(x0, x̄0)` over the search grid.
    pub max_growth: f64,
    pub growth_witness: (f64, f64, f64),
    /// Growth bound asked for by the caller.
    pub growth_bound: f64,
    pub growth_exceeds_bound: bool,
}

/// Witnesses for the behaviour of `J̄`.
///
/// The growth search scans `x0 < x̄0` in `(0, 1]` on a logarithmic grid and `t` in
/// `(0, t_max]`. Writing `a = sqrt x0`, `b = sqrt x̄0`, the ratio is
/// `b (a + b + t) / ((a + b)(b + t/2))`, which stays below 2, so the search reports
/// a value close to 2 whatever the requested bound.
pub fn toy_jbar_counterexample(growth_bound: f64, t_max: f64, seed: u64) -> Result<JbarReport> {
    use rand::{Rng, SeedableRng};
    let (x1, x2, x3) = (1.0, 2.0, 3.0);
    let jbar_13 = toy_jbar(x1, x3)?;
    let jbar_sum = toy_jbar(x1, x2)? + toy_jbar(x2, x3)?;
    let j_13 = toy_j(x1, x3)?;
    let j_sum = toy_j(x1, x2)? + toy_j(x2, x3)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut best_chain = toy_jbar(1.0, 4.0)?;
    for _ in 0..1000 {
        let k = rng.gen_range(1..=8usize);
        let mut inner: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..4.0)).collect();
        inner.sort_by(f64::total_cmp);
        let mut pts = vec![1.0];
        pts.extend(inner);
        pts.push(4.0);
        best_chain = best_chain.min(chain_length(&pts, toy_jbar)?);
    }

    let mut max_growth = 0.0;
    let mut witness = (0.0, 0.0, 0.0);
    let grid: Vec<f64> = (0..=60)
        .map(|i| 10f64.powf(-12.0 + 12.0 * i as f64 / 60.0))
        .collect();
    for (i, &x0) in grid.iter().enumerate() {
        for &xb in &grid[i + 1..] {
            let j0 = toy_jbar(x0, xb)?;
            for k in 1..=40 {
                let t = t_max * k as f64 / 40.0;
                let r = toy_jbar(solve_sqrtlaw(x0, t), solve_sqrtlaw(xb, t))? / j0;
                if r > max_growth {
                    max_growth = r;
                    witness = (x0, xb, t);
                }
            }
        }
    }
    Ok(JbarReport {
        triple: (x1, x2, x3),
        jbar_13,
        jbar_12_plus_23: jbar_sum,
        j_13,
        j_12_plus_23: j_sum,
        jbar_1_4: toy_jbar(1.0, 4.0)?,
        riemannian_1_4: riemannian_distance(1.0, 4.0),
        best_random_chain_1_4: best_chain,
        max_growth,
        growth_witness: witness,
        growth_bound,
        growth_exceeds_bound: max_growth > growth_bound,
    })
}

/// Classical RK4 for `x' = a(x)`, used to cross-check the closed forms.
pub fn rk4_scalar(a: impl Fn(f64) -> f64, x0: f64, t: f64, dt: f64) -> f64 {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut x = x0;
    for _ in 0..steps {
        let k1 = a(x);
        let k2 = a(x + 0.5 * h * k1);
        let k3 = a(x + 0.5 * h * k2);
        let k4 = a(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}
