//! Seeded smooth states used by tests, benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid;
use crate::peakons::{aligned_lagrangian, antisymmetric_pair, PeakonState};
use crate::state::LagrangianState;

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// A state of `F` built from closed-form trigonometric fields.
///
/// `y_xi` oscillates in `[0.4, 1.6]`, `|U| <= amplitude`, `U_xi` is the exact
/// derivative and `nu` is chosen to satisfy the compatibility relation.
pub fn smooth_state(n: usize, seed: u64, amplitude: f64) -> LagrangianState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = |count: usize| -> Vec<(f64, f64, f64)> {
        (1..=count)
            .map(|k| (k as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)))
            .collect()
    };
    let ym = modes(3);
    let um = modes(3);
    let ys = 0.6 / ym.iter().map(|m| m.1.abs()).sum::<f64>();
    let us = amplitude / um.iter().map(|m| m.1.abs()).sum::<f64>();
    let mut x = LagrangianState::rest(n);
    for j in 0..n {
        let xi = grid::node(j, n);
        let (mut yp, mut yx, mut u, mut ux) = (0.0, 1.0, 0.0, 0.0);
        for &(k, c, ph) in &ym {
            let a = TAU * k * xi + ph;
            yp += ys * c * a.sin() / (TAU * k);
            yx += ys * c * a.cos();
        }
        for &(k, c, ph) in &um {
            let a = TAU * k * xi + ph;
            u += us * c * a.cos();
            ux -= us * c * TAU * k * a.sin();
        }
        x.y[j] = yp;
        x.yxi[j] = yx;
        x.u[j] = u;
        x.uxi[j] = ux;
        x.nu[j] = (yx * yx * u * u + ux * ux) / yx;
    }
    x
}

/// Periodic Gaussian smoothing of grid values, standard deviation `eps` in x.
///
/// The kernel is truncated at six deviations and renormalized on the grid.
pub fn mollify(u: &[f64], eps: f64) -> Vec<f64> {
    let m = u.len();
    let r = (6.0 * eps * m as f64).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|k| {
            let z = k as f64 / m as f64;
            (-0.5 * (z / eps).powi(2)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    (0..m as i64)
        .map(|i| {
            (-r..=r)
                .zip(&w)
                .map(|(k, wk)| wk * u[(i + k).rem_euclid(m as i64) as usize])
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Peakon–antipeakon pairs and slightly perturbed copies, for Lipschitz ensembles.
///
/// The reference pair has `A` in `[1.8, 2.2]` and `delta` in `[0.08, 0.12]`, so it
/// collides near `t = 1.2`; the copy scales each amplitude by `1 + e` with
/// `|e| < perturbation`. Both are kink-aligned Lagrangian images on `n` labels.
pub fn peakon_pair_ensemble(
    n: usize,
    count: usize,
    perturbation: f64,
    seed: u64,
) -> Result<Vec<(LagrangianState, LagrangianState)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a = rng.gen_range(1.8..2.2);
            let d = rng.gen_range(0.08..0.12);
            let e1 = rng.gen_range(-perturbation..=perturbation);
            let e2 = rng.gen_range(-perturbation..=perturbation);
            let pa = antisymmetric_pair(a, d)?;
            let pb = PeakonState::new(
                vec![a * (1.0 + e1), -a * (1.0 + e2)],
                vec![0.5 - d, 0.5 + d],
            )?;
            Ok((aligned_lagrangian(&pa, n)?, aligned_lagrangian(&pb, n)?))
        })
        .collect()
}
