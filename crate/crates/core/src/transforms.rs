//! Eulerian states `(u, mu)` and the maps `L` (Eulerian to Lagrangian) and `M` (back).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Cumulative};
use crate::state::{check_grid_size, hermite, restore_compat, LagrangianState};

/// Periodic `u` on `x_k = k/m` with energy measure `density dx + sum mass_i delta_{pos_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerianState {
    pub m: usize,
    pub u: Vec<f64>,
    pub density: Vec<f64>,
    /// `(position in [0, 1), mass > 0)`, sorted by position.
    pub atoms: Vec<(f64, f64)>,
}

impl EulerianState {
    pub fn zero(m: usize) -> Self {
        EulerianState {
            m,
            u: vec![0.0; m],
            density: vec![0.0; m],
            atoms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 4 {
            return Err(Error::domain(format!(
                "x-grid of size {} is too small",
                self.m
            )));
        }
        if self.u.len() != self.m {
            return Err(Error::Dimension(self.m, self.u.len()));
        }
        if self.density.len() != self.m {
            return Err(Error::Dimension(self.m, self.density.len()));
        }
        if self.u.iter().chain(&self.density).any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite sample"));
        }
        if self.density.iter().any(|&d| d < 0.0) {
            return Err(Error::domain("negative energy density"));
        }
        for (i, &(p, w)) in self.atoms.iter().enumerate() {
            if !(0.0..1.0).contains(&p) || !(w > 0.0) || !w.is_finite() {
                return Err(Error::domain(format!("invalid atom ({p}, {w})")));
            }
            if i > 0 && self.atoms[i - 1].0 >= p {
                return Err(Error::domain("atoms must be strictly sorted and distinct"));
            }
        }
        Ok(())
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// Total energy `mu([0, 1))`.
    pub fn h(&self) -> f64 {
        grid::trapz(&self.density) + self.atom_mass()
    }

    /// `u_x` by periodic centered differences.
    pub fn ux(&self) -> Vec<f64> {
        grid::centered_diff(&self.u, 0.0)
    }

    /// `|| density - (u^2 + u_x^2) ||_{L1}`.
    pub fn ac_defect(&self) -> f64 {
        let ux = self.ux();
        grid::l1(
            &(0..self.m)
                .map(|k| self.density[k] - self.u[k] * self.u[k] - ux[k] * ux[k])
                .collect::<Vec<_>>(),
        )
    }
}

/// `u` paired with `mu = (u^2 + u_x^2) dx`, `u_x` by centered differences.
pub fn h1_to_eulerian(u: &[f64]) -> Result<EulerianState> {
    let m = u.len();
    if m < 4 {
        return Err(Error::domain(format!("x-grid of size {m} is too small")));
    }
    let ux = grid::centered_diff(u, 0.0);
    Ok(EulerianState {
        m,
        u: u.to_vec(),
        density: (0..m).map(|k| u[k] * u[k] + ux[k] * ux[k]).collect(),
        atoms: Vec::new(),
    })
}

/// `G(x) = x + mu([0, x))` for `x` in `[0, 1)`, extended by `G(x+1) = G(x) + 1 + h`.
pub struct CumulativeMeasure<'a> {
    ac: Cumulative<'a>,
    density: &'a [f64],
    /// Breakpoints: every x-node and every atom, with `G` just left of it and its jump.
    points: Vec<(f64, f64, f64)>,
    period: f64,
}

impl<'a> CumulativeMeasure<'a> {
    pub fn new(e: &'a EulerianState) -> Self {
        let ac = Cumulative::new(&e.density);
        let m = e.m;
        let mut points = Vec::with_capacity(m + e.atoms.len());
        let mut ai = 0;
        let mut below = 0.0;
        for k in 0..m {
            let xk = k as f64 / m as f64;
            while ai < e.atoms.len() && e.atoms[ai].0 < xk {
                let (p, w) = e.atoms[ai];
                points.push((p, p + ac.at(p) + below, w));
                below += w;
                ai += 1;
            }
            let mut jump = 0.0;
            if ai < e.atoms.len() && e.atoms[ai].0 == xk {
                jump = e.atoms[ai].1;
                ai += 1;
            }
            points.push((xk, xk + ac.nodes()[k] + below, jump));
            below += jump;
        }
        while ai < e.atoms.len() {
            let (p, w) = e.atoms[ai];
            points.push((p, p + ac.at(p) + below, w));
            below += w;
            ai += 1;
        }
        let period = 1.0 + ac.total() + below;
        CumulativeMeasure {
            ac,
            density: &e.density,
            points,
            period,
        }
    }

    /// `1 + h`.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// `G(x)` with left-closed intervals, so an atom at `p` counts for `x > p`.
    pub fn eval(&self, x: f64) -> f64 {
        let k = x.floor();
        let r = x - k;
        let i = self.points.partition_point(|pt| pt.0 < r);
        let below: f64 = if i == 0 {
            0.0
        } else {
            let (p, g, j) = self.points[i - 1];
            g + j - p - self.ac.at(p)
        };
        k * self.period + r + self.ac.at(r) + below
    }

    /// Generalized inverse `sup { y : G(y) < s }`; the flag is set when `s` falls
    /// strictly inside the jump of an atom.
    pub fn inverse(&self, s: f64) -> (f64, bool) {
        let k = (s / self.period).floor();
        let r = s - k * self.period;
        if r <= 0.0 {
            return (k, false);
        }
        let i = self.points.partition_point(|pt| pt.1 < r) - 1;
        let (b, g, jump) = self.points[i];
        if r <= g + jump {
            let inside = r > g && r < g + jump;
            return (k + b, inside);
        }
        let end = self.points.get(i + 1).map(|p| p.0).unwrap_or(1.0);
        let m = self.density.len();
        let d0 = grid::interp(self.density, b);
        let cell = ((b * m as f64).floor() as usize).min(m - 1);
        let slope = (self.density[(cell + 1) % m] - self.density[cell]) * m as f64;
        let rem = r - g - jump;
        let a = 1.0 + d0;
        let disc = (a * a + 2.0 * slope * rem).max(0.0);
        let len = 2.0 * rem / (a + disc.sqrt());
        (k + (b + len).min(end), false)
    }
}

/// Shifts the generalized-inverse labels so that `int y = 0`.
fn centering_offset(cm: &CumulativeMeasure, n: usize) -> f64 {
    let s = cm.period();
    let int_y = |c: f64| {
        let v: Vec<f64> = (0..n)
            .map(|j| {
                let xi = grid::node(j, n);
                cm.inverse(s * (xi + c)).0 - xi
            })
            .collect();
        grid::trapz(&v) + 0.5
    };
    // int y_c = int y_0 + c in the continuum; secant iteration fixes the quadrature
    let mut c0 = -int_y(0.0);
    let mut f0 = int_y(c0);
    if f0 == 0.0 {
        return c0;
    }
    let mut c1 = c0 - f0;
    for _ in 0..60 {
        let f1 = int_y(c1);
        if f1.abs() <= 1e-14 || f1 == f0 {
            return c1;
        }
        let c2 = c1 - f1 * (c1 - c0) / (f1 - f0);
        c0 = c1;
        f0 = f1;
        c1 = c2;
    }
    c1
}

/// The map `L`: builds the representative in `H` of `(u, mu)` on `n` labels.
///
/// Labels are `y(xi) = sup{ y : G(y) < (1+h)(xi + c) }` with the offset `c` solving
/// `int y = 0`, which is `Π` of the unshifted construction. `y_xi` is the difference
/// of `y` across the half-nodes and `nu = 1 + h - y_xi`, so `nu_j / n` is exactly the
/// `mu`-mass of the cell and the energy carries over to rounding. `U = u(y)`, and
/// `|U_xi|` follows from compatibility with the sign of `u_x`.
pub fn to_lagrangian(e: &EulerianState, n: usize) -> Result<LagrangianState> {
    check_grid_size(n)?;
    e.validate()?;
    let cm = CumulativeMeasure::new(e);
    let s = cm.period();
    let c = centering_offset(&cm, n);
    let ux = e.ux();
    let nf = n as f64;
    // y at xi_j + 1/(2n)
    let half: Vec<f64> = (0..n)
        .map(|j| cm.inverse(s * (grid::node(j, n) + 0.5 / nf + c)).0)
        .collect();
    let mut x = LagrangianState::rest(n);
    for j in 0..n {
        let xi = grid::node(j, n);
        let y = cm.inverse(s * (xi + c)).0;
        x.y[j] = y - xi;
        let below = if j == 0 {
            half[n - 1] - 1.0
        } else {
            half[j - 1]
        };
        let yxi = (nf * (half[j] - below)).clamp(0.0, s);
        let nu = s - yxi;
        let mut u = grid::interp(&e.u, y);
        let mut uxi = grid::interp(&ux, y) * yxi;
        restore_compat(yxi, nu, &mut u, &mut uxi);
        x.u[j] = u;
        x.yxi[j] = yxi;
        x.uxi[j] = uxi;
        x.nu[j] = nu;
    }
    Ok(x)
}

/// A maximal run of labels with `y_xi < eps`, pushed forward to a single atom.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub start: usize,
    pub len: usize,
    pub position: f64,
    pub mass: f64,
    /// `max U - min U` over the run; `U` should be constant on a plateau.
    pub u_spread: f64,
}

/// Default plateau threshold `10 (1+h)/n`.
pub fn default_plateau_eps(x: &LagrangianState) -> f64 {
    10.0 * (1.0 + x.h()) / x.n as f64
}

pub fn find_plateaus(x: &LagrangianState, eps: f64) -> Vec<Plateau> {
    let n = x.n;
    let flat: Vec<bool> = x.yxi.iter().map(|&v| v < eps).collect();
    if flat.iter().all(|&f| f) {
        // degenerate: no transport at all; treat the whole period as one run
        return vec![plateau_from(x, 0, n)];
    }
    // start scanning right after a non-flat node so no run is split by the wrap
    let first = flat.iter().position(|&f| !f).unwrap();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let j = (first + 1 + i) % n;
        if flat[j] {
            let mut len = 0;
            while len < n && flat[(j + len) % n] {
                len += 1;
            }
            out.push(plateau_from(x, j, len));
            i += len;
        } else {
            i += 1;
        }
    }
    out
}

fn plateau_from(x: &LagrangianState, start: usize, len: usize) -> Plateau {
    let n = x.n;
    let mut mass = 0.0;
    let mut ysum = 0.0;
    let mut umin = f64::INFINITY;
    let mut umax = f64::NEG_INFINITY;
    for i in 0..len {
        let j = (start + i) % n;
        let wrap = if start + i >= n { 1.0 } else { 0.0 };
        mass += x.nu[j] / n as f64;
        ysum += x.y_full(j) + wrap;
        umin = umin.min(x.u[j]);
        umax = umax.max(x.u[j]);
    }
    Plateau {
        start,
        len,
        position: (ysum / len as f64).rem_euclid(1.0),
        mass,
        u_spread: umax - umin,
    }
}

/// Cell averages on the x-grid of the measure with `mass[i]` on `[edges[i], edges[i+1]]`.
///
/// `edges` is nondecreasing with `edges[len] = edges[0] + 1`. The cumulative mass is
/// interpolated by a monotone cubic through the edges (harmonic-mean slopes), so the
/// averages are second-order accurate for a smooth density and sum to the total mass.
/// Intervals narrower than rounding are treated as point masses split onto the two
/// nearest nodes.
fn cell_averages(edges: &[f64], mass: &[f64], m: usize) -> Vec<f64> {
    let mf = m as f64;
    let mut density = vec![0.0; m];
    let mut knots = vec![edges[0]];
    let mut cum = vec![0.0];
    for (i, &w) in mass.iter().enumerate() {
        let (a, b) = (edges[i], edges[i + 1]);
        if b - a > 1e-14 {
            knots.push(b);
            cum.push(cum[cum.len() - 1] + w);
        } else if w > 0.0 {
            let x = a * mf;
            let k = x.floor();
            let t = x - k;
            let k = (k as i64).rem_euclid(m as i64) as usize;
            density[k] += w * mf * (1.0 - t);
            density[(k + 1) % m] += w * mf * t;
        }
    }
    let total = cum[cum.len() - 1];
    let seg = knots.len() - 1;
    if seg == 0 || total == 0.0 {
        return density;
    }
    let sec: Vec<f64> = (0..seg)
        .map(|i| (cum[i + 1] - cum[i]) / (knots[i + 1] - knots[i]))
        .collect();
    let slope: Vec<f64> = (0..seg)
        .map(|i| {
            let (a, b) = (sec[(i + seg - 1) % seg], sec[i]);
            if a > 0.0 && b > 0.0 {
                2.0 * a * b / (a + b)
            } else {
                0.0
            }
        })
        .collect();
    let x0 = knots[0];
    let eval = |x: f64| -> f64 {
        let wrap = (x - x0).div_euclid(1.0);
        let r = x - wrap;
        let i = (knots.partition_point(|&k| k <= r) - 1).min(seg - 1);
        let w = knots[i + 1] - knots[i];
        let t = ((r - knots[i]) / w).clamp(0.0, 1.0);
        let mb = slope[(i + 1) % seg] * w;
        wrap * total + hermite(cum[i], cum[i + 1], slope[i] * w, mb, t)
    };
    let h = 0.5 / mf;
    let mut lo = eval(-h);
    for (k, d) in density.iter_mut().enumerate() {
        let hi = eval(k as f64 / mf + h);
        *d += (hi - lo) * mf;
        lo = hi;
    }
    density
}

/// The map `M`: `u(x) = U(xi)` at `y(xi) = x`, and `mu = y_#(nu dxi)`.
///
/// Runs of labels with `y_xi < plateau_eps` become atoms carrying `int nu` over the
/// run; every other label carries `nu_j / n` on `[y_{j-1/2}, y_{j+1/2}]`, and the
/// density is the x-cell average of that measure.
pub fn to_eulerian(x: &LagrangianState, m: usize, plateau_eps: f64) -> EulerianState {
    let n = x.n;
    let plateaus = find_plateaus(x, plateau_eps);
    let mut in_plateau = vec![false; n];
    for p in &plateaus {
        for i in 0..p.len {
            in_plateau[(p.start + i) % n] = true;
        }
    }
    let y: Vec<f64> = (0..n).map(|j| x.y_full(j)).collect();
    let mid = |j: usize| -> f64 {
        if j + 1 == n {
            0.5 * (y[j] + y[0] + 1.0)
        } else {
            0.5 * (y[j] + y[j + 1])
        }
    };
    let edges: Vec<f64> = (0..=n)
        .map(|j| if j == 0 { mid(n - 1) - 1.0 } else { mid(j - 1) })
        .collect();
    let mass: Vec<f64> = (0..n)
        .map(|j| {
            if in_plateau[j] {
                0.0
            } else {
                x.nu[j] / n as f64
            }
        })
        .collect();
    let density = cell_averages(&edges, &mass, m);

    let mut atoms: Vec<(f64, f64)> = plateaus
        .iter()
        .filter(|p| p.mass > 0.0)
        .map(|p| (if p.position >= 1.0 { 0.0 } else { p.position }, p.mass))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });

    // u by monotone inversion of y on [y_0, y_0 + 1)
    let y0 = y[0];
    let mut u = vec![0.0; m];
    for (k, uk) in u.iter_mut().enumerate() {
        let xk = k as f64 / m as f64;
        let xx = xk - (xk - y0).floor();
        let j = y.partition_point(|&v| v <= xx).max(1) - 1;
        let (ya, yb, ua, ub) = if j + 1 == n {
            (y[j], y[0] + 1.0, x.u[j], x.u[0])
        } else {
            (y[j], y[j + 1], x.u[j], x.u[j + 1])
        };
        let th = if yb > ya {
            ((xx - ya) / (yb - ya)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        *uk = ua + th * (ub - ua);
    }
    EulerianState {
        m,
        u,
        density,
        atoms,
    }
}

/// `(1-lambda) a + lambda b` for `u` and the singular part; the absolutely continuous
/// part is interpolated minus the convexity gap, so it stays `u^2 + u_x^2` when both
/// ends satisfy that.
pub fn interpolate(a: &EulerianState, b: &EulerianState, lambda: f64) -> Result<EulerianState> {
    if a.m != b.m {
        return Err(Error::Dimension(a.m, b.m));
    }
    let m = a.m;
    let (uxa, uxb) = (a.ux(), b.ux());
    let l = lambda;
    let u: Vec<f64> = (0..m).map(|k| (1.0 - l) * a.u[k] + l * b.u[k]).collect();
    let density = (0..m)
        .map(|k| {
            let gap = l * (1.0 - l) * ((a.u[k] - b.u[k]).powi(2) + (uxa[k] - uxb[k]).powi(2));
            ((1.0 - l) * a.density[k] + l * b.density[k] - gap).max(0.0)
        })
        .collect();
    let mut atoms: Vec<(f64, f64)> = a
        .atoms
        .iter()
        .map(|&(p, w)| (p, (1.0 - l) * w))
        .chain(b.atoms.iter().map(|&(p, w)| (p, l * w)))
        .filter(|a| a.1 > 0.0)
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    atoms.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
    Ok(EulerianState {
        m,
        u,
        density,
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{check_membership, Tolerances};

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn zero_state_maps_to_centered_rest() {
        let x = to_lagrangian(&EulerianState::zero(256), 256).unwrap();
        assert!(x.y.iter().all(|&v| (v + 0.5).abs() < 1e-14));
        assert!(x.u.iter().chain(&x.nu).chain(&x.uxi).all(|&v| v == 0.0));
        let e = to_eulerian(&x, 256, default_plateau_eps(&x));
        assert!(e.u.iter().chain(&e.density).all(|&v| v == 0.0));
        assert!(e.atoms.is_empty());
    }

    #[test]
    fn single_atom_gives_half_plateau() {
        let mut e = EulerianState::zero(1024);
        e.atoms.push((0.5, 1.0));
        let x = to_lagrangian(&e, 1024).unwrap();
        let flat: Vec<usize> = (0..1024).filter(|&j| x.yxi[j] == 0.0).collect();
        // plateau of xi-length 1/2, carrying nu = 1 + h = 2
        assert!((flat.len() as f64 / 1024.0 - 0.5).abs() <= 2.0 / 1024.0);
        for &j in &flat {
            assert!((x.y_full(j).rem_euclid(1.0) - 0.5).abs() < 1e-12);
            assert_eq!(x.nu[j], 2.0);
        }
        assert!(check_membership(&x, &Tolerances::default()).in_h);
        let back = to_eulerian(&x, 1024, default_plateau_eps(&x));
        assert_eq!(back.atoms.len(), 1);
        assert!((back.atoms[0].0 - 0.5).abs() < 1e-12);
        assert!((back.atoms[0].1 - 1.0).abs() < 4.0 / 1024.0);
        assert!((back.h() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_energy() {
        let m = 1024;
        let u: Vec<f64> = (0..m)
            .map(|k| 0.1 * (TAU * k as f64 / m as f64).cos())
            .collect();
        let e = h1_to_eulerian(&u).unwrap();
        // independent dense quadrature of u^2 + u_x^2 with the exact derivative
        let dense = 1 << 16;
        let exact: f64 = (0..dense)
            .map(|k| {
                let x = k as f64 / dense as f64;
                let (a, b) = (0.1 * (TAU * x).cos(), -0.1 * TAU * (TAU * x).sin());
                a * a + b * b
            })
            .sum::<f64>()
            / dense as f64;
        assert!((exact - 0.202_392_088).abs() < 1e-6);
        assert!((e.h() - exact).abs() < 1e-5);
    }

    #[test]
    fn cumulative_measure_inverse() {
        let mut e = EulerianState::zero(64);
        e.density.iter_mut().for_each(|d| *d = 1.0);
        e.atoms = vec![(0.25, 0.5), (0.75, 0.25)];
        let cm = CumulativeMeasure::new(&e);
        assert!((cm.period() - 2.75).abs() < 1e-14);
        assert!((cm.eval(0.25) - 0.5).abs() < 1e-14);
        assert!((cm.eval(0.26) - 1.02).abs() < 1e-14);
        assert_eq!(cm.inverse(0.75), (0.25, true));
        let (y, a) = cm.inverse(1.3);
        assert!(!a && (y - 0.4).abs() < 1e-14);
        let (y, _) = cm.inverse(2.75 + 1.3);
        assert!((y - 1.4).abs() < 1e-14);
        assert_eq!(cm.inverse(0.0), (0.0, false));
    }

    #[test]
    fn energy_is_preserved_both_ways() {
        let m = 512;
        let u: Vec<f64> = (0..m)
            .map(|k| {
                let x = k as f64 / m as f64;
                0.4 * (TAU * x).sin() + 0.1 * (3.0 * TAU * x).cos()
            })
            .collect();
        let mut e = h1_to_eulerian(&u).unwrap();
        e.atoms.push((0.3, 0.2));
        let x = to_lagrangian(&e, 512).unwrap();
        let h = e.h();
        assert!((x.h() - h).abs() <= 1e-8 * (1.0 + h));
        let back = to_eulerian(&x, m, default_plateau_eps(&x));
        assert!((back.h() - x.h()).abs() <= 1e-12 * (1.0 + h));
        assert_eq!(back.atoms.len(), 1);
    }

    #[test]
    fn density_round_trip_is_second_order() {
        let err = |n: usize| {
            let u: Vec<f64> = (0..n)
                .map(|k| {
                    let x = k as f64 / n as f64;
                    0.3 * (TAU * x).sin() + 0.1 * (2.0 * TAU * x + 0.4).cos()
                })
                .collect();
            let e = h1_to_eulerian(&u).unwrap();
            let x = to_lagrangian(&e, n).unwrap();
            let back = to_eulerian(&x, n, default_plateau_eps(&x));
            let du =
                e.u.iter()
                    .zip(&back.u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            let dd: Vec<f64> = e
                .density
                .iter()
                .zip(&back.density)
                .map(|(a, b)| (a - b).abs())
                .collect();
            (du, grid::trapz(&dd))
        };
        let (u1, d1) = err(256);
        let (u2, d2) = err(512);
        assert!(u1 / u2 > 3.5 && d1 / d2 > 3.5, "{u1} {u2} {d1} {d2}");
    }
}
