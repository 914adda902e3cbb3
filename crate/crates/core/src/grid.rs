//! Helpers for 1-periodic samples on the uniform grid `xi_j = j/n`.

/// Grid coordinate of node `j`.
#[inline]
pub fn node(j: usize, n: usize) -> f64 {
    j as f64 / n as f64
}

/// Periodic trapezoid rule; on a uniform periodic grid this is the sample mean.
pub fn trapz(v: &[f64]) -> f64 {
    neumaier_sum(v.iter().copied()) / v.len() as f64
}

/// Trapezoidal L1 norm.
pub fn l1(v: &[f64]) -> f64 {
    neumaier_sum(v.iter().map(|x| x.abs())) / v.len() as f64
}

pub fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Compensated summation, so that sums do not depend on grid size beyond rounding.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Piecewise-linear interpolant of periodic samples evaluated at any real `s`.
#[inline]
pub fn interp(v: &[f64], s: f64) -> f64 {
    let n = v.len();
    let x = s * n as f64;
    let k = x.floor();
    let th = x - k;
    let k = (k as i64).rem_euclid(n as i64) as usize;
    let k1 = if k + 1 == n { 0 } else { k + 1 };
    v[k] + th * (v[k1] - v[k])
}

/// Exact integral of the piecewise-linear interpolant.
///
/// `cum[j]` holds the integral over `[0, xi_j]` and `cum[n]` the integral over one period.
pub struct Cumulative<'a> {
    v: &'a [f64],
    cum: Vec<f64>,
}

impl<'a> Cumulative<'a> {
    pub fn new(v: &'a [f64]) -> Self {
        let n = v.len();
        let dx = 1.0 / n as f64;
        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        let mut c = 0.0;
        cum.push(0.0);
        for j in 0..n {
            let x = 0.5 * (v[j] + v[(j + 1) % n]) * dx;
            let y = x - c;
            let t = acc + y;
            c = (t - acc) - y;
            acc = t;
            cum.push(acc);
        }
        Cumulative { v, cum }
    }

    pub fn total(&self) -> f64 {
        self.cum[self.v.len()]
    }

    /// Prefix values at the nodes, `[0, xi_j]` for `j = 0..n`.
    pub fn nodes(&self) -> &[f64] {
        &self.cum[..self.v.len()]
    }

    /// Integral over `[0, s]` (negative for `s < 0`).
    pub fn at(&self, s: f64) -> f64 {
        let n = self.v.len();
        let x = s * n as f64;
        let kf = x.floor();
        let th = x - kf;
        let k = kf as i64;
        let period = k.div_euclid(n as i64);
        let k = k.rem_euclid(n as i64) as usize;
        let k1 = if k + 1 == n { 0 } else { k + 1 };
        let dx = 1.0 / n as f64;
        let part = dx * th * (self.v[k] + 0.5 * th * (self.v[k1] - self.v[k]));
        period as f64 * self.total() + self.cum[k] + part
    }
}

/// Periodic centered difference of samples whose full function is `v + slope * xi`.
pub fn centered_diff(v: &[f64], slope: f64) -> Vec<f64> {
    let n = v.len();
    let nf = n as f64;
    (0..n)
        .map(|j| {
            let a = v[(j + n - 1) % n];
            let b = v[(j + 1) % n];
            0.5 * nf * (b - a) + slope
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interp_wraps() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(interp(&v, 0.25), 1.0);
        assert_eq!(interp(&v, 1.25), 1.0);
        assert_eq!(interp(&v, -0.75), 1.0);
        assert!((interp(&v, 0.875) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn cumulative_matches_trapezoid() {
        let v: Vec<f64> = (0..64).map(|j| 1.0 + (j as f64 * 0.3).sin()).collect();
        let c = Cumulative::new(&v);
        assert!((c.total() - trapz(&v)).abs() < 1e-14);
        assert!((c.at(1.0) - c.total()).abs() < 1e-14);
        assert!((c.at(-0.5) + c.total() - c.at(0.5)).abs() < 1e-13);
        // linear interpolant on the first cell
        let s = 0.5 / 64.0;
        let exact = s * (v[0] + 0.25 * (v[1] - v[0]));
        assert!((c.at(s) - exact).abs() < 1e-15);
    }
}
