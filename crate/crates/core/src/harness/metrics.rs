//! Density-error metric and time-step convergence check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold on the time-averaged `n_1` difference between `dt` and `dt/2` runs.
pub const DT_CONVERGENCE_THRESHOLD: f64 = 5e-3;

const GRID_TOL: f64 = 1e-9;

/// Trapezoidal rule on a (not necessarily uniform) grid.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    assert_eq!(t.len(), y.len());
    t.windows(2).zip(y.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}

fn check_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::GridMismatch("need at least two samples".into()));
    }
    if let Some(k) = (0..a.len()).find(|&k| (a[k] - b[k]).abs() > GRID_TOL * a[k].abs().max(1.0)) {
        return Err(Error::GridMismatch(format!("sample {k}: t = {} vs {}", a[k], b[k])));
    }
    Ok(())
}

/// `∫|n − n_ex| dt / ∫ n_ex dt` over the common grid `t`.
pub fn metric_delta_n1(t: &[f64], n1: &[f64], t_exact: &[f64], n1_exact: &[f64]) -> Result<f64> {
    check_grid(t, t_exact)?;
    if n1.len() != t.len() || n1_exact.len() != t.len() {
        return Err(Error::GridMismatch("series length differs from its grid".into()));
    }
    let diff: Vec<f64> = n1.iter().zip(n1_exact).map(|(a, b)| (a - b).abs()).collect();
    let norm = trapezoid(t, n1_exact);
    if !(norm > 0.0) {
        return Err(Error::Validation("reference density integrates to zero".into()));
    }
    Ok(trapezoid(t, &diff) / norm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtConvergence {
    pub residual: f64,
    pub converged: bool,
}

/// `(1/T) ∫ |n_a − n_b| dt` where trajectory `b` may be sampled on a finer grid
/// that contains the grid of `a` (as for `dt` and `dt/2`). Symmetric in its
/// arguments.
pub fn dt_convergence(ta: &[f64], na: &[f64], tb: &[f64], nb: &[f64]) -> Result<DtConvergence> {
    if ta.len() > tb.len() {
        return dt_convergence(tb, nb, ta, na);
    }
    if na.len() != ta.len() || nb.len() != tb.len() {
        return Err(Error::GridMismatch("series length differs from its grid".into()));
    }
    let (n1, n2) = (ta.len(), tb.len());
    if n1 < 2 || (n2 - 1) % (n1 - 1) != 0 {
        return Err(Error::GridMismatch(format!("{n2} samples do not refine {n1}")));
    }
    let stride = (n2 - 1) / (n1 - 1);
    let (ts, ns): (Vec<f64>, Vec<f64>) = (0..n1).map(|k| (tb[k * stride], nb[k * stride])).unzip();
    check_grid(ta, &ts)?;
    let diff: Vec<f64> = na.iter().zip(&ns).map(|(a, b)| (a - b).abs()).collect();
    let span = ta[n1 - 1] - ta[0];
    let residual = trapezoid(ta, &diff) / span;
    Ok(DtConvergence {
        residual,
        converged: residual < DT_CONVERGENCE_THRESHOLD,
    })
}

/// Largest `|x(t) − x(0)|`, relative to `max(1, |x(0)|)`.
pub fn relative_drift(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else { return 0.0 };
    xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max) / x0.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn trapezoid_is_exact_on_linear_functions() {
        let t = grid(10, 0.3);
        let y: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&t, &y) - (9.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_trajectories_give_zero() {
        let t = grid(100, 0.01);
        let n: Vec<f64> = t.iter().map(|x| 1.0 + 0.1 * x.sin()).collect();
        assert_eq!(metric_delta_n1(&t, &n, &t, &n).unwrap(), 0.0);
        let c = dt_convergence(&t, &n, &t, &n).unwrap();
        assert_eq!(c.residual, 0.0);
        assert!(c.converged);
    }

    #[test]
    fn constant_offset() {
        let t = grid(250, 0.1);
        let ex: Vec<f64> = t.iter().map(|x| 1.0 + 0.2 * (3.0 * x).cos()).collect();
        let n: Vec<f64> = ex.iter().map(|x| x + 0.03).collect();
        let expected = 0.03 * 25.0 / trapezoid(&t, &ex);
        assert!((metric_delta_n1(&t, &n, &t, &ex).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn divergent_pair_fails_the_criterion() {
        let coarse = grid(100, 0.02);
        let fine = grid(200, 0.01);
        let a: Vec<f64> = coarse.iter().map(|x| x.cos()).collect();
        let b: Vec<f64> = fine.iter().map(|x| x.cos() + 0.01).collect();
        let c = dt_convergence(&coarse, &a, &fine, &b).unwrap();
        assert!((c.residual - 0.01).abs() < 1e-12);
        assert!(!c.converged);
        assert_eq!(dt_convergence(&fine, &b, &coarse, &a).unwrap(), c);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let t = grid(10, 0.1);
        let s = grid(10, 0.11);
        let y = vec![1.0; 11];
        assert!(matches!(metric_delta_n1(&t, &y, &s, &y), Err(Error::GridMismatch(_))));
        assert!(matches!(metric_delta_n1(&t, &y[..5], &t, &y), Err(Error::GridMismatch(_))));
        let odd = grid(14, 0.1 * 10.0 / 14.0);
        assert!(matches!(dt_convergence(&t, &y, &odd, &[1.0; 15]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn drift_is_relative() {
        assert_eq!(relative_drift(&[]), 0.0);
        assert!((relative_drift(&[-4.0, -4.0, -4.4, -3.8]) - 0.1).abs() < 1e-15);
        assert_eq!(relative_drift(&[0.0, 0.5]), 0.5);
    }
}
