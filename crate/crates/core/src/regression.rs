//! Ordinary least squares with classical standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Relative residual norm below which a column counts as collinear with the
/// columns before it.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    /// Two-sided; NaN when the residual variance is zero or the column was
    /// dropped.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub intercept: Option<Coefficient>,
    /// One entry per input regressor; dropped columns have estimate 0.
    pub coefficients: Vec<Coefficient>,
    /// Regressors removed as collinear with earlier ones.
    pub dropped: Vec<usize>,
    pub n: usize,
    /// Regressors actually used, excluding the intercept.
    pub r: usize,
    pub sse: f64,
    /// Total sum of squares about the sample mean.
    pub sst: f64,
    pub sigma2: f64,
    pub residuals: Vec<f64>,
}

impl RegressionFit {
    pub fn df_resid(&self) -> usize {
        self.n - self.r - usize::from(self.intercept.is_some())
    }

    pub fn r_squared(&self) -> Option<f64> {
        (self.sst > 0.0).then(|| 1.0 - self.sse / self.sst)
    }

    /// Whether p-values are undefined because the fit is exact.
    pub fn is_degenerate(&self) -> bool {
        self.sigma2 == 0.0
    }

    pub fn betas(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn alpha(&self) -> f64 {
        self.intercept.map_or(0.0, |c| c.estimate)
    }

    /// Linear prediction for one row of regressors.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.coefficients.len() {
            return Err(Error::Data(format!(
                "prediction row has {} values, model has {} regressors",
                row.len(),
                self.coefficients.len()
            )));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("regressor {i} is missing")));
        }
        Ok(self.alpha() + self.coefficients.iter().zip(row).map(|(c, x)| c.estimate * x).sum::<f64>())
    }
}

/// OLS of `y` on the given regressor columns, optionally with an intercept.
/// Columns that are (numerically) linear combinations of earlier columns are
/// dropped with a warning.
pub fn ols(y: &[f64], columns: &[&[f64]], intercept: bool) -> Result<RegressionFit> {
    let n = y.len();
    if let Some(c) = columns.iter().position(|c| c.len() != n) {
        return Err(Error::Data(format!("regressor {c} length differs from response length {n}")));
    }
    if y.iter().chain(columns.iter().flat_map(|c| c.iter())).any(|v| !v.is_finite()) {
        return Err(Error::Data("regression inputs contain missing or non-finite values".into()));
    }

    // Sequential Gram-Schmidt decides which columns to keep.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut design: Vec<Vec<f64>> = Vec::new();
    if intercept {
        let ones = vec![1.0; n];
        basis.push(normalize(ones.clone()));
        design.push(ones);
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut resid = col.to_vec();
        for q in &basis {
            let proj: f64 = q.iter().zip(&resid).map(|(a, b)| a * b).sum();
            resid.iter_mut().zip(q).for_each(|(r, qv)| *r -= proj * qv);
        }
        let rnorm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || rnorm <= COLLINEAR_TOL * norm {
            log::warn!("regressor {j} is collinear with earlier columns and was dropped");
            dropped.push(j);
            continue;
        }
        basis.push(normalize(resid));
        design.push(col.to_vec());
        kept.push(j);
    }

    let k = design.len();
    let r = kept.len();
    if n <= k {
        return Err(Error::Data(format!(
            "regression needs more observations ({n}) than parameters ({k})"
        )));
    }
    let x = DMatrix::from_fn(n, k, |i, j| design[j][i]);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let rmat = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = rmat
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("singular triangular factor in least squares".into()))?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let sse: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let df = (n - k) as f64;
    let sigma2 = sse / df;

    let rinv = rmat
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::Numerical("singular triangular factor in least squares".into()))?;
    // diag((X'X)^-1) = squared row norms of R^-1.
    let coef = |idx: usize| -> Coefficient {
        let var = rinv.row(idx).norm_squared() * sigma2;
        let se = var.sqrt();
        let t = beta[idx] / se;
        Coefficient {
            estimate: beta[idx],
            std_error: se,
            t_stat: t,
            p_value: if sigma2 > 0.0 { stats::t_two_sided_p(t, df) } else { f64::NAN },
        }
    };
    let offset = usize::from(intercept);
    let missing = Coefficient {
        estimate: 0.0,
        std_error: f64::NAN,
        t_stat: f64::NAN,
        p_value: f64::NAN,
    };
    let mut coefficients = vec![missing; columns.len()];
    for (pos, &j) in kept.iter().enumerate() {
        coefficients[j] = coef(pos + offset);
    }
    Ok(RegressionFit {
        intercept: intercept.then(|| coef(0)),
        coefficients,
        dropped,
        n,
        r,
        sse,
        sst,
        sigma2,
        residuals,
    })
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// Normal-equations oracle: beta = (X'X)^-1 X'y and the classical
    /// covariance sigma^2 (X'X)^-1.
    fn normal_equations(y: &[f64], cols: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let n = y.len();
        let k = cols.len() + 1;
        let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let beta = &xtx_inv * x.transpose() * DVector::from_column_slice(y);
        let resid = DVector::from_column_slice(y) - &x * &beta;
        let s2 = resid.norm_squared() / (n - k) as f64;
        let se = (0..k).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect();
        (beta.iter().copied().collect(), se)
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..40 {
            let n = rng.random_range(12..=50);
            let p = rng.random_range(1..=5);
            let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<f64> = (0..n)
                .map(|i| 0.3 + cols.iter().enumerate().map(|(j, c)| (j as f64 - 1.0) * c[i]).sum::<f64>() + rng.random_range(-0.5..0.5))
                .collect();
            let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
            let fit = ols(&y, &refs, true).unwrap();
            let (beta, se) = normal_equations(&y, &cols);
            let icpt = fit.intercept.unwrap();
            assert!(rel(icpt.estimate, beta[0]) < 1e-10, "trial {trial}");
            assert!(rel(icpt.std_error, se[0]) < 1e-10, "trial {trial}");
            for j in 0..p {
                assert!(rel(fit.coefficients[j].estimate, beta[j + 1]) < 1e-10, "trial {trial}");
                assert!(rel(fit.coefficients[j].std_error, se[j + 1]) < 1e-10, "trial {trial}");
            }
            assert_eq!(fit.df_resid(), n - p - 1);
        }
    }

    #[test]
    fn perfect_fit_is_degenerate() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let fit = ols(&y, &[&x], true).unwrap();
        assert!((fit.coefficients[0].estimate - 2.0).abs() < 1e-12);
        assert!(fit.sse < 1e-20);
        assert!((fit.r_squared().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_column_is_dropped() {
        let a: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let y: Vec<f64> = (0..20).map(|i| a[i] + 0.5 * b[i] + 0.01 * (i as f64)).collect();
        let fit = ols(&y, &[&a, &b, &c], true).unwrap();
        assert_eq!(fit.dropped, vec![2]);
        assert_eq!(fit.r, 2);
        assert_eq!(fit.coefficients[2].estimate, 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ols(&[1.0, 2.0], &[&[1.0]], true).is_err());
        assert!(ols(&[1.0, 2.0], &[&[1.0, 3.0]], true).is_err());
        assert!(ols(&[1.0, f64::NAN, 3.0], &[], true).is_err());
    }
}
