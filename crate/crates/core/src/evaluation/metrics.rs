//! Goodness-of-fit measures and per-model hypothesis tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::RegressionFit;
use crate::stats;

/// `1 - (SSE / (n - r - 1)) / (SST / (n - 1))` with SST about the in-sample
/// mean. `None` when SST is zero or no residual degrees of freedom remain.
pub fn adjusted_r2_insample(fit: &RegressionFit) -> Option<f64> {
    adjusted(fit.sse, fit.sst, fit.n, fit.r)
}

/// Out-of-sample adjusted R² against a fixed baseline mean (the
/// validation-period mean), corrected for `r` regressors. May be negative.
/// `Ok(None)` flags a zero denominator.
pub fn adjusted_r2_oos(predictions: &[f64], actuals: &[f64], baseline_mean: f64, r: usize) -> Result<Option<f64>> {
    if predictions.len() != actuals.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} actual values",
            predictions.len(),
            actuals.len()
        )));
    }
    if !baseline_mean.is_finite() || predictions.iter().chain(actuals).any(|v| !v.is_finite()) {
        return Err(Error::Data("out-of-sample series contain non-finite values".into()));
    }
    let n = actuals.len();
    if n < r + 2 {
        return Err(Error::Data(format!("{n} out-of-sample weeks leave no degrees of freedom for {r} regressors")));
    }
    let sse: f64 = predictions.iter().zip(actuals).map(|(p, y)| (y - p).powi(2)).sum();
    let sst: f64 = actuals.iter().map(|y| (y - baseline_mean).powi(2)).sum();
    Ok(adjusted(sse, sst, n, r))
}

fn adjusted(sse: f64, sst: f64, n: usize, r: usize) -> Option<f64> {
    if sst <= 0.0 || n < r + 2 {
        return None;
    }
    Some(1.0 - (sse / (n - r - 1) as f64) / (sst / (n - 1) as f64))
}

/// Two-sided p-value of H0: alpha = 0. `None` for a fit without intercept
/// or with zero residual variance.
pub fn intercept_test(fit: &RegressionFit) -> Option<f64> {
    let c = fit.intercept?;
    if fit.is_degenerate() {
        return None;
    }
    if c.estimate == 0.0 {
        return Some(1.0);
    }
    Some(stats::t_two_sided_p(c.t_stat, fit.df_resid() as f64))
}

/// Nested comparison of a restricted model (`r1` regressors) with a full
/// model adding `r2` regressors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTestRecord {
    /// Restricted-model SSE.
    pub ss_f: f64,
    /// Full-model SSE.
    pub ss_g: f64,
    pub r1: usize,
    pub r2: usize,
    pub n: usize,
    /// Infinite for a perfect full-model fit.
    #[serde(with = "crate::format::float_or_string")]
    pub f_stat: f64,
    pub p_value: f64,
}

/// `F = ((ss_f - ss_g) / r2) / (ss_g / (n - r1 - r2))` against
/// `F(r2, n - r1 - r2)`. A perfect full fit gives `F = inf, p = 0`.
pub fn nested_f_test(ss_f: f64, ss_g: f64, r2: usize, n: usize, r1: usize) -> Result<FTestRecord> {
    if r2 == 0 {
        return Err(Error::Data("nested F-test needs at least one added regressor".into()));
    }
    if n <= r1 + r2 {
        return Err(Error::Data(format!("nested F-test needs n ({n}) > r1 + r2 ({})", r1 + r2)));
    }
    if !(ss_f.is_finite() && ss_g.is_finite()) || ss_g < 0.0 {
        return Err(Error::Data("sums of squares must be finite and non-negative".into()));
    }
    // Least-squares rounding can leave the full SSE a hair above the
    // restricted one.
    let slack = 1e-12 * ss_f.abs().max(1e-300);
    if ss_g > ss_f + slack {
        return Err(Error::Data(format!("full-model SSE {ss_g} exceeds restricted SSE {ss_f}")));
    }
    let d2 = (n - r1 - r2) as f64;
    let gain = (ss_f - ss_g).max(0.0);
    let (f_stat, p_value) = if gain == 0.0 {
        (0.0, 1.0)
    } else if ss_g == 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (gain / r2 as f64) / (ss_g / d2);
        (f, stats::f_upper_p(f, r2 as f64, d2))
    };
    Ok(FTestRecord {
        ss_f,
        ss_g,
        r1,
        r2,
        n,
        f_stat,
        p_value,
    })
}
