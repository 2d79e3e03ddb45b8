//! Market residualization, rolling forward validation and the final
//! per-stock fit.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcp::{fit_mcp_path, lambda_path, PathPoint, StandardDesign};
use super::{ExcessPanel, McpConfig, Mode};
use crate::error::{Error, Result};
use crate::regression::{ols, RegressionFit};
use crate::stats;

/// Least-squares split of a series into a market component and a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Residualized {
    pub loading: f64,
    /// Zero unless the regression includes an intercept.
    pub intercept: f64,
    pub residual: Vec<f64>,
}

/// Regresses `series` on `market` (no intercept unless requested) and
/// returns the loading and residual.
pub fn residualize_market(series: &[f64], market: &[f64], intercept: bool) -> Result<Residualized> {
    let n = series.len();
    if n < 2 || market.len() != n {
        return Err(Error::Data("residualization needs two or more aligned weeks".into()));
    }
    let (mx, my) = if intercept {
        (market.iter().sum::<f64>() / n as f64, series.iter().sum::<f64>() / n as f64)
    } else {
        (0.0, 0.0)
    };
    let sxx: f64 = market.iter().map(|m| (m - mx) * (m - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Data("market excess return has zero variation over the window".into()));
    }
    let sxy: f64 = market.iter().zip(series).map(|(m, y)| (m - mx) * (y - my)).sum();
    let loading = sxy / sxx;
    let icpt = my - loading * mx;
    let residual = series.iter().zip(market).map(|(y, m)| y - icpt - loading * m).collect();
    Ok(Residualized {
        loading,
        intercept: icpt,
        residual,
    })
}

/// Everything about one fitting window that does not depend on the stock:
/// residualized, standardized prototype columns and their Gram matrix.
#[derive(Debug, Clone)]
pub struct WindowDesign {
    /// Target weeks; regressors are read `lag` weeks earlier.
    pub weeks: Range<usize>,
    pub lag: usize,
    pub market: Vec<f64>,
    pub loadings: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub design: StandardDesign,
    residualize_intercept: bool,
}

impl WindowDesign {
    pub fn build(
        panel: &ExcessPanel,
        prototypes: &[usize],
        weeks: Range<usize>,
        mode: Mode,
        residualize_intercept: bool,
    ) -> Result<Self> {
        let lag = mode.lag();
        if weeks.start < lag || weeks.end > panel.n_weeks() || weeks.len() < 2 {
            return Err(Error::Data(format!(
                "window {}..{} with lag {lag} does not fit a {}-week panel",
                weeks.start,
                weeks.end,
                panel.n_weeks()
            )));
        }
        let rows = weeks.start - lag..weeks.end - lag;
        let market = panel.market[rows.clone()].to_vec();
        let mut loadings = Vec::with_capacity(prototypes.len());
        let mut intercepts = Vec::with_capacity(prototypes.len());
        let mut columns = Vec::with_capacity(prototypes.len());
        for &j in prototypes {
            panel.require_complete(j, rows.clone())?;
            let r = residualize_market(&panel.returns[j][rows.clone()], &market, residualize_intercept)?;
            loadings.push(r.loading);
            intercepts.push(r.intercept);
            columns.push(r.residual);
        }
        Ok(WindowDesign {
            weeks,
            lag,
            market,
            loadings,
            intercepts,
            design: StandardDesign::new(&columns)?,
            residualize_intercept,
        })
    }

    /// Stock-side fit inputs on this window.
    pub fn stock_response(&self, y: &[f64]) -> Result<StockWindow> {
        let target = &y[self.weeks.clone()];
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("stock series has missing weeks inside the window".into()));
        }
        let resid = residualize_market(target, &self.market, self.residualize_intercept)?;
        let response = self.design.response(&resid.residual)?;
        Ok(StockWindow { resid, response })
    }

    /// Standardized regressor values for target week `t`, plus the part of
    /// the prediction that does not depend on the penalized coefficients.
    fn prediction_inputs(&self, panel: &ExcessPanel, prototypes: &[usize], stock: &StockWindow, t: usize) -> Result<(f64, Vec<f64>)> {
        let s = t.checked_sub(self.lag).ok_or_else(|| Error::Data(format!("week {t} has no lagged regressors")))?;
        let m = panel.market[s];
        let base = stock.resid.intercept + stock.resid.loading * m + stock.response.mean;
        let mut u = Vec::with_capacity(prototypes.len());
        for (k, &j) in prototypes.iter().enumerate() {
            let x = panel.returns[j][s];
            if !x.is_finite() {
                return Err(Error::Data(format!("series {} is missing week {}", panel.tickers[j], panel.dates[s])));
            }
            let scale = self.design.scales[k];
            u.push(if scale > 0.0 {
                (x - self.intercepts[k] - self.loadings[k] * m - self.design.means[k]) / scale
            } else {
                0.0
            });
        }
        Ok((base, u))
    }
}

#[derive(Debug, Clone)]
pub struct StockWindow {
    pub resid: Residualized,
    pub response: super::mcp::Response,
}

/// Designs for the rolling windows ending just before each target week.
pub fn rolling_designs(
    panel: &ExcessPanel,
    prototypes: &[usize],
    targets: Range<usize>,
    cfg: &McpConfig,
    mode: Mode,
) -> Result<Vec<WindowDesign>> {
    let lag = mode.lag();
    if targets.start < cfg.window + lag {
        return Err(Error::Data(format!(
            "insufficient history: week {} needs {} earlier weeks",
            targets.start,
            cfg.window + lag
        )));
    }
    targets
        .into_par_iter()
        .map(|t| WindowDesign::build(panel, prototypes, t - cfg.window..t, mode, cfg.residualize_intercept))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCurve {
    /// Target weeks, in order.
    pub weeks: Vec<usize>,
    /// Squared prediction error per week (outer) and penalty level (inner).
    pub errors: Vec<Vec<f64>>,
    pub mse: Vec<f64>,
    pub se: Vec<f64>,
}

/// Refits the whole path on the window before each target week and scores
/// the one-week prediction. `designs[i]` must be the window for target week
/// `designs[i].weeks.end`.
pub fn rolling_forward_validate(
    panel: &ExcessPanel,
    stock: usize,
    prototypes: &[usize],
    designs: &[WindowDesign],
    path: &[f64],
    cfg: &McpConfig,
) -> Result<ValidationCurve> {
    let y = &panel.returns[stock];
    let mut weeks = Vec::with_capacity(designs.len());
    let mut errors = Vec::with_capacity(designs.len());
    for w in designs {
        let t = w.weeks.end;
        if t >= panel.n_weeks() || !y[t].is_finite() {
            return Err(Error::Data(format!("stock {} has no return for validation week {t}", panel.tickers[stock])));
        }
        let sw = w.stock_response(y)?;
        let points = fit_mcp_path(&w.design, &sw.response, path, cfg);
        let (base, u) = w.prediction_inputs(panel, prototypes, &sw, t)?;
        errors.push(
            points
                .iter()
                .map(|pt| {
                    let pred = base + pt.coefficients.iter().zip(&u).map(|(b, x)| b * x).sum::<f64>();
                    (y[t] - pred).powi(2)
                })
                .collect::<Vec<f64>>(),
        );
        weeks.push(t);
    }
    let (mse, se) = (0..path.len())
        .map(|k| stats::mean_and_se(&errors.iter().map(|e| e[k]).collect::<Vec<_>>()))
        .unzip();
    Ok(ValidationCurve { weeks, errors, mse, se })
}

/// Index of the largest penalty (the path is descending) whose MSE is within
/// one standard error of the minimum.
pub fn select_lambda_1se(mse: &[f64], se: &[f64], path: &[f64]) -> Result<usize> {
    if mse.is_empty() || mse.len() != se.len() || mse.len() != path.len() {
        return Err(Error::Data("MSE, SE and path must be non-empty and aligned".into()));
    }
    if path.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Data("penalty path must be descending".into()));
    }
    let best = (0..mse.len())
        .filter(|&k| mse[k].is_finite())
        .min_by(|&a, &b| mse[a].total_cmp(&mse[b]).then(a.cmp(&b)))
        .ok_or_else(|| Error::Numerical("validation MSE is not finite anywhere on the path".into()))?;
    let bound = mse[best] + se[best];
    Ok((0..=best).find(|&k| mse[k] <= bound).unwrap_or(best))
}

/// Non-zero coordinates, keeping the `max_support` largest in magnitude
/// (ties to the lower index). Returned ascending.
pub fn cap_support(coefficients: &[f64], max_support: usize) -> (Vec<usize>, bool) {
    let mut nz: Vec<usize> = (0..coefficients.len()).filter(|&j| coefficients[j] != 0.0).collect();
    let capped = nz.len() > max_support;
    if capped {
        nz.sort_by(|&a, &b| coefficients[b].abs().total_cmp(&coefficients[a].abs()).then(a.cmp(&b)));
        nz.truncate(max_support);
        nz.sort_unstable();
    }
    (nz, capped)
}

/// Regressor series used by the final model: market first, then the
/// selected prototypes.
pub fn model_regressors<'a>(panel: &'a ExcessPanel, support: &[usize]) -> Vec<&'a [f64]> {
    std::iter::once(panel.market.as_slice())
        .chain(support.iter().map(|&j| panel.returns[j].as_slice()))
        .collect()
}

/// OLS with intercept of the stock's excess return on market plus the
/// selected prototypes over the target weeks `fit_weeks`.
pub fn finalize_fit(panel: &ExcessPanel, stock: usize, support: &[usize], fit_weeks: Range<usize>, mode: Mode) -> Result<RegressionFit> {
    let regs = model_regressors(panel, support);
    fit_lagged(&panel.returns[stock], &regs, fit_weeks, mode.lag())
}

/// OLS of `y[t]` on `regressors[..][t - lag]` for `t` in `weeks`.
pub fn fit_lagged(y: &[f64], regressors: &[&[f64]], weeks: Range<usize>, lag: usize) -> Result<RegressionFit> {
    if weeks.start < lag || weeks.end > y.len() {
        return Err(Error::Data(format!("fit window {}..{} is outside the series", weeks.start, weeks.end)));
    }
    let rows = weeks.start - lag..weeks.end - lag;
    let cols: Vec<&[f64]> = regressors.iter().map(|r| &r[rows.clone()]).collect();
    ols(&y[weeks], &cols, true)
}

/// `alpha + sum beta_j x_j` for regressors observed at week t - 1 (or t in
/// explanation mode).
pub fn predict_one_week_ahead(fit: &RegressionFit, regressors: &[f64]) -> Result<f64> {
    fit.predict(regressors)
}

/// One prediction per target week from an OLS refit on the `window` weeks
/// before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingPredictions {
    pub weeks: Vec<usize>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn rolling_ols_predictions(
    y: &[f64],
    regressors: &[&[f64]],
    targets: Range<usize>,
    window: usize,
    lag: usize,
) -> Result<RollingPredictions> {
    if targets.start < window + lag {
        return Err(Error::Data(format!(
            "insufficient history: week {} needs {} earlier weeks",
            targets.start,
            window + lag
        )));
    }
    let mut out = RollingPredictions {
        weeks: Vec::new(),
        actual: Vec::new(),
        predicted: Vec::new(),
    };
    for t in targets {
        let fit = fit_lagged(y, regressors, t - window..t, lag)?;
        let row: Vec<f64> = regressors.iter().map(|r| r[t - lag]).collect();
        if !y[t].is_finite() {
            return Err(Error::Data(format!("response is missing week {t}")));
        }
        out.weeks.push(t);
        out.actual.push(y[t]);
        out.predicted.push(predict_one_week_ahead(&fit, &row)?);
    }
    Ok(out)
}

pub(crate) fn sparse(points: &[PathPoint], design: &StandardDesign) -> Vec<Vec<(usize, f64)>> {
    points
        .iter()
        .map(|pt| {
            pt.coefficients
                .iter()
                .zip(&design.scales)
                .enumerate()
                .filter(|(_, (b, _))| **b != 0.0)
                .map(|(j, (b, s))| (j, b / s))
                .collect()
        })
        .collect()
}

pub(crate) fn path_for(design: &StandardDesign, sw: &StockWindow, cfg: &McpConfig) -> Vec<f64> {
    lambda_path(design, &sw.response, cfg)
}
