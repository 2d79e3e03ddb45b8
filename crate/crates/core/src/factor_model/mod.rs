//! Sparse basis selection per stock.
//!
//! Each stock's excess return is explained by the market plus a small subset
//! of prototype assets. Both sides are first residualized on the market, the
//! subset is chosen by a penalized regression whose penalty level is picked
//! by rolling one-week-ahead validation and the 1se rule, and the chosen
//! subset is then refitted by ordinary least squares.

mod mcp;
mod panel;
mod select;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mcp::{
    fit_mcp_path, fit_mcp_path_traced, lambda_path, mcp_penalty, objective, penalty_value, threshold, PathPoint,
    Response, StandardDesign,
};
pub use panel::{excess_returns, ExcessPanel, ReturnPanel, Split};
pub use select::{
    cap_support, finalize_fit, fit_lagged, model_regressors, predict_one_week_ahead, residualize_market,
    rolling_designs, rolling_forward_validate, rolling_ols_predictions, select_lambda_1se, Residualized,
    RollingPredictions, StockWindow, ValidationCurve, WindowDesign,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    Mcp,
    /// Soft thresholding; the `a -> infinity` limit of MCP.
    Lasso,
}

/// Explanation regresses week-t returns on week-t regressors; prediction
/// uses regressors from week t - 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Explanation,
    Prediction,
}

impl Mode {
    pub fn lag(self) -> usize {
        match self {
            Mode::Explanation => 0,
            Mode::Prediction => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McpConfig {
    pub a: f64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub max_support: usize,
    /// Rolling fit window in weeks.
    pub window: usize,
    pub tol: f64,
    /// Maximum coordinate-descent sweeps per penalty level.
    pub max_iter: usize,
    pub penalty: Penalty,
    /// Include an intercept when regressing series on the market.
    pub residualize_intercept: bool,
    /// Worker threads for per-stock selection.
    pub threads: usize,
}

impl Default for McpConfig {
    fn default() -> Self {
        McpConfig {
            a: 3.0,
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            max_support: 20,
            window: 260,
            tol: 1e-7,
            max_iter: 10_000,
            penalty: Penalty::Mcp,
            residualize_intercept: false,
            threads: 1,
        }
    }
}

impl McpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 1.0) {
            return Err(Error::Config(format!("selection a must exceed 1, got {}", self.a)));
        }
        if self.n_lambda == 0 || self.max_support == 0 || self.max_iter == 0 || self.threads == 0 {
            return Err(Error::Config(
                "selection n_lambda, max_support, max_iter and threads must be positive".into(),
            ));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Config("selection lambda_min_ratio must lie in (0, 1)".into()));
        }
        if self.window < 3 {
            return Err(Error::Config("selection window must be at least 3 weeks".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("selection tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub stock: String,
    pub mode: Mode,
    pub penalty: Penalty,
    pub path: Vec<f64>,
    /// Non-zero coefficients per penalty level on the training window, as
    /// (basis index, coefficient on the residualized scale).
    pub path_coefficients: Vec<Vec<(usize, f64)>>,
    pub mse: Vec<f64>,
    pub se: Vec<f64>,
    pub lambda_index: usize,
    pub lambda: f64,
    pub support: Vec<String>,
    /// Whether the selected support had to be cut to `max_support`.
    pub capped: bool,
    /// Final least-squares coefficients aligned with `support`.
    pub coefficients: Vec<f64>,
    pub market_beta: f64,
    pub intercept: f64,
    pub sigma2: f64,
    /// Support entries dropped from the final fit as collinear.
    pub dropped: Vec<String>,
    pub path_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStock {
    pub stock: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionRun {
    /// Sorted by stock.
    pub results: Vec<SelectionResult>,
    pub skipped: Vec<SkippedStock>,
}

/// Weeks used for the in-sample fit: the last `window` training weeks.
pub fn in_sample_weeks(split: &Split, cfg: &McpConfig) -> std::ops::Range<usize> {
    split.train_end.saturating_sub(cfg.window)..split.train_end
}

/// Full selection for one stock given the validation-window designs
/// (`designs[0]` is the window that ends at the training boundary).
pub fn select_stock(
    panel: &ExcessPanel,
    stock: usize,
    prototypes: &[usize],
    designs: &[WindowDesign],
    split: &Split,
    cfg: &McpConfig,
    mode: Mode,
) -> Result<SelectionResult> {
    let train = designs.first().ok_or_else(|| Error::Data("no validation windows".into()))?;
    let y = &panel.returns[stock];
    let sw = train.stock_response(y)?;
    let path = select::path_for(&train.design, &sw, cfg);
    let points = fit_mcp_path(&train.design, &sw.response, &path, cfg);
    let curve = rolling_forward_validate(panel, stock, prototypes, designs, &path, cfg)?;
    let k = select_lambda_1se(&curve.mse, &curve.se, &path)?;
    let (local, capped) = cap_support(&points[k].coefficients, cfg.max_support);
    let support: Vec<usize> = local.iter().map(|&i| prototypes[i]).collect();
    let fit = finalize_fit(panel, stock, &support, in_sample_weeks(split, cfg), mode)?;
    // Column 0 of the final fit is the market.
    let dropped = fit.dropped.iter().filter(|&&c| c > 0).map(|&c| panel.tickers[support[c - 1]].clone()).collect();
    Ok(SelectionResult {
        stock: panel.tickers[stock].clone(),
        mode,
        penalty: cfg.penalty,
        path_coefficients: select::sparse(&points, &train.design),
        path_converged: points.iter().all(|p| p.converged),
        path,
        mse: curve.mse,
        se: curve.se,
        lambda_index: k,
        lambda: points[k].lambda,
        support: support.iter().map(|&j| panel.tickers[j].clone()).collect(),
        capped,
        coefficients: fit.coefficients[1..].iter().map(|c| c.estimate).collect(),
        market_beta: fit.coefficients[0].estimate,
        intercept: fit.alpha(),
        sigma2: fit.sigma2,
        dropped,
    })
}

/// Selection for every listed stock. Stocks with missing weeks inside their
/// windows are skipped and reported.
pub fn select_all(
    panel: &ExcessPanel,
    stocks: &[String],
    basis: &[String],
    split: &Split,
    cfg: &McpConfig,
    mode: Mode,
) -> Result<SelectionRun> {
    cfg.validate()?;
    split.validate(panel.n_weeks())?;
    let prototypes = basis.iter().map(|b| panel.position(b)).collect::<Result<Vec<_>>>()?;
    let stock_idx = stocks.iter().map(|s| panel.position(s)).collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let designs = rolling_designs(panel, &prototypes, split.validation(), cfg, mode)?;
        let fit_weeks = in_sample_weeks(split, cfg);
        let outcomes: Vec<std::result::Result<SelectionResult, SkippedStock>> = stock_idx
            .par_iter()
            .map(|&s| {
                let needed = fit_weeks.start..split.valid_end;
                let attempt = panel
                    .require_complete(s, needed)
                    .and_then(|_| select_stock(panel, s, &prototypes, &designs, split, cfg, mode));
                match attempt {
                    Ok(r) => Ok(Ok(r)),
                    Err(Error::Data(reason)) => {
                        log::warn!("skipping {}: {reason}", panel.tickers[s]);
                        Ok(Err(SkippedStock {
                            stock: panel.tickers[s].clone(),
                            reason,
                        }))
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut run = SelectionRun::default();
        for o in outcomes {
            match o {
                Ok(r) => run.results.push(r),
                Err(s) => run.skipped.push(s),
            }
        }
        run.results.sort_by(|a, b| a.stock.cmp(&b.stock));
        run.skipped.sort_by(|a, b| a.stock.cmp(&b.stock));
        Ok(run)
    })
}

pub fn write_selection_jsonl(path: &Path, results: &[SelectionResult]) -> Result<()> {
    let mut out = Vec::new();
    for r in results {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::parse("selection output", e))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_selection_jsonl(path: &Path) -> Result<Vec<SelectionResult>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let ctx = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(format!("{ctx} line {}", i + 1), e))?);
    }
    Ok(out)
}
