//! Model evaluation: adjusted R² in and out of sample, intercept tests,
//! nested F-tests against the five-factor baseline, multiple-testing
//! corrections and per-industry summaries.

mod ff5;
mod industry;
mod metrics;
mod multiple;
mod report;

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ff5::{baseline_ff5_fit, Ff5Factors, FACTOR_NAMES};
pub use industry::{industry_summary, IndustryMap, IndustryReport, IndustryRow, Sample, INDUSTRIES, UNCLASSIFIED};
pub use metrics::{adjusted_r2_insample, adjusted_r2_oos, intercept_test, nested_f_test, FTestRecord};
pub use multiple::{
    bucket_counts, harmonic, multiple_test_correct, Correction, MultipleTestReport, BUCKET_EDGES, BUCKET_LABELS,
};
pub use report::{
    comparison_report, intercept_report, write_comparison_report, write_ftest_report, write_industry_report,
    write_intercept_report, write_reports, ComparisonRow, InterceptReport, Task, REPORT_FILES,
};

use crate::error::{Error, Result};
use crate::factor_model::{
    fit_lagged, finalize_fit, model_regressors, rolling_ols_predictions, ExcessPanel, Mode, SelectionResult,
    SkippedStock, Split,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Model {
    #[serde(rename = "NEUS")]
    Neus,
    #[serde(rename = "FF5")]
    Ff5,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::Neus => "NEUS",
            Model::Ff5 => "FF5",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Level for the intercept buckets, Bonferroni and BH decisions.
    pub level: f64,
    pub threads: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { level: 0.05, threads: 1 }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("evaluation level must lie in (0, 1), got {}", self.level)));
        }
        if self.threads == 0 {
            return Err(Error::Config("evaluation threads must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to evaluate both models on one panel.
#[derive(Debug, Clone, Copy)]
pub struct EvaluationInputs<'a> {
    pub panel: &'a ExcessPanel,
    /// Aligned to the panel's weeks.
    pub ff5: &'a Ff5Factors,
    pub split: Split,
    /// Rolling and in-sample fit length in weeks.
    pub window: usize,
    /// Selections made with contemporaneous regressors.
    pub explanation: &'a [SelectionResult],
    /// Selections made with lagged regressors; stocks without one get no
    /// prediction score.
    pub prediction: &'a [SelectionResult],
}

/// Scores for one stock under one model. `None` marks an undefined value
/// (zero variation or an exact fit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockEvaluation {
    pub stock: String,
    pub model: Model,
    /// Regressors in the explanation model, excluding the intercept.
    pub n_regressors: usize,
    pub in_sample: Option<f64>,
    pub oos_explanation: Option<f64>,
    pub oos_prediction: Option<f64>,
    pub intercept_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockFTest {
    pub stock: String,
    pub record: FTestRecord,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Evaluation {
    /// Sorted by stock, then model.
    pub stocks: Vec<StockEvaluation>,
    /// Stocks whose selected support adds at least one regressor to the
    /// baseline, sorted by stock.
    pub ftests: Vec<StockFTest>,
    pub skipped: Vec<SkippedStock>,
}

impl Evaluation {
    pub fn for_model(&self, model: Model) -> impl Iterator<Item = &StockEvaluation> {
        self.stocks.iter().filter(move |e| e.model == model)
    }
}

/// Evaluates the selected models and the five-factor baseline for every
/// stock with an explanation selection. Stocks with missing weeks in the
/// evaluated span are skipped and reported.
pub fn evaluate(inputs: &EvaluationInputs, cfg: &EvaluationConfig) -> Result<Evaluation> {
    cfg.validate()?;
    let panel = inputs.panel;
    inputs.split.validate(panel.n_weeks())?;
    if inputs.ff5.dates != panel.dates {
        return Err(Error::Data("factor series are not aligned to the panel week grid".into()));
    }
    if inputs.split.train_end < inputs.window {
        return Err(Error::Config(format!(
            "training period has {} weeks, fewer than the {}-week window",
            inputs.split.train_end, inputs.window
        )));
    }
    let prediction: HashMap<&str, &SelectionResult> =
        inputs.prediction.iter().map(|r| (r.stock.as_str(), r)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        inputs
            .explanation
            .par_iter()
            .map(|sel| match evaluate_stock(inputs, sel, prediction.get(sel.stock.as_str()).copied()) {
                Ok(v) => Ok(Ok(v)),
                Err(Error::Data(reason)) => {
                    log::warn!("not evaluating {}: {reason}", sel.stock);
                    Ok(Err(SkippedStock {
                        stock: sel.stock.clone(),
                        reason,
                    }))
                }
                Err(e) => Err(e),
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = Evaluation::default();
    for o in outcomes {
        match o {
            Ok((evals, ftest)) => {
                out.stocks.extend(evals);
                out.ftests.extend(ftest);
            }
            Err(s) => out.skipped.push(s),
        }
    }
    out.stocks.sort_by(|a, b| a.stock.cmp(&b.stock).then(a.model.cmp(&b.model)));
    out.ftests.sort_by(|a, b| a.stock.cmp(&b.stock));
    out.skipped.sort_by(|a, b| a.stock.cmp(&b.stock));
    Ok(out)
}

fn positions(panel: &ExcessPanel, tickers: &[String]) -> Result<Vec<usize>> {
    tickers.iter().map(|t| panel.position(t)).collect()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn require_all(panel: &ExcessPanel, series: &[usize], weeks: Range<usize>) -> Result<()> {
    series.iter().try_for_each(|&s| panel.require_complete(s, weeks.clone()))
}

fn require_finite(name: &str, values: &[f64], weeks: Range<usize>, panel: &ExcessPanel) -> Result<()> {
    match weeks.clone().find(|&t| !values[t].is_finite()) {
        Some(t) => Err(Error::Data(format!("series {name} is missing week {}", panel.dates[t]))),
        None => Ok(()),
    }
}

type StockOutcome = (Vec<StockEvaluation>, Option<StockFTest>);

fn evaluate_stock(inputs: &EvaluationInputs, sel: &SelectionResult, pred: Option<&SelectionResult>) -> Result<StockOutcome> {
    let panel = inputs.panel;
    let split = inputs.split;
    let window = inputs.window;
    let n_weeks = panel.n_weeks();
    let s = panel.position(&sel.stock)?;
    let support = positions(panel, &sel.support)?;
    let pred_support = pred.map(|p| positions(panel, &p.support)).transpose()?;

    let fit_weeks = split.train_end - window..split.train_end;
    let test = split.test(n_weeks);
    // Earliest week touched: the in-sample window or the first lagged
    // rolling window before the test period.
    let first = fit_weeks.start.min(test.start.saturating_sub(window + 1));
    let span = first..n_weeks;
    let mut series = vec![s];
    series.extend(&support);
    series.extend(pred_support.iter().flatten());
    require_all(panel, &series, span.clone())?;
    require_finite("market", &panel.market, span.clone(), panel)?;
    for (name, f) in FACTOR_NAMES.iter().zip(&inputs.ff5.factors) {
        require_finite(name, f, span.clone(), panel)?;
    }

    let y = &panel.returns[s];
    let baseline_mean = mean(&y[split.validation()]);
    let ff5_cols = inputs.ff5.columns();
    let oos = |regs: &[&[f64]], lag: usize| -> Result<Option<f64>> {
        let p = rolling_ols_predictions(y, regs, test.clone(), window, lag)?;
        adjusted_r2_oos(&p.predicted, &p.actual, baseline_mean, regs.len())
    };

    let neus_fit = finalize_fit(panel, s, &support, fit_weeks.clone(), Mode::Explanation)?;
    let neus_regs = model_regressors(panel, &support);
    let neus_pred = match &pred_support {
        Some(ps) => oos(&model_regressors(panel, ps), 1)?,
        None => None,
    };
    let neus = StockEvaluation {
        stock: sel.stock.clone(),
        model: Model::Neus,
        n_regressors: neus_regs.len(),
        in_sample: adjusted_r2_insample(&neus_fit),
        oos_explanation: oos(&neus_regs, 0)?,
        oos_prediction: neus_pred,
        intercept_p: intercept_test(&neus_fit),
    };

    let ff5_fit = fit_lagged(y, &ff5_cols, fit_weeks.clone(), 0)?;
    let ff5 = StockEvaluation {
        stock: sel.stock.clone(),
        model: Model::Ff5,
        n_regressors: ff5_cols.len(),
        in_sample: adjusted_r2_insample(&ff5_fit),
        oos_explanation: oos(&ff5_cols, 0)?,
        oos_prediction: if pred.is_some() { oos(&ff5_cols, 1)? } else { None },
        intercept_p: intercept_test(&ff5_fit),
    };

    let ftest = if support.is_empty() {
        None
    } else {
        let mut full_cols = ff5_cols.clone();
        full_cols.extend(support.iter().map(|&j| panel.returns[j].as_slice()));
        let full = fit_lagged(y, &full_cols, fit_weeks.clone(), 0)?;
        let r2 = full.r - ff5_fit.r;
        if r2 == 0 {
            None
        } else {
            let record = nested_f_test(ff5_fit.sse, full.sse, r2, fit_weeks.len(), ff5_fit.r)?;
            Some(StockFTest {
                stock: sel.stock.clone(),
                record,
            })
        }
    };
    Ok((vec![neus, ff5], ftest))
}

#[cfg(test)]
mod tests;
