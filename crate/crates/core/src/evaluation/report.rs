//! Report tables written as CSV with six significant digits.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::industry::{industry_summary, IndustryMap, IndustryReport};
use super::multiple::{bucket_counts, multiple_test_correct, Correction, BUCKET_LABELS};
use super::{Evaluation, Model, StockFTest};
use crate::error::{Error, Result};
use crate::format::sig;
use crate::stats::mean_and_se;

const DIGITS: usize = 6;

pub const REPORT_FILES: [&str; 4] = [
    "intercept_report.csv",
    "comparison_report.csv",
    "industry_report.csv",
    "ftest_report.csv",
];

const MODELS: [Model; 2] = [Model::Neus, Model::Ff5];

/// Shares of intercept p-values and of their BHY q-values per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptReport {
    /// Stocks with a defined intercept p-value, per model.
    pub n: [usize; 2],
    /// `[model][bucket]`.
    pub p_shares: [[f64; 3]; 2],
    pub q_shares: [[f64; 3]; 2],
}

pub fn intercept_report(eval: &Evaluation, level: f64) -> Result<InterceptReport> {
    let mut report = InterceptReport {
        n: [0; 2],
        p_shares: [[f64::NAN; 3]; 2],
        q_shares: [[f64::NAN; 3]; 2],
    };
    for (k, model) in MODELS.iter().enumerate() {
        let pvals: Vec<f64> = eval.for_model(*model).filter_map(|e| e.intercept_p).collect();
        let undefined = eval.for_model(*model).filter(|e| e.intercept_p.is_none()).count();
        if undefined > 0 {
            log::warn!("{undefined} {} intercept tests are undefined and left out", model.label());
        }
        report.n[k] = pvals.len();
        if pvals.is_empty() {
            continue;
        }
        let q = multiple_test_correct(&pvals, Correction::Bhy, level)?.qvalues;
        let share = |counts: [usize; 3]| counts.map(|c| c as f64 / pvals.len() as f64);
        report.p_shares[k] = share(bucket_counts(&pvals));
        report.q_shares[k] = share(bucket_counts(&q));
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    InSampleExplanation,
    OutOfSampleExplanation,
    OutOfSamplePrediction,
}

impl Task {
    pub const ALL: [Task; 3] = [
        Task::InSampleExplanation,
        Task::OutOfSampleExplanation,
        Task::OutOfSamplePrediction,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Task::InSampleExplanation => "in_sample_explanation",
            Task::OutOfSampleExplanation => "out_of_sample_explanation",
            Task::OutOfSamplePrediction => "out_of_sample_prediction",
        }
    }
}

/// Mean adjusted R² with its standard error per model for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub task: Task,
    /// `[NEUS, FF5]`.
    pub mean: [f64; 2],
    pub se: [f64; 2],
    pub n: [usize; 2],
}

pub fn comparison_report(eval: &Evaluation) -> Vec<ComparisonRow> {
    Task::ALL
        .iter()
        .map(|&task| {
            let mut row = ComparisonRow {
                task,
                mean: [f64::NAN; 2],
                se: [f64::NAN; 2],
                n: [0; 2],
            };
            for (k, model) in MODELS.iter().enumerate() {
                let values: Vec<f64> = eval
                    .for_model(*model)
                    .filter_map(|e| match task {
                        Task::InSampleExplanation => e.in_sample,
                        Task::OutOfSampleExplanation => e.oos_explanation,
                        Task::OutOfSamplePrediction => e.oos_prediction,
                    })
                    .collect();
                let (m, se) = mean_and_se(&values);
                row.mean[k] = m;
                row.se[k] = se;
                row.n[k] = values.len();
            }
            row
        })
        .collect()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn put<W: std::io::Write>(w: &mut csv::Writer<W>, path: &Path, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| Error::parse(path.display().to_string(), e))
}

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn s6(v: f64) -> String {
    sig(v, DIGITS)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn write_intercept_report(path: &Path, report: &InterceptReport) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, &strings(&["p_value", "NEUS", "FF5", "NEUS_fdr_q", "FF5_fdr_q"]))?;
    for (b, label) in BUCKET_LABELS.iter().enumerate() {
        put(
            &mut w,
            path,
            &[
                label.to_string(),
                s6(report.p_shares[0][b]),
                s6(report.p_shares[1][b]),
                s6(report.q_shares[0][b]),
                s6(report.q_shares[1][b]),
            ],
        )?;
    }
    finish(w, path)
}

/// The first line records the adjustment used for every task.
pub fn write_comparison_report(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(
        b"# adjusted R2 = 1 - (SSE/(n-r-1))/(SST/(n-1)) in every task; out-of-sample SST is taken about the validation-period mean\n",
    );
    {
        let mut w = csv::Writer::from_writer(&mut out);
        put(
            &mut w,
            path,
            &strings(&["task", "NEUS_mean", "NEUS_se", "NEUS_n", "FF5_mean", "FF5_se", "FF5_n"]),
        )?;
        for r in rows {
            put(
                &mut w,
                path,
                &[
                    r.task.label().to_string(),
                    s6(r.mean[0]),
                    s6(r.se[0]),
                    r.n[0].to_string(),
                    s6(r.mean[1]),
                    s6(r.se[1]),
                    r.n[1].to_string(),
                ],
            )?;
        }
        finish(w, path)?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_industry_report(path: &Path, report: &IndustryReport) -> Result<()> {
    let mut w = writer(path)?;
    put(&mut w, path, &strings(&["industry", "model", "sample", "n_stocks", "mean_adjusted_r2"]))?;
    for r in &report.rows {
        put(
            &mut w,
            path,
            &[
                r.industry.clone(),
                r.model.label().to_string(),
                r.sample.label().to_string(),
                r.n_stocks.to_string(),
                s6(r.mean_adjusted_r2),
            ],
        )?;
    }
    finish(w, path)
}

/// Per-stock F statistics with Bonferroni (`level / m`) and BH decisions
/// across all tested stocks.
pub fn write_ftest_report(path: &Path, ftests: &[StockFTest], level: f64) -> Result<()> {
    let pvals: Vec<f64> = ftests.iter().map(|f| f.record.p_value).collect();
    let bonf = multiple_test_correct(&pvals, Correction::Bonferroni, level)?;
    let bh = multiple_test_correct(&pvals, Correction::Bh, level)?;
    let mut w = writer(path)?;
    put(
        &mut w,
        path,
        &strings(&[
            "stock",
            "n",
            "r1",
            "r2",
            "ss_f",
            "ss_g",
            "f_stat",
            "p_value",
            "bonferroni_reject",
            "bh_reject",
        ]),
    )?;
    for (i, f) in ftests.iter().enumerate() {
        let r = &f.record;
        put(
            &mut w,
            path,
            &[
                f.stock.clone(),
                r.n.to_string(),
                r.r1.to_string(),
                r.r2.to_string(),
                s6(r.ss_f),
                s6(r.ss_g),
                s6(r.f_stat),
                s6(r.p_value),
                bonf.rejected[i].to_string(),
                bh.rejected[i].to_string(),
            ],
        )?;
    }
    finish(w, path)
}

/// Writes all four report tables into `dir` and returns their paths.
pub fn write_reports(dir: &Path, eval: &Evaluation, industries: &IndustryMap, level: f64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = REPORT_FILES.iter().map(|f| dir.join(f)).collect();
    write_intercept_report(&paths[0], &intercept_report(eval, level)?)?;
    write_comparison_report(&paths[1], &comparison_report(eval))?;
    write_industry_report(&paths[2], &industry_summary(&eval.stocks, industries))?;
    write_ftest_report(&paths[3], &eval.ftests, level)?;
    Ok(paths)
}
