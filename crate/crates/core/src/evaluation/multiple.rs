//! Family-wise and false-discovery-rate corrections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    Bonferroni,
    /// Benjamini-Hochberg step-up.
    Bh,
    /// Benjamini-Hochberg-Yekutieli: BH at `level / c(m)`.
    Bhy,
}

/// Upper edges of the reporting buckets `[0, 0.05]`, `(0.05, 0.9]`,
/// `(0.9, 1]`.
pub const BUCKET_EDGES: [f64; 2] = [0.05, 0.9];
pub const BUCKET_LABELS: [&str; 3] = ["0-0.05", "0.05-0.9", "0.9-1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipleTestReport {
    pub method: Correction,
    pub level: f64,
    pub pvalues: Vec<f64>,
    pub rejected: Vec<bool>,
    /// Adjusted p-values for `method`; BHY q-values when `method` is BHY.
    pub qvalues: Vec<f64>,
    /// Raw p-value counts per bucket.
    pub buckets: [usize; 3],
}

impl MultipleTestReport {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Harmonic sum `c(m) = 1 + 1/2 + ... + 1/m`.
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

pub fn bucket_counts(values: &[f64]) -> [usize; 3] {
    let mut out = [0; 3];
    for &v in values {
        let b = if v <= BUCKET_EDGES[0] {
            0
        } else if v <= BUCKET_EDGES[1] {
            1
        } else {
            2
        };
        out[b] += 1;
    }
    out
}

pub fn multiple_test_correct(pvals: &[f64], method: Correction, level: f64) -> Result<MultipleTestReport> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Data(format!("p-value {p} is outside [0, 1]")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("test level must lie in (0, 1), got {level}")));
    }
    let m = pvals.len();
    let (rejected, qvalues) = match method {
        Correction::Bonferroni => {
            let cut = level / m as f64;
            (
                pvals.iter().map(|&p| p <= cut).collect(),
                pvals.iter().map(|&p| (p * m as f64).min(1.0)).collect(),
            )
        }
        Correction::Bh => (step_up(pvals, level, 1.0), step_up_qvalues(pvals, 1.0)),
        Correction::Bhy => {
            let c = harmonic(m);
            (step_up(pvals, level, c), step_up_qvalues(pvals, c))
        }
    };
    Ok(MultipleTestReport {
        method,
        level,
        pvalues: pvals.to_vec(),
        rejected,
        qvalues,
        buckets: bucket_counts(pvals),
    })
}

/// Ascending order of p-values, ties by position.
fn order(pvals: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pvals.len()).collect();
    idx.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    idx
}

/// Rejects the `k` smallest p-values for the largest `k` with
/// `p_(k) <= k level / (m c)`.
fn step_up(pvals: &[f64], level: f64, c: f64) -> Vec<bool> {
    let m = pvals.len();
    let idx = order(pvals);
    let cutoff = (1..=m).rev().find(|&k| pvals[idx[k - 1]] <= level * k as f64 / (m as f64 * c));
    let mut out = vec![false; m];
    if let Some(k) = cutoff {
        idx[..k].iter().for_each(|&i| out[i] = true);
    }
    out
}

/// `q_(k) = min_{j >= k} min(1, m c p_(j) / j)`.
fn step_up_qvalues(pvals: &[f64], c: f64) -> Vec<f64> {
    let m = pvals.len();
    let idx = order(pvals);
    let mut out = vec![0.0; m];
    let mut running = 1.0_f64;
    for k in (1..=m).rev() {
        let i = idx[k - 1];
        running = running.min(m as f64 * c * pvals[i] / k as f64);
        out[i] = running.min(1.0);
    }
    out
}
