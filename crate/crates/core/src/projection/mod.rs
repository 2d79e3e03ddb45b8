//! UMAP projection of company embeddings to a low-dimensional space.
//!
//! The pipeline is the usual three steps: an exact cosine k-NN graph, the
//! fuzzy simplicial set built from it, and an SGD layout of that graph.

mod fuzzy;
mod knn;
mod layout;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use fuzzy::{fuzzy_simplicial_set, FuzzyGraph, BISECTION_ITERATIONS, BISECTION_TOLERANCE};
pub use knn::{knn_graph, pairwise_distances, Metric, NeighborGraph};
pub use layout::{fit_curve, initial_layout, optimize_layout_with};

use crate::error::{Error, Result};
use crate::format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Spectral,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub repulsion: f64,
    /// Curve parameters; fitted from `min_dist` and `spread` when unset.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub init: Init,
    /// 1 = deterministic sequential optimization.
    pub threads: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            n_neighbors: 15,
            n_components: 5,
            min_dist: 0.1,
            spread: 1.0,
            epochs: 500,
            negative_sample_rate: 5,
            learning_rate: 1.0,
            repulsion: 1.0,
            a: None,
            b: None,
            init: Init::Spectral,
            threads: 1,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Config("projection n_neighbors must be at least 2".into()));
        }
        if self.n_components == 0 || self.negative_sample_rate == 0 || self.threads == 0 {
            return Err(Error::Config(
                "projection n_components, negative_sample_rate and threads must be positive".into(),
            ));
        }
        if !(self.spread > 0.0 && self.min_dist >= 0.0 && self.learning_rate > 0.0) {
            return Err(Error::Config("projection spread/min_dist/learning_rate out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedVectors {
    /// n x d_out, rows in input order.
    pub coords: DMatrix<f64>,
    pub epochs: usize,
    pub seed: u64,
}

/// Layout with default settings except the epoch count.
pub fn optimize_layout(fg: &FuzzyGraph, d_out: usize, epochs: usize, seed: u64) -> Result<ProjectedVectors> {
    let cfg = LayoutConfig {
        epochs,
        ..Default::default()
    };
    optimize_layout_with(fg, d_out, &cfg, seed)
}

/// Cosine k-NN graph, fuzzy set and layout in one call. `n_neighbors` is
/// clamped to n - 1 for small inputs.
pub fn project(vectors: &DMatrix<f64>, cfg: &LayoutConfig, seed: u64) -> Result<ProjectedVectors> {
    cfg.validate()?;
    let k = cfg.n_neighbors.min(vectors.nrows().saturating_sub(1));
    let graph = knn_graph(vectors, k, Metric::Cosine)?;
    let fuzzy = fuzzy_simplicial_set(&graph);
    optimize_layout_with(&fuzzy, cfg.n_components, cfg, seed)
}

/// Trustworthiness of a projection: 1 minus the normalized rank penalty of
/// low-dimensional neighbors that are not high-dimensional neighbors. Ranks
/// in the original space use `high_metric`; the projection is euclidean.
pub fn trustworthiness(high: &DMatrix<f64>, low: &DMatrix<f64>, k: usize, high_metric: Metric) -> Result<f64> {
    let n = high.nrows();
    if low.nrows() != n || k == 0 || 2 * n < 3 * k + 2 {
        return Err(Error::Data("trustworthiness needs matching rows and k < n / 2".into()));
    }
    let dh = pairwise_distances(high, high_metric)?;
    let dl = pairwise_distances(low, Metric::Euclidean)?;
    let order = |row: &[f64], i: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        idx
    };
    let mut penalty = 0.0;
    for i in 0..n {
        let high_order = order(&dh[i], i);
        let mut rank = vec![0usize; n];
        for (r, &j) in high_order.iter().enumerate() {
            rank[j] = r + 1;
        }
        for &j in order(&dl[i], i).iter().take(k) {
            if rank[j] > k {
                penalty += (rank[j] - k) as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty)
}

/// `ticker,x1..xd` with 9 significant digits.
pub fn write_csv(path: &Path, tickers: &[String], proj: &ProjectedVectors) -> Result<()> {
    if tickers.len() != proj.coords.nrows() {
        return Err(Error::Data("ticker count does not match projection rows".into()));
    }
    let mut out = String::from("ticker");
    for c in 0..proj.coords.ncols() {
        out.push_str(&format!(",x{}", c + 1));
    }
    out.push('\n');
    for (t, row) in tickers.iter().zip(proj.coords.row_iter()) {
        out.push_str(t);
        for v in row.iter() {
            out.push(',');
            out.push_str(&format::sig(*v, 9));
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(&ctx, e))?;
    let width = reader.headers().map_err(|e| Error::parse(&ctx, e))?.len();
    if width < 2 {
        return Err(Error::parse(&ctx, "expected ticker plus at least one coordinate"));
    }
    let mut tickers = Vec::new();
    let mut values = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
        if rec.len() != width {
            return Err(Error::parse(&ctx, "ragged row"));
        }
        tickers.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            values.push(v.trim().parse::<f64>().map_err(|e| Error::parse(&ctx, e))?);
        }
    }
    let n = tickers.len();
    Ok((tickers, DMatrix::from_row_slice(n, width - 1, &values)))
}
