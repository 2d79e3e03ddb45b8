use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cosine,
    Euclidean,
}

/// Exact k-nearest-neighbor lists, self excluded, ascending by distance with
/// ties broken by lower index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    pub metric: Metric,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl NeighborGraph {
    pub fn n_points(&self) -> usize {
        self.indices.len()
    }
}

/// Row vectors prepared for a metric: unit-normalized for cosine.
pub(crate) fn prepared_rows(vectors: &DMatrix<f64>, metric: Metric) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(vectors.nrows());
    for (i, row) in vectors.row_iter().enumerate() {
        let mut v: Vec<f64> = row.iter().copied().collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("row {i} has non-finite entries")));
        }
        if metric == Metric::Cosine {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::Data(format!(
                    "row {i} is a zero vector; cosine distance is undefined"
                )));
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
        rows.push(v);
    }
    Ok(rows)
}

/// Distance between prepared rows. Cosine distance is evaluated as
/// |a - b|^2 / 2 on unit vectors, which equals 1 - cos(a, b) and is exactly
/// zero for duplicated rows.
#[inline]
pub(crate) fn prepared_distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    match metric {
        Metric::Cosine => (sq / 2.0).clamp(0.0, 2.0),
        Metric::Euclidean => sq.sqrt(),
    }
}

/// Full pairwise distance matrix (row-major, n x n).
pub fn pairwise_distances(vectors: &DMatrix<f64>, metric: Metric) -> Result<Vec<Vec<f64>>> {
    let rows = prepared_rows(vectors, metric)?;
    Ok(rows
        .par_iter()
        .map(|a| rows.iter().map(|b| prepared_distance(a, b, metric)).collect())
        .collect())
}

/// Brute-force exact k-NN.
pub fn knn_graph(vectors: &DMatrix<f64>, k: usize, metric: Metric) -> Result<NeighborGraph> {
    let n = vectors.nrows();
    if k == 0 || n < k + 1 {
        return Err(Error::Data(format!(
            "k-NN needs k >= 1 and at least k + 1 points (k = {k}, n = {n})"
        )));
    }
    let rows = prepared_rows(vectors, metric)?;
    let lists: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (prepared_distance(&rows[i], &rows[j], metric), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(k);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let (indices, distances) = lists.into_iter().unzip();
    Ok(NeighborGraph {
        k,
        metric,
        indices,
        distances,
    })
}
