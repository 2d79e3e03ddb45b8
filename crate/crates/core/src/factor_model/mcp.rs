//! Penalized least squares by cyclic coordinate descent.
//!
//! The problem solved for each penalty level is
//!
//! ```text
//! (1 / 2n) |y - Z b|^2 + sum_j q(b_j; lambda)
//! ```
//!
//! on centered, unit-variance columns `Z` and a centered response. All
//! updates go through the Gram matrix `Z'Z / n` and `Z'y / n`, so a design
//! can be shared by every response fitted on the same window.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{McpConfig, Penalty};
use crate::error::{Error, Result};

/// Minimax concave penalty: `lambda |x| - x^2 / 2a` up to the knot at
/// `|x| = a lambda`, constant `a lambda^2 / 2` beyond.
pub fn mcp_penalty(x: f64, lambda: f64, a: f64) -> f64 {
    let ax = x.abs();
    if ax <= a * lambda {
        lambda * ax - x * x / (2.0 * a)
    } else {
        0.5 * a * lambda * lambda
    }
}

pub fn penalty_value(x: f64, lambda: f64, cfg: &McpConfig) -> f64 {
    match cfg.penalty {
        Penalty::Mcp => mcp_penalty(x, lambda, cfg.a),
        Penalty::Lasso => lambda * x.abs(),
    }
}

/// Exact minimizer of `v b^2 / 2 - z b + q(b)`: the firm threshold for MCP,
/// the soft threshold for the lasso. Requires `v > 1 / a` for MCP.
pub fn threshold(z: f64, v: f64, lambda: f64, a: f64, penalty: Penalty) -> f64 {
    let az = z.abs();
    if az <= lambda {
        return 0.0;
    }
    let shrunk = z.signum() * (az - lambda);
    match penalty {
        Penalty::Lasso => shrunk / v,
        Penalty::Mcp => {
            if az <= a * lambda * v {
                shrunk / (v - 1.0 / a)
            } else {
                z / v
            }
        }
    }
}

/// Centered and scaled columns with their Gram matrix.
#[derive(Debug, Clone)]
pub struct StandardDesign {
    pub n: usize,
    pub means: Vec<f64>,
    /// Population standard deviation per column; 0 marks a constant column,
    /// which never enters the model.
    pub scales: Vec<f64>,
    /// Standardized columns.
    pub columns: Vec<Vec<f64>>,
    /// `Z'Z / n`, row-major p x p.
    pub gram: Vec<f64>,
}

impl StandardDesign {
    pub fn new(columns: &[Vec<f64>]) -> Result<Self> {
        let p = columns.len();
        let n = columns.first().map_or(0, |c| c.len());
        if n < 2 || columns.iter().any(|c| c.len() != n) {
            return Err(Error::Data("design needs equal-length columns with at least two rows".into()));
        }
        let nf = n as f64;
        let mut means = Vec::with_capacity(p);
        let mut scales = Vec::with_capacity(p);
        let mut std_cols = Vec::with_capacity(p);
        for col in columns {
            let mean = col.iter().sum::<f64>() / nf;
            let centered: Vec<f64> = col.iter().map(|x| x - mean).collect();
            let scale = (centered.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
            // Constant up to rounding.
            let amax = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let scale = if scale <= 1e-12 * amax { 0.0 } else { scale };
            let z = if scale > 0.0 { centered.iter().map(|x| x / scale).collect() } else { vec![0.0; n] };
            means.push(mean);
            scales.push(scale);
            std_cols.push(z);
        }
        let mut gram = vec![0.0; p * p];
        for i in 0..p {
            for j in i..p {
                let g = dot(&std_cols[i], &std_cols[j]) / nf;
                gram[i * p + j] = g;
                gram[j * p + i] = g;
            }
        }
        Ok(StandardDesign {
            n,
            means,
            scales,
            columns: std_cols,
            gram,
        })
    }

    pub fn from_matrix(x: &DMatrix<f64>) -> Result<Self> {
        let cols: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
        Self::new(&cols)
    }

    pub fn p(&self) -> usize {
        self.scales.len()
    }

    /// Response-side quantities for this design.
    pub fn response(&self, y: &[f64]) -> Result<Response> {
        if y.len() != self.n {
            return Err(Error::Data(format!("response has {} rows, design has {}", y.len(), self.n)));
        }
        let nf = self.n as f64;
        let mean = y.iter().sum::<f64>() / nf;
        let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let xty = self.columns.iter().map(|z| dot(z, &yc) / nf).collect();
        let yy = dot(&yc, &yc) / nf;
        Ok(Response { mean, xty, yy })
    }

    /// Coefficients on the original column scale and the matching
    /// intercept for a standardized solution.
    pub fn unstandardize(&self, b: &[f64], y_mean: f64) -> (Vec<f64>, f64) {
        let beta: Vec<f64> = b
            .iter()
            .zip(&self.scales)
            .map(|(bj, s)| if *s > 0.0 { bj / s } else { 0.0 })
            .collect();
        let intercept = y_mean - beta.iter().zip(&self.means).map(|(bj, m)| bj * m).sum::<f64>();
        (beta, intercept)
    }
}

#[derive(Debug, Clone)]
pub struct Response {
    pub mean: f64,
    /// `Z'y / n` on the centered response.
    pub xty: Vec<f64>,
    /// `y'y / n` on the centered response.
    pub yy: f64,
}

/// Descending log-spaced penalty levels from the smallest value that zeroes
/// every coefficient down to `lambda_min_ratio` times it.
pub fn lambda_path(design: &StandardDesign, response: &Response, cfg: &McpConfig) -> Vec<f64> {
    let lambda_max = design
        .scales
        .iter()
        .zip(&response.xty)
        .filter(|(s, _)| **s > 0.0)
        .fold(0.0_f64, |m, (_, c)| m.max(c.abs()));
    if lambda_max == 0.0 {
        log::warn!("response has no correlation with any column; using the single path value 0");
        return vec![0.0];
    }
    if cfg.n_lambda == 1 {
        return vec![lambda_max];
    }
    let steps = (cfg.n_lambda - 1) as f64;
    (0..cfg.n_lambda)
        .map(|k| {
            if k == 0 {
                lambda_max
            } else {
                lambda_max * cfg.lambda_min_ratio.powf(k as f64 / steps)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub lambda: f64,
    /// Standardized coefficients.
    pub coefficients: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub objective: f64,
}

impl PathPoint {
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// Penalized objective evaluated through the Gram matrix.
pub fn objective(design: &StandardDesign, response: &Response, b: &[f64], lambda: f64, cfg: &McpConfig) -> f64 {
    let p = design.p();
    let mut quad = 0.0;
    for i in 0..p {
        if b[i] == 0.0 {
            continue;
        }
        let row = &design.gram[i * p..(i + 1) * p];
        quad += b[i] * dot(row, b);
    }
    let lin = dot(&response.xty, b);
    let pen: f64 = b.iter().map(|&x| penalty_value(x, lambda, cfg)).sum();
    0.5 * (response.yy - 2.0 * lin + quad) + pen
}

/// Coordinate descent along a descending path with warm starts.
pub fn fit_mcp_path(design: &StandardDesign, response: &Response, path: &[f64], cfg: &McpConfig) -> Vec<PathPoint> {
    fit_path_impl(design, response, path, cfg, None)
}

/// As [`fit_mcp_path`], also returning the objective after every full sweep
/// for each penalty level.
pub fn fit_mcp_path_traced(
    design: &StandardDesign,
    response: &Response,
    path: &[f64],
    cfg: &McpConfig,
) -> (Vec<PathPoint>, Vec<Vec<f64>>) {
    let mut traces = Vec::new();
    let points = fit_path_impl(design, response, path, cfg, Some(&mut traces));
    (points, traces)
}

fn fit_path_impl(
    design: &StandardDesign,
    response: &Response,
    path: &[f64],
    cfg: &McpConfig,
    mut traces: Option<&mut Vec<Vec<f64>>>,
) -> Vec<PathPoint> {
    let p = design.p();
    let mut b = vec![0.0; p];
    // g = G b, kept in step with b.
    let mut g = vec![0.0; p];
    let active: Vec<usize> = (0..p).filter(|&j| design.scales[j] > 0.0).collect();
    let mut out = Vec::with_capacity(path.len());
    for &lambda in path {
        let mut trace = Vec::new();
        if traces.is_some() {
            trace.push(objective(design, response, &b, lambda, cfg));
        }
        let mut converged = false;
        let mut sweeps = 0;
        while sweeps < cfg.max_iter {
            sweeps += 1;
            let mut max_delta = 0.0_f64;
            for &j in &active {
                let v = design.gram[j * p + j];
                let z = response.xty[j] - g[j] + v * b[j];
                let new = threshold(z, v, lambda, cfg.a, cfg.penalty);
                let delta = new - b[j];
                if delta != 0.0 {
                    b[j] = new;
                    let col = &design.gram[j * p..(j + 1) * p];
                    g.iter_mut().zip(col).for_each(|(gk, gkj)| *gk += delta * gkj);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if traces.is_some() {
                trace.push(objective(design, response, &b, lambda, cfg));
            }
            if max_delta < cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("coordinate descent hit {} sweeps at lambda {lambda:e} without converging", cfg.max_iter);
        }
        if let Some(t) = traces.as_deref_mut() {
            t.push(trace);
        }
        out.push(PathPoint {
            lambda,
            coefficients: b.clone(),
            sweeps,
            converged,
            objective: objective(design, response, &b, lambda, cfg),
        });
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
