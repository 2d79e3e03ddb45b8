//! Low-dimensional layout optimization.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{FuzzyGraph, Init, LayoutConfig, ProjectedVectors};
use crate::error::{Error, Result};
use crate::rng;
use crate::shared::SharedMatrix;

const GRAD_CLIP: f64 = 4.0;
const EDGE_CHUNK: usize = 1024;

/// Least-squares fit of `1 / (1 + a x^{2b})` to the target membership curve
/// (1 below `min_dist`, exponential decay with scale `spread` beyond) on 300
/// points over [0, 3 spread], by Levenberg-Marquardt.
pub fn fit_curve(min_dist: f64, spread: f64) -> (f64, f64) {
    let n = 300;
    let xs: Vec<f64> = (0..n).map(|i| 3.0 * spread * i as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| if x < min_dist { 1.0 } else { (-(x - min_dist) / spread).exp() })
        .collect();

    let residuals = |a: f64, b: f64| -> f64 {
        xs.iter()
            .zip(&ys)
            .map(|(&x, &y)| (1.0 / (1.0 + a * x.powf(2.0 * b)) - y).powi(2))
            .sum()
    };
    let (mut a, mut b) = (1.0_f64, 1.0_f64);
    let mut damping = 1e-3;
    let mut cost = residuals(a, b);
    for _ in 0..500 {
        // Normal equations J^T J and J^T r for the two parameters.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let denom = 1.0 + a * p;
            let f = 1.0 / denom;
            let da = -p / (denom * denom);
            let db = -2.0 * a * p * x.ln() / (denom * denom);
            let r = f - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (haa, hbb) = (jaa * (1.0 + damping), jbb * (1.0 + damping));
            let det = haa * hbb - jab * jab;
            if det.abs() < 1e-300 {
                damping *= 10.0;
                continue;
            }
            let step_a = -(hbb * ga - jab * gb) / det;
            let step_b = -(haa * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            let new_cost = if na > 0.0 && nb > 0.0 { residuals(na, nb) } else { f64::INFINITY };
            if new_cost < cost {
                let rel = (cost - new_cost) / cost.max(1e-300);
                a = na;
                b = nb;
                cost = new_cost;
                damping = (damping / 10.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}

fn connected_components(fg: &FuzzyGraph) -> usize {
    let mut parent: Vec<usize> = (0..fg.n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = fg.n;
    for &(i, j, _) in &fg.edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            components -= 1;
        }
    }
    components
}

/// Eigenvectors 1..=d_out of the symmetric normalized Laplacian, ordered by
/// ascending eigenvalue.
fn spectral_layout(fg: &FuzzyGraph, d_out: usize) -> Option<DMatrix<f64>> {
    let n = fg.n;
    if d_out + 1 >= n || connected_components(fg) > 1 {
        return None;
    }
    let mut degree = vec![0.0; n];
    for &(i, j, w) in &fg.edges {
        degree[i] += w;
        degree[j] += w;
    }
    let mut lap = DMatrix::<f64>::identity(n, n);
    for &(i, j, w) in &fg.edges {
        let v = w / (degree[i] * degree[j]).sqrt();
        lap[(i, j)] -= v;
        lap[(j, i)] -= v;
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]).then(x.cmp(&y)));
    let mut coords = DMatrix::zeros(n, d_out);
    for (c, &k) in order[1..=d_out].iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        // Fix the arbitrary eigenvector sign: largest-magnitude entry positive.
        let pivot = v.iter().cloned().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            coords[(r, c)] = sign * v[r];
        }
    }
    Some(coords)
}

/// Starting layout: spectral (or uniform random when the graph is
/// disconnected or too small), plus small Gaussian jitter, each column then
/// rescaled to [0, 10].
pub fn initial_layout(fg: &FuzzyGraph, d_out: usize, init: Init, seed: u64) -> Result<DMatrix<f64>> {
    if d_out == 0 {
        return Err(Error::Config("output dimension must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, "umap-init", &[]);
    let spectral = match init {
        Init::Spectral => spectral_layout(fg, d_out),
        Init::Random => None,
    };
    let mut coords = match spectral {
        Some(mut c) => {
            let max = c.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if max > 0.0 {
                c *= 10.0 / max;
            }
            let jitter = Normal::new(0.0, 1e-4).expect("valid normal");
            c.iter_mut().for_each(|x| *x += jitter.sample(&mut rng));
            c
        }
        None => {
            if init == Init::Spectral {
                log::warn!("spectral initialization unavailable; falling back to random layout");
            }
            DMatrix::from_fn(fg.n, d_out, |_, _| rng.random_range(-10.0..10.0))
        }
    };
    for mut col in coords.column_iter_mut() {
        let (lo, hi) = col.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        let range = hi - lo;
        col.iter_mut().for_each(|x| {
            *x = if range > 0.0 { 10.0 * (*x - lo) / range } else { 0.0 };
        });
    }
    Ok(coords)
}

struct EdgeSchedule {
    head: usize,
    tail: usize,
    epochs_per_sample: f64,
    next_sample: f64,
    next_negative: f64,
}

fn clip(x: f64) -> f64 {
    x.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Stochastic gradient descent on the fuzzy cross-entropy.
pub fn optimize_layout_with(
    fg: &FuzzyGraph,
    d_out: usize,
    cfg: &LayoutConfig,
    seed: u64,
) -> Result<ProjectedVectors> {
    cfg.validate()?;
    let init = initial_layout(fg, d_out, cfg.init, seed)?;
    let epochs = cfg.epochs;
    if epochs == 0 || fg.edges.is_empty() {
        return Ok(ProjectedVectors {
            coords: init,
            epochs: 0,
            seed,
        });
    }
    let (a, b) = match (cfg.a, cfg.b) {
        (Some(a), Some(b)) => (a, b),
        _ => fit_curve(cfg.min_dist, cfg.spread),
    };

    // Edges too weak to be sampled once over the run are dropped.
    let w_max = fg.edges.iter().fold(0.0_f64, |m, e| m.max(e.2));
    let mut schedule = Vec::with_capacity(2 * fg.edges.len());
    for &(i, j, w) in &fg.edges {
        if w < w_max / epochs as f64 {
            continue;
        }
        let eps = w_max / w;
        for (head, tail) in [(i, j), (j, i)] {
            schedule.push(EdgeSchedule {
                head,
                tail,
                epochs_per_sample: eps,
                next_sample: eps,
                next_negative: eps / cfg.negative_sample_rate as f64,
            });
        }
    }

    let row_major: Vec<f64> = (0..fg.n)
        .flat_map(|r| init.row(r).iter().copied().collect::<Vec<_>>())
        .collect();
    let coords = SharedMatrix::from_rows(&row_major, d_out);
    let pool = if cfg.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    let n_vertices = fg.n;
    let neg_rate = cfg.negative_sample_rate as f64;
    for epoch in 0..epochs {
        let alpha = cfg.learning_rate * (1.0 - epoch as f64 / epochs as f64);
        let now = epoch as f64;
        let run_chunk = |(chunk_idx, chunk): (usize, &mut [EdgeSchedule])| {
            let mut rng = rng::indexed_stream(seed, "umap-sgd", epoch as u64, chunk_idx as u64);
            let mut current = vec![0.0; d_out];
            let mut other = vec![0.0; d_out];
            let mut delta = vec![0.0; d_out];
            for edge in chunk.iter_mut() {
                if edge.next_sample > now {
                    continue;
                }
                coords.read_row(edge.head, &mut current);
                coords.read_row(edge.tail, &mut other);
                let d2: f64 = current.iter().zip(&other).map(|(x, y)| (x - y) * (x - y)).sum();
                let coeff = if d2 > 0.0 {
                    -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
                } else {
                    0.0
                };
                for k in 0..d_out {
                    delta[k] = clip(coeff * (current[k] - other[k])) * alpha;
                    current[k] += delta[k];
                }
                coords.add_to_row(edge.head, &delta);
                delta.iter_mut().for_each(|x| *x = -*x);
                coords.add_to_row(edge.tail, &delta);
                edge.next_sample += edge.epochs_per_sample;

                let per_negative = edge.epochs_per_sample / neg_rate;
                let n_neg = ((now - edge.next_negative) / per_negative).floor().max(0.0) as usize;
                for _ in 0..n_neg {
                    let k_vertex = rng.random_range(0..n_vertices);
                    if k_vertex == edge.head {
                        continue;
                    }
                    coords.read_row(k_vertex, &mut other);
                    let d2: f64 = current.iter().zip(&other).map(|(x, y)| (x - y) * (x - y)).sum();
                    if d2 <= 0.0 {
                        continue;
                    }
                    let coeff = 2.0 * cfg.repulsion * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                    for k in 0..d_out {
                        delta[k] = clip(coeff * (current[k] - other[k])) * alpha;
                        current[k] += delta[k];
                    }
                    coords.add_to_row(edge.head, &delta);
                }
                edge.next_negative += n_neg as f64 * per_negative;
            }
        };
        match &pool {
            None => schedule.chunks_mut(EDGE_CHUNK).enumerate().for_each(run_chunk),
            Some(pool) => pool.install(|| {
                schedule.par_chunks_mut(EDGE_CHUNK).enumerate().for_each(run_chunk)
            }),
        }
    }

    let flat = coords.into_vec();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("layout optimization produced non-finite coordinates".into()));
    }
    Ok(ProjectedVectors {
        coords: DMatrix::from_row_slice(fg.n, d_out, &flat),
        epochs,
        seed,
    })
}
