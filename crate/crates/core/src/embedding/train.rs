//! PV-DBOW training with negative sampling.
//!
//! For every kept token position the document vector is trained to score the
//! token above `negative` noise words under a logistic loss. With
//! `train_words` enabled, in-window neighbor word vectors are trained against
//! the same output layer, which places documents and words in one space.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{EmbeddingConfig, EmbeddingModel, Vocabulary};
use crate::corpus::CompanyDocument;
use crate::error::{Error, Result};
use crate::rng;
use crate::shared::SharedMatrix;

#[derive(Debug, Clone, Default)]
pub struct TrainingStats {
    /// Mean logistic loss per (input, target) step, one entry per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

/// ln(1 + e^x) without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loss and d(loss)/d(score) of one logistic term.
#[inline]
fn logistic_term(score: f64, positive: bool) -> (f64, f64) {
    if positive {
        (softplus(-score), sigmoid(score) - 1.0)
    } else {
        (softplus(score), sigmoid(score))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Negative-sampling loss of `input` against output rows, where `labels[k]`
/// marks the true target.
pub fn negative_sampling_loss(input: &[f64], outputs: &[&[f64]], labels: &[bool]) -> f64 {
    outputs
        .iter()
        .zip(labels)
        .map(|(u, &l)| logistic_term(dot(input, u), l).0)
        .sum()
}

/// Analytic gradient of [`negative_sampling_loss`] with respect to the input
/// vector and to every output row.
pub fn negative_sampling_gradient(
    input: &[f64],
    outputs: &[&[f64]],
    labels: &[bool],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut grad_input = vec![0.0; input.len()];
    let mut grad_outputs = Vec::with_capacity(outputs.len());
    for (u, &l) in outputs.iter().zip(labels) {
        let (_, g) = logistic_term(dot(input, u), l);
        for (gi, ui) in grad_input.iter_mut().zip(u.iter()) {
            *gi += g * ui;
        }
        grad_outputs.push(input.iter().map(|x| g * x).collect());
    }
    (grad_input, grad_outputs)
}

struct Scratch {
    input: Vec<f64>,
    output: Vec<f64>,
    input_grad: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            input: vec![0.0; dim],
            output: vec![0.0; dim],
            input_grad: vec![0.0; dim],
        }
    }
}

/// One SGD step on the loss of `scratch.input` predicting `target`; the
/// output layer is updated in place and the descent direction for the input
/// row is left in `scratch.input_grad`. Returns the loss before the update.
fn sgd_step(
    scratch: &mut Scratch,
    target: usize,
    vocab: &Vocabulary,
    negative: usize,
    outputs: &SharedMatrix,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    scratch.input_grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    let mut update = |row: usize, positive: bool, scratch: &mut Scratch| {
        outputs.read_row(row, &mut scratch.output);
        let (l, g) = logistic_term(dot(&scratch.input, &scratch.output), positive);
        loss += l;
        let step = -lr * g;
        for (acc, u) in scratch.input_grad.iter_mut().zip(&scratch.output) {
            *acc += step * u;
        }
        outputs.add_scaled_to_row(row, step, &scratch.input);
    };
    update(target, true, scratch);
    for _ in 0..negative {
        let noise = vocab.sample_noise(rng);
        if noise == target {
            continue;
        }
        update(noise, false, scratch);
    }
    loss
}

pub(super) fn init_rows(seed: u64, domain: &str, rows: usize, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * dim);
    for r in 0..rows {
        let mut rng = rng::indexed_stream(seed, domain, r as u64, 0);
        out.extend((0..dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64));
    }
    out
}

struct Shared<'a> {
    cfg: &'a EmbeddingConfig,
    vocab: &'a Vocabulary,
    docs: Vec<Vec<usize>>,
    doc_vecs: SharedMatrix,
    word_in: SharedMatrix,
    word_out: SharedMatrix,
}

impl Shared<'_> {
    fn learning_rate(&self, epoch: usize, doc: usize) -> f64 {
        let total = (self.cfg.epochs * self.docs.len()) as f64;
        let progress = (epoch * self.docs.len() + doc) as f64 / total;
        let lr0 = self.cfg.learning_rate;
        (lr0 - (lr0 - self.cfg.min_learning_rate) * progress).max(self.cfg.min_learning_rate)
    }

    /// Trains one document for one epoch; returns (loss sum, steps).
    fn train_document(&self, epoch: usize, d: usize) -> Result<(f64, u64)> {
        let cfg = self.cfg;
        let dim = cfg.vector_size;
        let mut rng = rng::indexed_stream(cfg.seed, "pvdbow", epoch as u64, d as u64);
        let lr = self.learning_rate(epoch, d);
        let kept: Vec<usize> = self.docs[d]
            .iter()
            .copied()
            .filter(|&w| rng.random::<f64>() < self.vocab.keep_probability(w, cfg.subsample))
            .collect();

        let mut scratch = Scratch::new(dim);
        let mut loss = 0.0;
        let mut steps = 0u64;
        for (pos, &target) in kept.iter().enumerate() {
            self.doc_vecs.read_row(d, &mut scratch.input);
            loss += sgd_step(&mut scratch, target, self.vocab, cfg.negative, &self.word_out, lr, &mut rng);
            self.doc_vecs.add_to_row(d, &scratch.input_grad);
            steps += 1;

            if cfg.train_words {
                let reduced = rng.random_range(0..cfg.window);
                let span = cfg.window - reduced;
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(kept.len() - 1);
                for ctx in lo..=hi {
                    if ctx == pos {
                        continue;
                    }
                    let row = kept[ctx];
                    self.word_in.read_row(row, &mut scratch.input);
                    loss += sgd_step(&mut scratch, target, self.vocab, cfg.negative, &self.word_out, lr, &mut rng);
                    self.word_in.add_to_row(row, &scratch.input_grad);
                    steps += 1;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite training loss at epoch {epoch}, document {d}, position {pos}"
                )));
            }
        }
        Ok((loss, steps))
    }
}

/// Trains paragraph vectors for `docs` (in order) against `vocab`.
///
/// With `cfg.threads == 1` training is sequential and bit-reproducible for a
/// fixed seed. With more threads documents of an epoch are processed
/// concurrently without locks and results vary between runs.
pub fn train_pvdbow(
    docs: &[CompanyDocument],
    vocab: &Vocabulary,
    cfg: &EmbeddingConfig,
) -> Result<(EmbeddingModel, TrainingStats)> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Config("no documents to train on".into()));
    }
    let dim = cfg.vector_size;
    let shared = Shared {
        cfg,
        vocab,
        docs: docs
            .iter()
            .map(|d| d.tokens.iter().filter_map(|t| vocab.get(t)).collect())
            .collect(),
        doc_vecs: SharedMatrix::from_rows(&init_rows(cfg.seed, "init-doc", docs.len(), dim), dim),
        word_in: SharedMatrix::from_rows(&init_rows(cfg.seed, "init-word", vocab.len(), dim), dim),
        word_out: SharedMatrix::from_rows(&vec![0.0; vocab.len() * dim], dim),
    };

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

    let mut stats = TrainingStats::default();
    for epoch in 0..cfg.epochs {
        let per_doc: Vec<(f64, u64)> = match &pool {
            None => (0..docs.len())
                .map(|d| shared.train_document(epoch, d))
                .collect::<Result<_>>()?,
            Some(pool) => pool.install(|| {
                (0..docs.len())
                    .into_par_iter()
                    .map(|d| shared.train_document(epoch, d))
                    .collect::<Result<_>>()
            })?,
        };
        let (loss, steps) = per_doc
            .iter()
            .fold((0.0, 0u64), |acc, x| (acc.0 + x.0, acc.1 + x.1));
        stats.epoch_loss.push(if steps > 0 { loss / steps as f64 } else { f64::NAN });
        stats.steps += steps;
        log::debug!("pvdbow epoch {epoch}: mean loss {:.5}", loss / steps.max(1) as f64);
    }

    let model = EmbeddingModel::new(
        dim,
        docs.iter().map(|d| d.ticker.clone()).collect(),
        shared.doc_vecs.into_vec(),
        vocab.words().to_vec(),
        shared.word_out.into_vec(),
    )?;
    Ok((model, stats))
}
