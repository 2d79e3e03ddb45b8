use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::EmbeddingConfig;
use crate::corpus::CompanyDocument;
use crate::error::{Error, Result};

/// Exponent applied to unigram counts for the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    total: u64,
    noise_probs: Vec<f64>,
    noise: WeightedIndex<f64>,
}

impl Vocabulary {
    /// Counts tokens over all documents and keeps words seen at least
    /// `min_count` times. Indices are assigned by descending count, ties by
    /// word, so the layout is independent of document order.
    pub fn build(docs: &[CompanyDocument], cfg: &EmbeddingConfig) -> Result<Self> {
        if docs.is_empty() {
            return Err(Error::Config("cannot build a vocabulary from zero documents".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in docs {
            for tok in &doc.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= cfg.min_count as u64)
            .collect();
        if kept.is_empty() {
            return Err(Error::Config(format!(
                "vocabulary is empty after applying min_count = {}",
                cfg.min_count
            )));
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::from_counts(kept.into_iter().map(|(w, c)| (w.to_string(), c)).collect())
    }

    /// `entries` must already be in index order.
    pub(crate) fn from_counts(entries: Vec<(String, u64)>) -> Result<Self> {
        let total = entries.iter().map(|e| e.1).sum();
        let weights: Vec<f64> = entries
            .iter()
            .map(|&(_, c)| (c as f64).powf(NOISE_EXPONENT))
            .collect();
        let norm: f64 = weights.iter().sum();
        let noise = WeightedIndex::new(&weights)
            .map_err(|e| Error::Numerical(format!("noise distribution: {e}")))?;
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Ok(Vocabulary {
            words,
            counts,
            index,
            total,
            noise_probs: weights.iter().map(|w| w / norm).collect(),
            noise,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn count(&self, idx: usize) -> u64 {
        self.counts[idx]
    }

    /// Total number of retained tokens.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Relative corpus frequency of a retained word.
    pub fn frequency(&self, idx: usize) -> f64 {
        self.counts[idx] as f64 / self.total as f64
    }

    /// Analytic noise probability, count^0.75 normalized.
    pub fn noise_probability(&self, idx: usize) -> f64 {
        self.noise_probs[idx]
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.noise.sample(rng)
    }

    /// Probability of keeping an occurrence under frequent-word subsampling:
    /// min(1, sqrt(threshold / f(w))).
    pub fn keep_probability(&self, idx: usize, threshold: f64) -> f64 {
        (threshold / self.frequency(idx)).sqrt().min(1.0)
    }
}
