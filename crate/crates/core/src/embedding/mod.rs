//! Paragraph-vector (PV-DBOW) company embeddings.

mod train;
mod vocab;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use train::{negative_sampling_gradient, negative_sampling_loss, train_pvdbow, TrainingStats};
pub use vocab::{Vocabulary, NOISE_EXPONENT};

use crate::error::{Error, Result};

/// Hyperparameter grid searched when tuning the embedding.
pub const GRID_VECTOR_SIZE: [usize; 4] = [50, 100, 300, 500];
pub const GRID_WINDOW: [usize; 4] = [5, 10, 15, 20];
pub const GRID_EPOCHS: [usize; 4] = [50, 100, 200, 400];

const FORMAT_MAGIC: &str = "neus-pvdbow";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub vector_size: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub subsample: f64,
    pub negative: usize,
    /// Initial learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Jointly train word vectors on in-window neighbors.
    pub train_words: bool,
    /// 1 = deterministic sequential training.
    pub threads: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            vector_size: 100,
            window: 5,
            epochs: 50,
            min_count: 3,
            subsample: 1e-5,
            negative: 5,
            learning_rate: 0.025,
            min_learning_rate: 1e-4,
            train_words: true,
            threads: 1,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vector_size", self.vector_size),
            ("window", self.window),
            ("min_count", self.min_count),
            ("negative", self.negative),
            ("threads", self.threads),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("embedding {name} must be positive")));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!(
                "embedding subsample {} outside (0, 1]",
                self.subsample
            )));
        }
        if !(self.learning_rate > 0.0 && self.min_learning_rate >= 0.0) {
            return Err(Error::Config("embedding learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Every combination of the tuning grid, other fields copied from `self`.
    pub fn grid(&self) -> Vec<EmbeddingConfig> {
        let mut out = Vec::new();
        for &vector_size in &GRID_VECTOR_SIZE {
            for &window in &GRID_WINDOW {
                for &epochs in &GRID_EPOCHS {
                    out.push(EmbeddingConfig {
                        vector_size,
                        window,
                        epochs,
                        ..self.clone()
                    });
                }
            }
        }
        out
    }
}

/// Trained company (paragraph) vectors plus the output word layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    vector_size: usize,
    tickers: Vec<String>,
    index: HashMap<String, usize>,
    company_vectors: Vec<f64>,
    words: Vec<String>,
    word_vectors: Vec<f64>,
}

impl EmbeddingModel {
    pub fn new(
        vector_size: usize,
        tickers: Vec<String>,
        company_vectors: Vec<f64>,
        words: Vec<String>,
        word_vectors: Vec<f64>,
    ) -> Result<Self> {
        if company_vectors.len() != tickers.len() * vector_size
            || word_vectors.len() != words.len() * vector_size
        {
            return Err(Error::Data("embedding matrix shape mismatch".into()));
        }
        if company_vectors.iter().chain(&word_vectors).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("embedding contains non-finite values".into()));
        }
        if let Some(bad) = tickers.iter().chain(&words).find(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(Error::Data(format!("label {bad:?} is empty or contains whitespace")));
        }
        let index: HashMap<String, usize> =
            tickers.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tickers.len() {
            return Err(Error::Data("duplicate ticker in embedding".into()));
        }
        Ok(EmbeddingModel {
            vector_size,
            tickers,
            index,
            company_vectors,
            words,
            word_vectors,
        })
    }

    pub fn vector_size(&self) -> usize {
        self.vector_size
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// The trained paragraph vector of `ticker`, unnormalized.
    pub fn company_embedding(&self, ticker: &str) -> Result<&[f64]> {
        let i = *self
            .index
            .get(ticker)
            .ok_or_else(|| Error::Lookup(ticker.to_string()))?;
        Ok(&self.company_vectors[i * self.vector_size..(i + 1) * self.vector_size])
    }

    pub fn word_vector(&self, idx: usize) -> &[f64] {
        &self.word_vectors[idx * self.vector_size..(idx + 1) * self.vector_size]
    }

    /// Company vectors as an (n_companies x vector_size) matrix.
    pub fn company_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.tickers.len(), self.vector_size, &self.company_vectors)
    }

    /// Text format: a header line with magic and version, `vector_size`,
    /// `companies` and `words` count lines, then one `label v1 .. vd` row per
    /// company followed by one per output word vector. Floats are written in
    /// shortest round-trip form, so reading back is exact.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut buf = String::new();
        let _ = writeln!(buf, "{FORMAT_MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(buf, "vector_size {}", self.vector_size);
        let _ = writeln!(buf, "companies {}", self.tickers.len());
        let _ = writeln!(buf, "words {}", self.words.len());
        let rows = self
            .tickers
            .iter()
            .zip(self.company_vectors.chunks(self.vector_size))
            .chain(self.words.iter().zip(self.word_vectors.chunks(self.vector_size)));
        for (label, row) in rows {
            buf.push_str(label);
            for v in row {
                let _ = write!(buf, " {v}");
            }
            buf.push('\n');
        }
        out.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ctx = path.display().to_string();
        let mut lines = BufReader::new(file).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::parse(&ctx, "unexpected end of file"))?
                .map_err(|e| Error::io(path, e))
        };
        let header = next()?;
        if header != format!("{FORMAT_MAGIC} {FORMAT_VERSION}") {
            return Err(Error::parse(&ctx, format!("unsupported header {header:?}")));
        }
        let mut field = |name: &str| -> Result<usize> {
            let line = next()?;
            line.strip_prefix(name)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| Error::parse(&ctx, format!("expected `{name} <n>`, got {line:?}")))
        };
        let vector_size = field("vector_size")?;
        let n_companies = field("companies")?;
        let n_words = field("words")?;

        let mut read_block = |n: usize| -> Result<(Vec<String>, Vec<f64>)> {
            let mut labels = Vec::with_capacity(n);
            let mut values = Vec::with_capacity(n * vector_size);
            for _ in 0..n {
                let line = next()?;
                let mut parts = line.split(' ');
                labels.push(parts.next().unwrap_or_default().to_string());
                let before = values.len();
                for p in parts {
                    values.push(p.parse::<f64>().map_err(|e| Error::parse(&ctx, e))?);
                }
                if values.len() - before != vector_size {
                    return Err(Error::parse(&ctx, "row length does not match vector_size"));
                }
            }
            Ok((labels, values))
        };
        let (tickers, company_vectors) = read_block(n_companies)?;
        let (words, word_vectors) = read_block(n_words)?;
        Self::new(vector_size, tickers, company_vectors, words, word_vectors)
    }
}
