//! Declarative pipeline configuration.
//!
//! One TOML file holds input paths, the date split, the global seed and one
//! section per stage. Every hyperparameter has a default; relative paths are
//! resolved against the directory of the configuration file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use neus_core::corpus::{CorpusConfig, Stopwords};
use neus_core::embedding::EmbeddingConfig;
use neus_core::evaluation::EvaluationConfig;
use neus_core::factor_model::{McpConfig, Mode, Penalty};
use neus_core::projection::{Init, LayoutConfig, Metric};

use crate::error::{io_error, PipelineError, Result};

pub const CONFIG_VERSION: u32 = 1;
pub const ENV_SEED: &str = "NEUS_SEED";
pub const ENV_WORKERS: &str = "NEUS_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for every parallel stage; 1 gives bit-reproducible runs.
    #[serde(default = "one")]
    pub workers: usize,
    /// Stocks to model; defaults to every return column outside the basis
    /// universe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stocks: Option<Vec<String>>,
    pub paths: Paths,
    pub split: SplitDates,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub embedding: EmbeddingSection,
    #[serde(default)]
    pub projection: ProjectionSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
    #[serde(default)]
    pub selection: SelectionSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub news: PathBuf,
    pub returns: PathBuf,
    pub market: PathBuf,
    pub risk_free: PathBuf,
    pub ff5: PathBuf,
    pub industries: PathBuf,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// One word per line; the built-in English list when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords: Option<PathBuf>,
    /// Candidate basis tickers, one per line; every tagged ticker when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universe: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

/// Last week of training and last week of validation; later weeks are test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitDates {
    pub train_end: NaiveDate,
    pub validation_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub min_articles: usize,
    pub n_sample: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let d = CorpusConfig::default();
        CorpusSection {
            min_articles: d.min_articles,
            n_sample: d.n_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub vector_size: usize,
    pub window: usize,
    pub epochs: usize,
    pub min_count: usize,
    pub subsample: f64,
    pub negative: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub train_words: bool,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let d = EmbeddingConfig::default();
        EmbeddingSection {
            vector_size: d.vector_size,
            window: d.window,
            epochs: d.epochs,
            min_count: d.min_count,
            subsample: d.subsample,
            negative: d.negative,
            learning_rate: d.learning_rate,
            min_learning_rate: d.min_learning_rate,
            train_words: d.train_words,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    pub n_neighbors: usize,
    pub n_components: usize,
    pub min_dist: f64,
    pub spread: f64,
    pub epochs: usize,
    pub negative_sample_rate: usize,
    pub learning_rate: f64,
    pub repulsion: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    pub init: Init,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        let d = LayoutConfig::default();
        ProjectionSection {
            n_neighbors: d.n_neighbors,
            n_components: d.n_components,
            min_dist: d.min_dist,
            spread: d.spread,
            epochs: d.epochs,
            negative_sample_rate: d.negative_sample_rate,
            learning_rate: d.learning_rate,
            repulsion: d.repulsion,
            a: d.a,
            b: d.b,
            init: d.init,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub cut_height: f64,
    pub metric: Metric,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection {
            cut_height: neus_core::clustering::DEFAULT_CUT_HEIGHT,
            metric: Metric::Euclidean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionSection {
    /// Selections to run; explanation is required by the evaluation.
    pub modes: Vec<Mode>,
    pub penalty: Penalty,
    pub a: f64,
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub max_support: usize,
    pub window: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub residualize_intercept: bool,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = McpConfig::default();
        SelectionSection {
            modes: vec![Mode::Explanation, Mode::Prediction],
            penalty: d.penalty,
            a: d.a,
            n_lambda: d.n_lambda,
            lambda_min_ratio: d.lambda_min_ratio,
            max_support: d.max_support,
            window: d.window,
            tol: d.tol,
            max_iter: d.max_iter,
            residualize_intercept: d.residualize_intercept,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Significance level of every test and correction.
    pub level: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            level: EvaluationConfig::default().level,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl PipelineConfig {
    /// Reads, applies environment overrides and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.apply_env(path)?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| format!("line {}", line_of(text, s.start))).unwrap_or_else(|| "file".into());
            PipelineError::config(path, at, e.message().replace('\n', " "))
        })
    }

    fn apply_env(&mut self, path: &Path) -> Result<()> {
        if let Ok(v) = std::env::var(ENV_SEED) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|e| PipelineError::config(path, ENV_SEED, format!("`{v}`: {e}")))?;
        }
        if let Ok(v) = std::env::var(ENV_WORKERS) {
            self.workers = v
                .trim()
                .parse()
                .map_err(|e| PipelineError::config(path, ENV_WORKERS, format!("`{v}`: {e}")))?;
        }
        Ok(())
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let field = |f: &str, e: neus_core::Error| match e {
            neus_core::Error::Config(m) => PipelineError::config(path, f, m),
            other => other.into(),
        };
        if self.version != CONFIG_VERSION {
            return Err(PipelineError::config(
                path,
                "version",
                format!("schema version {} is not supported (expected {CONFIG_VERSION})", self.version),
            ));
        }
        if self.seed > i64::MAX as u64 {
            return Err(PipelineError::config(path, "seed", "must fit a signed 64-bit TOML integer"));
        }
        if self.workers == 0 {
            return Err(PipelineError::config(path, "workers", "must be positive"));
        }
        if self.split.train_end >= self.split.validation_end {
            return Err(PipelineError::config(path, "split", "train_end must precede validation_end"));
        }
        if !self.selection.modes.contains(&Mode::Explanation) {
            return Err(PipelineError::config(path, "selection.modes", "must include \"explanation\""));
        }
        let corpus = CorpusConfig {
            min_articles: self.corpus.min_articles,
            n_sample: self.corpus.n_sample,
            ..CorpusConfig::default()
        };
        corpus.validate().map_err(|e| field("corpus", e))?;
        self.embedding_config().validate().map_err(|e| field("embedding", e))?;
        self.layout_config().validate().map_err(|e| field("projection", e))?;
        let h = self.clustering.cut_height;
        if !(h.is_finite() && h >= 0.0) {
            return Err(PipelineError::config(path, "clustering.cut_height", "must be a non-negative number"));
        }
        self.mcp_config().validate().map_err(|e| field("selection", e))?;
        self.evaluation_config().validate().map_err(|e| field("evaluation", e))?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.paths.output)
    }

    pub fn corpus_config(&self) -> Result<CorpusConfig> {
        let stopwords = match &self.paths.stopwords {
            Some(p) => Stopwords::load(&self.resolve(p))?,
            None => Stopwords::english(),
        };
        Ok(CorpusConfig {
            min_articles: self.corpus.min_articles,
            n_sample: self.corpus.n_sample,
            seed: self.seed,
            stopwords,
        })
    }

    pub fn embedding_config(&self) -> EmbeddingConfig {
        let e = &self.embedding;
        EmbeddingConfig {
            vector_size: e.vector_size,
            window: e.window,
            epochs: e.epochs,
            min_count: e.min_count,
            subsample: e.subsample,
            negative: e.negative,
            learning_rate: e.learning_rate,
            min_learning_rate: e.min_learning_rate,
            train_words: e.train_words,
            threads: self.workers,
            seed: self.seed,
        }
    }

    pub fn layout_config(&self) -> LayoutConfig {
        let p = &self.projection;
        LayoutConfig {
            n_neighbors: p.n_neighbors,
            n_components: p.n_components,
            min_dist: p.min_dist,
            spread: p.spread,
            epochs: p.epochs,
            negative_sample_rate: p.negative_sample_rate,
            learning_rate: p.learning_rate,
            repulsion: p.repulsion,
            a: p.a,
            b: p.b,
            init: p.init,
            threads: self.workers,
        }
    }

    pub fn mcp_config(&self) -> McpConfig {
        let s = &self.selection;
        McpConfig {
            a: s.a,
            n_lambda: s.n_lambda,
            lambda_min_ratio: s.lambda_min_ratio,
            max_support: s.max_support,
            window: s.window,
            tol: s.tol,
            max_iter: s.max_iter,
            penalty: s.penalty,
            residualize_intercept: s.residualize_intercept,
            threads: self.workers,
        }
    }

    pub fn evaluation_config(&self) -> EvaluationConfig {
        EvaluationConfig {
            level: self.evaluation.level,
            threads: self.workers,
        }
    }

    /// Configuration for a generated fixture whose files sit next to it.
    pub fn for_fixture(split: SplitDates, seed: u64, cut_height: f64, window: usize) -> Self {
        use crate::synth::files;
        PipelineConfig {
            version: CONFIG_VERSION,
            seed,
            workers: 1,
            stocks: None,
            paths: Paths {
                news: files::NEWS.into(),
                returns: files::RETURNS.into(),
                market: files::MARKET.into(),
                risk_free: files::RISK_FREE.into(),
                ff5: files::FF5.into(),
                industries: files::INDUSTRIES.into(),
                output: default_output(),
                stopwords: None,
                universe: None,
            },
            split,
            corpus: CorpusSection::default(),
            embedding: EmbeddingSection::default(),
            projection: ProjectionSection::default(),
            clustering: ClusteringSection {
                cut_height,
                ..ClusteringSection::default()
            },
            selection: SelectionSection {
                window,
                ..SelectionSection::default()
            },
            evaluation: EvaluationSection::default(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| PipelineError::config(&self.base_dir, "serialize", e))
    }
}
