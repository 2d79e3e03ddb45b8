//! The seven pipeline stages and their cached execution.
//!
//! Each stage writes its artifacts under `<output>/<stage>/` and records them
//! in the manifest under a key hashed from the stage's own parameters, its
//! input files and the keys of the stages it reads. A stage whose key and
//! files are unchanged is not run again.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::json;

use neus_core::clustering::{cut_dendrogram, minimax_linkage_cluster, BasisSet, Dendrogram};
use neus_core::corpus::{load_articles, select_company_documents, ArticleFormat, CompanyDocument};
use neus_core::embedding::{train_pvdbow, EmbeddingModel, Vocabulary};
use neus_core::evaluation::{evaluate, write_reports, Evaluation, EvaluationInputs, Ff5Factors, IndustryMap};
use neus_core::factor_model::{
    excess_returns, read_selection_jsonl, select_all, write_selection_jsonl, ExcessPanel, Mode, ReturnPanel,
    SkippedStock, Split,
};
use neus_core::{format, projection};

use crate::config::PipelineConfig;
use crate::error::{io_error, parse_error, PipelineError, Result};
use crate::manifest::{sha256_bytes, sha256_file, Manifest, StageRecord};

/// Bumped whenever a stage's artifact layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Corpus,
    Embed,
    Project,
    Cluster,
    Select,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Corpus,
        Stage::Embed,
        Stage::Project,
        Stage::Cluster,
        Stage::Select,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Embed => "embed",
            Stage::Project => "project",
            Stage::Cluster => "cluster",
            Stage::Select => "select",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this stage reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Corpus => &[],
            Stage::Embed => &[Stage::Corpus],
            Stage::Project => &[Stage::Embed],
            Stage::Cluster => &[Stage::Project],
            Stage::Select => &[Stage::Cluster, Stage::Corpus],
            Stage::Evaluate => &[Stage::Select],
            Stage::Report => &[Stage::Evaluate],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::UnknownStage(s.to_string()))
    }
}

/// Artifact file names, relative to the stage directory.
pub mod artifacts {
    pub const DOCUMENTS: &str = "documents.jsonl";
    pub const EXCLUDED: &str = "excluded.csv";
    pub const UNIVERSE: &str = "universe.txt";
    pub const EMBEDDING: &str = "embedding.txt";
    pub const TRAINING_LOSS: &str = "training_loss.csv";
    pub const PROJECTION: &str = "projection.csv";
    pub const BASIS: &str = "basis.csv";
    pub const DENDROGRAM: &str = "dendrogram.csv";
    pub const EVALUATION: &str = "evaluation.json";
    pub const SKIPPED: &str = "skipped.csv";

    pub fn selection(mode: neus_core::factor_model::Mode) -> String {
        format!("{}.jsonl", mode_name(mode))
    }

    pub fn selection_skipped(mode: neus_core::factor_model::Mode) -> String {
        format!("skipped_{}.csv", mode_name(mode))
    }

    fn mode_name(mode: neus_core::factor_model::Mode) -> &'static str {
        match mode {
            neus_core::factor_model::Mode::Explanation => "explanation",
            neus_core::factor_model::Mode::Prediction => "prediction",
        }
    }
}

/// Result of running (or reusing) one stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageArtifact {
    pub stage: Stage,
    pub key: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// True when the stored artifact was reused.
    pub cached: bool,
}

fn input_files(stage: Stage, cfg: &PipelineConfig) -> Vec<(&'static str, PathBuf)> {
    let p = &cfg.paths;
    let mut out = Vec::new();
    match stage {
        Stage::Corpus => {
            out.push(("paths.news", p.news.clone()));
            if let Some(s) = &p.stopwords {
                out.push(("paths.stopwords", s.clone()));
            }
            if let Some(u) = &p.universe {
                out.push(("paths.universe", u.clone()));
            }
        }
        Stage::Select => {
            out.push(("paths.returns", p.returns.clone()));
            out.push(("paths.market", p.market.clone()));
            out.push(("paths.risk_free", p.risk_free.clone()));
        }
        Stage::Evaluate => {
            out.push(("paths.returns", p.returns.clone()));
            out.push(("paths.market", p.market.clone()));
            out.push(("paths.risk_free", p.risk_free.clone()));
            out.push(("paths.ff5", p.ff5.clone()));
        }
        Stage::Report => out.push(("paths.industries", p.industries.clone())),
        Stage::Embed | Stage::Project | Stage::Cluster => {}
    }
    out.into_iter().map(|(f, path)| (f, cfg.resolve(&path))).collect()
}

/// Configuration values that influence a stage's artifacts.
fn stage_params(stage: Stage, cfg: &PipelineConfig) -> serde_json::Value {
    match stage {
        Stage::Corpus => json!({ "seed": cfg.seed, "corpus": cfg.corpus }),
        // Multi-threaded training and layout are not reproducible, so the
        // worker count is part of their identity.
        Stage::Embed => json!({ "seed": cfg.seed, "workers": cfg.workers, "embedding": cfg.embedding }),
        Stage::Project => json!({ "seed": cfg.seed, "workers": cfg.workers, "projection": cfg.projection }),
        Stage::Cluster => json!({ "clustering": cfg.clustering }),
        Stage::Select => json!({ "split": cfg.split, "stocks": cfg.stocks, "selection": cfg.selection }),
        Stage::Evaluate => json!({ "split": cfg.split, "window": cfg.selection.window }),
        Stage::Report => json!({ "evaluation": cfg.evaluation }),
    }
}

/// Computes stage keys, memoizing input-file hashes.
struct Keyer<'a> {
    cfg: &'a PipelineConfig,
    keys: HashMap<Stage, String>,
}

impl<'a> Keyer<'a> {
    fn new(cfg: &'a PipelineConfig) -> Self {
        Keyer {
            cfg,
            keys: HashMap::new(),
        }
    }

    fn key(&mut self, stage: Stage) -> Result<String> {
        if let Some(k) = self.keys.get(&stage) {
            return Ok(k.clone());
        }
        let mut inputs = BTreeMap::new();
        for (field, path) in input_files(stage, self.cfg) {
            if !path.is_file() {
                return Err(PipelineError::config(&path, field, format!("input file for stage `{stage}` does not exist")));
            }
            inputs.insert(field, sha256_file(&path)?);
        }
        let mut upstream = BTreeMap::new();
        for &u in stage.upstream() {
            upstream.insert(u.name(), self.key(u)?);
        }
        let doc = json!({
            "stage": stage.name(),
            "schema": SCHEMA_VERSION,
            "params": stage_params(stage, self.cfg),
            "inputs": inputs,
            "upstream": upstream,
        });
        let key = sha256_bytes(doc.to_string().as_bytes());
        self.keys.insert(stage, key.clone());
        Ok(key)
    }
}

/// Runs `stage`, or reuses its artifact when nothing it depends on changed.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageArtifact> {
    let output = cfg.output_dir();
    let mut manifest = Manifest::load(&output)?;
    let mut keyer = Keyer::new(cfg);
    check_upstream(stage, &manifest, &output, &mut keyer)?;
    let key = keyer.key(stage)?;
    let dir = output.join(stage.name());

    if let Some(rec) = manifest.intact(&output, stage.name()) {
        if rec.key == key {
            log::info!("{stage}: up to date");
            return Ok(StageArtifact {
                stage,
                key,
                dir,
                files: rec.files.keys().map(|rel| output.join(rel)).collect(),
                cached: true,
            });
        }
    }

    log::info!("{stage}: running");
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
    let mut files = execute(stage, cfg, &output, &dir)?;
    files.sort();
    let mut recorded = BTreeMap::new();
    for f in &files {
        let rel = f.strip_prefix(&output).unwrap_or(f);
        recorded.insert(rel.to_string_lossy().replace('\\', "/"), sha256_file(f)?);
    }
    manifest.stages.insert(
        stage.name().to_string(),
        StageRecord {
            key: key.clone(),
            files: recorded,
        },
    );
    manifest.save(&output)?;
    Ok(StageArtifact {
        stage,
        key,
        dir,
        files,
        cached: false,
    })
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageArtifact>> {
    Stage::ALL.into_iter().map(|s| run_stage(s, cfg)).collect()
}

fn check_upstream(stage: Stage, manifest: &Manifest, output: &Path, keyer: &mut Keyer) -> Result<()> {
    for &u in stage.upstream() {
        let rec = manifest.intact(output, u.name()).ok_or_else(|| PipelineError::MissingUpstream {
            stage: stage.name().into(),
            upstream: u.name().into(),
        })?;
        if rec.key != keyer.key(u)? {
            return Err(PipelineError::StaleUpstream {
                stage: stage.name().into(),
                upstream: u.name().into(),
            });
        }
    }
    Ok(())
}

/// Writes the four report tables from the evaluation artifact into `dir`.
pub fn export_reports(cfg: &PipelineConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let output = cfg.output_dir();
    let manifest = Manifest::load(&output)?;
    check_upstream(Stage::Report, &manifest, &output, &mut Keyer::new(cfg))?;
    write_report_files(cfg, &output, dir)
}

fn write_report_files(cfg: &PipelineConfig, output: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let eval = read_evaluation(&output.join(Stage::Evaluate.name()).join(artifacts::EVALUATION))?;
    let industries = IndustryMap::load(&cfg.resolve(&cfg.paths.industries))?;
    Ok(write_reports(dir, &eval, &industries, cfg.evaluation.level)?)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| neus_core::Error::Config(format!("thread pool: {e}")).into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_error(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| parse_error(path.display().to_string(), e))?);
        out.push('\n');
    }
    write_text(path, &out)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_skipped(path: &Path, skipped: &[SkippedStock]) -> Result<()> {
    let mut out = String::from("stock,reason\n");
    for s in skipped {
        out.push_str(&format!("{},{}\n", csv_field(&s.stock), csv_field(&s.reason)));
    }
    write_text(path, &out)
}

pub fn read_documents(path: &Path) -> Result<Vec<CompanyDocument>> {
    let f = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_error(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| parse_error(format!("{} line {}", path.display(), i + 1), e))?,
        );
    }
    Ok(out)
}

/// Tickers one per line; blank lines and `#` comments are ignored.
pub fn read_ticker_list(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

pub fn read_evaluation(path: &Path) -> Result<Evaluation> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(path.display().to_string(), e))
}

fn load_panel(cfg: &PipelineConfig) -> Result<(ExcessPanel, Split)> {
    let p = &cfg.paths;
    let raw = ReturnPanel::load(&cfg.resolve(&p.returns), &cfg.resolve(&p.market), &cfg.resolve(&p.risk_free))?;
    let panel = excess_returns(&raw)?;
    let split = Split::from_dates(&panel.dates, cfg.split.train_end, cfg.split.validation_end)?;
    Ok((panel, split))
}

fn execute(stage: Stage, cfg: &PipelineConfig, output: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let upstream = |s: Stage, file: &str| output.join(s.name()).join(file);
    match stage {
        Stage::Corpus => {
            let news = cfg.resolve(&cfg.paths.news);
            let format = ArticleFormat::from_path(&news).ok_or_else(|| {
                PipelineError::config(&news, "paths.news", "expected a .jsonl, .json or .csv file")
            })?;
            let loaded = load_articles(&news, format)?;
            if !loaded.warnings.is_empty() {
                log::warn!("corpus: skipped {} malformed article records", loaded.warnings.len());
                for w in loaded.warnings.iter().take(5) {
                    log::debug!("{w}");
                }
            }
            let universe: BTreeSet<String> = match &cfg.paths.universe {
                Some(u) => read_ticker_list(&cfg.resolve(u))?,
                None => loaded.articles.iter().flat_map(|a| a.company_tags.iter().cloned()).collect(),
            };
            let corpus_cfg = cfg.corpus_config()?;
            let selection =
                pool(cfg.workers)?.install(|| select_company_documents(&loaded.articles, &universe, &corpus_cfg))?;
            log::info!(
                "corpus: {} companies kept, {} excluded",
                selection.documents.len(),
                selection.excluded.len()
            );
            let docs = dir.join(artifacts::DOCUMENTS);
            write_jsonl(&docs, &selection.documents)?;
            let excluded = dir.join(artifacts::EXCLUDED);
            let mut text = String::from("ticker,n_articles\n");
            for e in &selection.excluded {
                text.push_str(&format!("{},{}\n", csv_field(&e.ticker), e.n_articles));
            }
            write_text(&excluded, &text)?;
            let uni = dir.join(artifacts::UNIVERSE);
            let mut text = universe.iter().cloned().collect::<Vec<_>>().join("\n");
            text.push('\n');
            write_text(&uni, &text)?;
            Ok(vec![docs, excluded, uni])
        }
        Stage::Embed => {
            let docs = read_documents(&upstream(Stage::Corpus, artifacts::DOCUMENTS))?;
            let ecfg = cfg.embedding_config();
            let vocab = Vocabulary::build(&docs, &ecfg)?;
            log::info!("embed: {} documents, {} vocabulary words", docs.len(), vocab.len());
            let (model, stats) = train_pvdbow(&docs, &vocab, &ecfg)?;
            let path = dir.join(artifacts::EMBEDDING);
            model.write(&path)?;
            let loss = dir.join(artifacts::TRAINING_LOSS);
            let mut text = String::from("epoch,loss\n");
            for (i, l) in stats.epoch_loss.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i + 1, format::sig(*l, 9)));
            }
            write_text(&loss, &text)?;
            Ok(vec![path, loss])
        }
        Stage::Project => {
            let model = EmbeddingModel::read(&upstream(Stage::Embed, artifacts::EMBEDDING))?;
            let proj = projection::project(&model.company_matrix(), &cfg.layout_config(), cfg.seed)?;
            let path = dir.join(artifacts::PROJECTION);
            projection::write_csv(&path, model.tickers(), &proj)?;
            Ok(vec![path])
        }
        Stage::Cluster => {
            let (tickers, coords) = projection::read_csv(&upstream(Stage::Project, artifacts::PROJECTION))?;
            let dendrogram = minimax_linkage_cluster(&coords, &tickers, cfg.clustering.metric)?;
            let basis = cut_dendrogram(&dendrogram, cfg.clustering.cut_height)?;
            log::info!("cluster: {} companies in {} clusters", tickers.len(), basis.n_clusters());
            let path = dir.join(artifacts::BASIS);
            basis.write_csv(&path)?;
            let tree = dir.join(artifacts::DENDROGRAM);
            write_text(&tree, &dendrogram_csv(&dendrogram))?;
            Ok(vec![path, tree])
        }
        Stage::Select => {
            let (panel, split) = load_panel(cfg)?;
            let basis = BasisSet::read_csv(&upstream(Stage::Cluster, artifacts::BASIS))?;
            let prototypes = basis.prototype_tickers();
            let universe = read_ticker_list(&upstream(Stage::Corpus, artifacts::UNIVERSE))?;
            let stocks = match &cfg.stocks {
                Some(s) => s.clone(),
                None => panel
                    .tickers
                    .iter()
                    .filter(|t| !universe.contains(*t) && !basis.labels.contains(*t))
                    .cloned()
                    .collect(),
            };
            if stocks.is_empty() {
                return Err(PipelineError::config(
                    cfg.resolve(&cfg.paths.returns),
                    "stocks",
                    "no stocks to model outside the basis universe",
                ));
            }
            let mcp = cfg.mcp_config();
            let mut files = Vec::new();
            for &mode in &cfg.selection.modes {
                let run = select_all(&panel, &stocks, &prototypes, &split, &mcp, mode)?;
                log::info!(
                    "select ({mode:?}): {} stocks fitted, {} skipped",
                    run.results.len(),
                    run.skipped.len()
                );
                let path = dir.join(artifacts::selection(mode));
                write_selection_jsonl(&path, &run.results)?;
                let skipped = dir.join(artifacts::selection_skipped(mode));
                write_skipped(&skipped, &run.skipped)?;
                files.push(path);
                files.push(skipped);
            }
            Ok(files)
        }
        Stage::Evaluate => {
            let (panel, split) = load_panel(cfg)?;
            let ff5 = Ff5Factors::load(&cfg.resolve(&cfg.paths.ff5))?.align(&panel.dates)?;
            let explanation = read_selection_jsonl(&upstream(Stage::Select, &artifacts::selection(Mode::Explanation)))?;
            let prediction = if cfg.selection.modes.contains(&Mode::Prediction) {
                read_selection_jsonl(&upstream(Stage::Select, &artifacts::selection(Mode::Prediction)))?
            } else {
                Vec::new()
            };
            let inputs = EvaluationInputs {
                panel: &panel,
                ff5: &ff5,
                split,
                window: cfg.selection.window,
                explanation: &explanation,
                prediction: &prediction,
            };
            let eval = evaluate(&inputs, &cfg.evaluation_config())?;
            let path = dir.join(artifacts::EVALUATION);
            let mut text = serde_json::to_string_pretty(&eval).map_err(|e| parse_error("evaluation", e))?;
            text.push('\n');
            write_text(&path, &text)?;
            let skipped = dir.join(artifacts::SKIPPED);
            write_skipped(&skipped, &eval.skipped)?;
            Ok(vec![path, skipped])
        }
        Stage::Report => write_report_files(cfg, output, dir),
    }
}

fn dendrogram_csv(d: &Dendrogram) -> String {
    let mut out = String::from("step,left,right,height,prototype,size\n");
    for (i, m) in d.merges.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            i,
            m.left,
            m.right,
            format::sig(m.height, 9),
            csv_field(&d.labels[m.prototype]),
            m.size
        ));
    }
    out
}
