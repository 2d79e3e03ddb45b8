//! News ingestion and per-company document construction.
//!
//! Articles are tagged with the companies they mention. For every company
//! with enough coverage a fixed number of tagged articles is sampled, the
//! texts are concatenated in draw order and reduced to lowercase word tokens.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::rng;

const DEFAULT_STOPWORDS: &str = include_str!("../../../data/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub date: NaiveDate,
    pub company_tags: BTreeSet<String>,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArticleFormat {
    Jsonl,
    Csv,
}

impl ArticleFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(ArticleFormat::Jsonl),
            "csv" => Some(ArticleFormat::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub articles: Vec<Article>,
    /// One message per skipped record.
    pub warnings: Vec<String>,
}

/// Reads articles in file order. Malformed records, records without tags and
/// duplicate ids are skipped with a warning; only I/O failures are fatal.
pub fn load_articles(path: &Path, format: ArticleFormat) -> Result<LoadReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    let mut accept = |report: &mut LoadReport, loc: String, rec: Result<Article, String>| match rec
    {
        Ok(a) if a.company_tags.is_empty() => {
            report.warnings.push(format!("{loc}: article {} has no company tags", a.article_id))
        }
        Ok(a) if !seen.insert(a.article_id.clone()) => {
            report.warnings.push(format!("{loc}: duplicate article_id {}", a.article_id))
        }
        Ok(a) => report.articles.push(a),
        Err(msg) => report.warnings.push(format!("{loc}: {msg}")),
    };

    match format {
        ArticleFormat::Jsonl => {
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec = parse_json_record(&line);
                accept(&mut report, format!("line {}", lineno + 1), rec);
            }
        }
        ArticleFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            let headers = reader
                .headers()
                .map_err(|e| Error::parse(path.display().to_string(), e))?
                .clone();
            let col = |name: &str| headers.iter().position(|h| h.trim() == name);
            let cols = [col("article_id"), col("date"), col("company_tags"), col("text")];
            for (i, record) in reader.records().enumerate() {
                let loc = format!("record {}", i + 1);
                let rec = match record {
                    Ok(r) => {
                        let field = |k: usize| cols[k].and_then(|c| r.get(c));
                        parse_fields(field(0), field(1), field(2).map(split_tags), field(3))
                    }
                    Err(e) if e.is_io_error() => {
                        return Err(Error::parse(path.display().to_string(), e));
                    }
                    Err(e) => Err(e.to_string()),
                };
                accept(&mut report, loc, rec);
            }
        }
    }
    for w in &report.warnings {
        log::warn!("{}: skipped {w}", path.display());
    }
    Ok(report)
}

fn split_tags(raw: &str) -> Vec<String> {
    raw.split('|')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_json_record(line: &str) -> Result<Article, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let text_field = |name: &str| value.get(name).and_then(|v| v.as_str());
    let tags = match value.get("company_tags") {
        None => None,
        Some(serde_json::Value::Array(items)) => Some(
            items
                .iter()
                .map(|t| t.as_str().map(|s| s.trim().to_string()))
                .collect::<Option<Vec<_>>>()
                .ok_or("company_tags must be strings")?,
        ),
        Some(_) => return Err("company_tags must be an array".into()),
    };
    parse_fields(
        text_field("article_id"),
        text_field("date"),
        tags,
        text_field("text"),
    )
}

fn parse_fields(
    id: Option<&str>,
    date: Option<&str>,
    tags: Option<Vec<String>>,
    text: Option<&str>,
) -> Result<Article, String> {
    let id = id.ok_or("missing field `article_id`")?;
    let date = date.ok_or("missing field `date`")?;
    let tags = tags.ok_or("missing field `company_tags`")?;
    let text = text.ok_or("missing field `text`")?;
    let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d")
        .map_err(|e| format!("bad date {date:?}: {e}"))?;
    Ok(Article {
        article_id: id.to_string(),
        date,
        company_tags: tags.into_iter().filter(|t| !t.is_empty()).collect(),
        text: text.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    /// The English list shipped in `data/stopwords.txt`.
    pub fn english() -> Self {
        Self::new(DEFAULT_STOPWORDS.lines())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(raw.lines()))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Self::english()
    }
}

/// Lowercase ASCII word tokens in original order.
///
/// Text is NFC-normalized and split on every non-alphabetic character, so
/// punctuation and digits never survive; tokens that still contain non-ASCII
/// letters are dropped, then stopwords. Because digits act as separators the
/// order of number and stopword removal does not matter.
pub fn preprocess(text: &str, stopwords: &Stopwords) -> Vec<String> {
    let normalized: String = text.nfc().collect();
    normalized
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| t.bytes().all(|b| b.is_ascii_lowercase()))
        .filter(|t| !stopwords.contains(t))
        .collect()
}

#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub min_articles: usize,
    pub n_sample: usize,
    pub seed: u64,
    pub stopwords: Stopwords,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            min_articles: 5,
            n_sample: 5,
            seed: 0,
            stopwords: Stopwords::english(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_articles == 0 || self.n_sample == 0 {
            return Err(Error::Config(
                "corpus min_articles and n_sample must be positive".into(),
            ));
        }
        if self.n_sample > self.min_articles {
            return Err(Error::Config(format!(
                "corpus n_sample ({}) exceeds min_articles ({})",
                self.n_sample, self.min_articles
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyDocument {
    pub ticker: String,
    pub tokens: Vec<String>,
    pub source_article_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedCompany {
    pub ticker: String,
    pub n_articles: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusSelection {
    /// Sorted by ticker.
    pub documents: Vec<CompanyDocument>,
    pub excluded: Vec<ExcludedCompany>,
}

/// Builds one document per requested ticker with at least `min_articles`
/// tagged articles.
///
/// Candidates are ordered by `article_id` and drawn without replacement from a
/// stream keyed by `(seed, ticker)`, so a company's document depends only on
/// its own articles.
pub fn select_company_documents(
    articles: &[Article],
    tickers: &BTreeSet<String>,
    cfg: &CorpusConfig,
) -> Result<CorpusSelection> {
    cfg.validate()?;
    if tickers.is_empty() {
        return Err(Error::Config("no tickers requested".into()));
    }

    let mut by_ticker: BTreeMap<&str, Vec<&Article>> = BTreeMap::new();
    for article in articles {
        for tag in &article.company_tags {
            if tickers.contains(tag) {
                by_ticker.entry(tag.as_str()).or_default().push(article);
            }
        }
    }

    let outcomes: Vec<Result<CompanyDocument, ExcludedCompany>> = tickers
        .par_iter()
        .map(|ticker| {
            let mut pool = by_ticker.get(ticker.as_str()).cloned().unwrap_or_default();
            if pool.len() < cfg.min_articles {
                return Err(ExcludedCompany {
                    ticker: ticker.clone(),
                    n_articles: pool.len(),
                });
            }
            pool.sort_by(|a, b| a.article_id.cmp(&b.article_id));
            let mut rng = rng::stream(cfg.seed, "corpus", ticker.as_bytes());
            // Partial Fisher-Yates: the first n_sample slots are the draws, in order.
            for i in 0..cfg.n_sample {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
            }
            let drawn = &pool[..cfg.n_sample];
            let text = drawn
                .iter()
                .map(|a| a.text.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            Ok(CompanyDocument {
                ticker: ticker.clone(),
                tokens: preprocess(&text, &cfg.stopwords),
                source_article_ids: drawn.iter().map(|a| a.article_id.clone()).collect(),
            })
        })
        .collect();

    let mut selection = CorpusSelection::default();
    for outcome in outcomes {
        match outcome {
            Ok(doc) => selection.documents.push(doc),
            Err(ex) => {
                log::info!(
                    "excluding {}: {} articles < {}",
                    ex.ticker,
                    ex.n_articles,
                    cfg.min_articles
                );
                selection.excluded.push(ex);
            }
        }
    }
    Ok(selection)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn article(id: &str, tags: &[&str], text: &str) -> Article {
        Article {
            article_id: id.to_string(),
            date: NaiveDate::from_ymd_opt(2015, 3, 2).unwrap(),
            company_tags: tags.iter().map(|t| t.to_string()).collect(),
            text: text.to_string(),
        }
    }

    fn write_tmp(contents: &str, suffix: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(suffix).tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn preprocess_example() {
        let stop = Stopwords::new(["the"]);
        assert_eq!(
            preprocess("The Fed raised RATES 3 times.", &stop),
            vec!["fed", "raised", "rates", "times"]
        );
        assert!(preprocess("", &stop).is_empty());
        assert!(preprocess("a a a", &Stopwords::new(["a"])).is_empty());
    }

    #[test]
    fn preprocess_drops_digits_punctuation_and_non_ascii() {
        let stop = Stopwords::new(Vec::<String>::new());
        assert_eq!(
            preprocess("Q3-2015: S&P500 up 4%; café über naïve", &stop),
            vec!["q", "s", "p", "up"]
        );
        // Decomposed "é" normalizes to a single code point before splitting.
        assert!(preprocess("cafe\u{301}", &stop).is_empty());
    }

    #[test]
    fn stopwords_apply_after_lowercasing() {
        let stop = Stopwords::english();
        assert_eq!(preprocess("THE And OF equity", &stop), vec!["equity"]);
    }

    #[test]
    fn loads_single_jsonl_record() {
        let f = write_tmp(
            r#"{"article_id":"a1","date":"2014-01-03","company_tags":["SPY"],"text":"hello"}"#,
            ".jsonl",
        );
        let report = load_articles(f.path(), ArticleFormat::Jsonl).unwrap();
        assert_eq!(report.articles.len(), 1);
        assert!(report.warnings.is_empty());
        assert_eq!(report.articles[0].company_tags.len(), 1);
    }

    #[test]
    fn empty_file_loads_nothing() {
        let f = write_tmp("", ".jsonl");
        let report = load_articles(f.path(), ArticleFormat::Jsonl).unwrap();
        assert!(report.articles.is_empty() && report.warnings.is_empty());
        let f = write_tmp("", ".csv");
        let report = load_articles(f.path(), ArticleFormat::Csv).unwrap();
        assert!(report.articles.is_empty() && report.warnings.is_empty());
    }

    #[test]
    fn missing_field_is_skipped_with_warning() {
        let f = write_tmp(
            concat!(
                r#"{"article_id":"a1","date":"2014-01-03","company_tags":["SPY"],"text":"x"}"#,
                "\n",
                r#"{"article_id":"a2","date":"2014-01-03","company_tags":["SPY"]}"#,
                "\n",
                r#"{"article_id":"a3","date":"2014-01-10","company_tags":["QQQ","SPY"],"text":"y"}"#,
                "\n"
            ),
            ".jsonl",
        );
        let report = load_articles(f.path(), ArticleFormat::Jsonl).unwrap();
        assert_eq!(report.articles.len(), 2);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("text"));
        assert_eq!(report.articles[1].article_id, "a3");
    }

    #[test]
    fn csv_tags_are_pipe_joined() {
        let f = write_tmp(
            "article_id,date,company_tags,text\n\
             a1,2014-01-03,SPY|QQQ,\"rates, rising\"\n\
             a2,not-a-date,SPY,x\n\
             a3,2014-01-03,,untagged\n",
            ".csv",
        );
        let report = load_articles(f.path(), ArticleFormat::Csv).unwrap();
        assert_eq!(report.articles.len(), 1);
        assert_eq!(report.warnings.len(), 2);
        let tags: Vec<_> = report.articles[0].company_tags.iter().cloned().collect();
        assert_eq!(tags, vec!["QQQ", "SPY"]);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let err = load_articles(Path::new("/nonexistent/news.jsonl"), ArticleFormat::Jsonl);
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    fn corpus() -> Vec<Article> {
        let mut out = Vec::new();
        for i in 0..4 {
            out.push(article(&format!("low{i}"), &["LOW"], "thin coverage"));
        }
        for i in 0..5 {
            out.push(article(&format!("ex{i}"), &["EXACT"], &format!("exact story w{i}")));
        }
        for i in 0..12 {
            out.push(article(&format!("many{i:02}"), &["MANY", "EXACT2"], &format!("big w{i}")));
        }
        out
    }

    fn tickers(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn threshold_excludes_thin_companies() {
        let cfg = CorpusConfig::default();
        let sel = select_company_documents(&corpus(), &tickers(&["LOW", "EXACT"]), &cfg).unwrap();
        assert_eq!(sel.documents.len(), 1);
        assert_eq!(sel.documents[0].ticker, "EXACT");
        assert_eq!(
            sel.excluded,
            vec![ExcludedCompany {
                ticker: "LOW".into(),
                n_articles: 4
            }]
        );
    }

    #[test]
    fn exact_population_is_fully_selected_for_any_seed() {
        for seed in 0..20 {
            let cfg = CorpusConfig {
                seed,
                ..Default::default()
            };
            let sel = select_company_documents(&corpus(), &tickers(&["EXACT"]), &cfg).unwrap();
            let mut ids = sel.documents[0].source_article_ids.clone();
            ids.sort();
            assert_eq!(ids, vec!["ex0", "ex1", "ex2", "ex3", "ex4"]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_independent_of_other_companies() {
        let cfg = CorpusConfig {
            seed: 42,
            ..Default::default()
        };
        let a = select_company_documents(&corpus(), &tickers(&["MANY"]), &cfg).unwrap();
        let b = select_company_documents(&corpus(), &tickers(&["MANY", "EXACT"]), &cfg).unwrap();
        let mut shuffled = corpus();
        shuffled.reverse();
        let c = select_company_documents(&shuffled, &tickers(&["MANY"]), &cfg).unwrap();
        assert_eq!(a.documents[0], b.documents[1]);
        assert_eq!(a.documents[0], c.documents[0]);
        assert_eq!(a.documents[0].source_article_ids.len(), 5);
    }

    #[test]
    fn tokens_follow_draw_order() {
        let cfg = CorpusConfig {
            seed: 3,
            stopwords: Stopwords::new(Vec::<String>::new()),
            ..Default::default()
        };
        let arts: Vec<Article> = (0..9)
            .map(|i| article(&format!("id{i}"), &["X"], &format!("word{}", "abcdefghi".as_bytes()[i] as char)))
            .map(|mut a| {
                a.text = a.text.replace(char::is_numeric, "");
                a
            })
            .collect();
        let sel = select_company_documents(&arts, &tickers(&["X"]), &cfg).unwrap();
        let doc = &sel.documents[0];
        let expected: Vec<String> = doc
            .source_article_ids
            .iter()
            .map(|id| {
                let i: usize = id[2..].parse().unwrap();
                format!("word{}", "abcdefghi".as_bytes()[i] as char)
            })
            .collect();
        assert_eq!(doc.tokens, expected);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = CorpusConfig {
            min_articles: 3,
            n_sample: 5,
            ..Default::default()
        };
        assert!(matches!(
            select_company_documents(&corpus(), &tickers(&["MANY"]), &cfg),
            Err(Error::Config(_))
        ));
        assert!(select_company_documents(&corpus(), &BTreeSet::new(), &CorpusConfig::default()).is_err());
    }
}
