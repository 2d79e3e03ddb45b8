//! Synthetic fixtures with planted structure.
//!
//! A fixture is a news corpus whose companies fall into topics with disjoint
//! vocabularies, a weekly return panel in which each stock loads on a few of
//! those companies, five baseline factors, an industry map, and the planted
//! truth for every one of them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use neus_core::evaluation::INDUSTRIES;
use neus_core::factor_model::McpConfig;
use neus_core::rng;

use crate::error::{io_error, parse_error, PipelineError, Result};

pub const SPEC_VERSION: u32 = 1;

/// Cut height for projected synthetic corpora, whose topics are about one
/// unit wide and more than ten units apart.
pub const DEFAULT_FIXTURE_CUT_HEIGHT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub version: u32,
    pub seed: u64,
    /// First week-ending date of the panel.
    pub start_date: NaiveDate,
    /// Cut height written into the generated pipeline configuration.
    pub cut_height: f64,
    pub news: NewsSpec,
    pub returns: ReturnsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewsSpec {
    pub topics: usize,
    pub companies_per_topic: usize,
    /// Words per topic; topic vocabularies never overlap.
    pub vocabulary_per_topic: usize,
    /// Extra words shared by all topics.
    pub common_words: usize,
    /// Fraction of article words drawn from the shared words.
    pub common_rate: f64,
    pub articles_per_company: usize,
    pub words_per_article: usize,
    /// Word frequencies within a topic follow `1 / rank^zipf_exponent`.
    pub zipf_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReturnsSpec {
    pub stocks: usize,
    pub support_min: usize,
    pub support_max: usize,
    /// Noise standard deviation as a multiple of the planted signal's.
    pub noise_ratio: f64,
    pub train_weeks: usize,
    pub validation_weeks: usize,
    pub test_weeks: usize,
    pub market_mean: f64,
    pub market_vol: f64,
    /// Shared weekly shock of all companies in a topic.
    pub topic_vol: f64,
    pub idiosyncratic_vol: f64,
    pub risk_free: f64,
    /// Volatility of the four non-market baseline factors.
    pub factor_vol: f64,
    /// Stocks given one missing training week.
    pub missing_stocks: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            version: SPEC_VERSION,
            seed: 0,
            start_date: NaiveDate::from_ymd_opt(2013, 1, 4).expect("valid date"),
            cut_height: DEFAULT_FIXTURE_CUT_HEIGHT,
            news: NewsSpec::default(),
            returns: ReturnsSpec::default(),
        }
    }
}

impl Default for NewsSpec {
    fn default() -> Self {
        NewsSpec {
            topics: 3,
            companies_per_topic: 20,
            vocabulary_per_topic: 300,
            common_words: 0,
            common_rate: 0.0,
            articles_per_company: 8,
            words_per_article: 80,
            zipf_exponent: 1.0,
        }
    }
}

impl Default for ReturnsSpec {
    fn default() -> Self {
        ReturnsSpec {
            stocks: 200,
            support_min: 1,
            support_max: 3,
            noise_ratio: 0.5,
            train_weeks: 260,
            validation_weeks: 52,
            test_weeks: 52,
            market_mean: 0.002,
            market_vol: 0.02,
            topic_vol: 0.01,
            idiosyncratic_vol: 0.02,
            risk_free: 0.0005,
            factor_vol: 0.01,
            missing_stocks: 0,
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Core(neus_core::Error::Config(format!("synthetic spec: {}", msg.into())))
}

impl SynthSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        let spec: SynthSpec =
            toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn n_companies(&self) -> usize {
        self.news.topics * self.news.companies_per_topic
    }

    pub fn n_weeks(&self) -> usize {
        self.returns.train_weeks + self.returns.validation_weeks + self.returns.test_weeks
    }

    pub fn validate(&self) -> Result<()> {
        let (n, r) = (&self.news, &self.returns);
        if self.version != SPEC_VERSION {
            return Err(invalid(format!("version {} is not supported (expected {SPEC_VERSION})", self.version)));
        }
        let positive = [
            ("news.topics", n.topics),
            ("news.companies_per_topic", n.companies_per_topic),
            ("news.vocabulary_per_topic", n.vocabulary_per_topic),
            ("news.articles_per_company", n.articles_per_company),
            ("news.words_per_article", n.words_per_article),
            ("returns.validation_weeks", r.validation_weeks),
            ("returns.test_weeks", r.test_weeks),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("{name} must be positive")));
        }
        if r.train_weeks < 4 {
            return Err(invalid("returns.train_weeks must be at least 4"));
        }
        if r.support_min > r.support_max {
            return Err(invalid("returns.support_min exceeds returns.support_max"));
        }
        if r.support_max > self.n_companies() {
            return Err(invalid(format!(
                "returns.support_max ({}) exceeds the {} companies",
                r.support_max,
                self.n_companies()
            )));
        }
        if r.missing_stocks > r.stocks {
            return Err(invalid("returns.missing_stocks exceeds returns.stocks"));
        }
        if !(0.0..=1.0).contains(&n.common_rate) || (n.common_rate > 0.0 && n.common_words == 0) {
            return Err(invalid("news.common_rate must lie in [0, 1] and needs common_words > 0"));
        }
        let vols = [r.market_vol, r.topic_vol, r.idiosyncratic_vol, r.factor_vol, r.noise_ratio, self.cut_height];
        if vols.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || r.idiosyncratic_vol == 0.0 {
            return Err(invalid("volatilities, noise_ratio and cut_height must be non-negative (idiosyncratic_vol positive)"));
        }
        if !(n.zipf_exponent.is_finite() && n.zipf_exponent >= 0.0) {
            return Err(invalid("news.zipf_exponent must be non-negative"));
        }
        Ok(())
    }
}

/// Lowercase letters encoding `n` in base 26.
fn letters(mut n: usize) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'a' + (n % 26) as u8);
        n /= 26;
        if n == 0 {
            break;
        }
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Topic words start with `q`, shared words with `x`, so the sets are
/// disjoint and never collide with English stopwords.
pub fn topic_word(topic: usize, idx: usize) -> String {
    format!("q{}z{}", letters(topic), letters(idx))
}

pub fn common_word(idx: usize) -> String {
    format!("xw{}", letters(idx))
}

pub fn company_ticker(topic: usize, idx: usize) -> String {
    format!("E{topic}{idx:03}")
}

pub fn stock_ticker(idx: usize) -> String {
    format!("S{idx:04}")
}

/// File names inside a fixture directory.
pub mod files {
    pub const NEWS: &str = "news.jsonl";
    pub const RETURNS: &str = "returns.csv";
    pub const MARKET: &str = "market.csv";
    pub const RISK_FREE: &str = "risk_free.csv";
    pub const FF5: &str = "ff5.csv";
    pub const INDUSTRIES: &str = "industries.csv";
    pub const TRUTH_CLUSTERS: &str = "truth_clusters.csv";
    pub const TRUTH_SUPPORTS: &str = "truth_supports.csv";
    pub const CONFIG: &str = "config.toml";
}

/// Planted model of one stock.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedStock {
    pub ticker: String,
    pub support: Vec<String>,
    pub coefficients: Vec<f64>,
    pub market_beta: f64,
    pub noise_sd: f64,
}

/// All generated series, before serialization.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub dates: Vec<NaiveDate>,
    /// Company tickers in topic order.
    pub companies: Vec<String>,
    pub company_topic: Vec<usize>,
    /// JSONL lines, one per article.
    pub articles: Vec<String>,
    /// Raw (not excess) weekly returns, companies then stocks.
    pub tickers: Vec<String>,
    pub returns: Vec<Vec<f64>>,
    pub market: Vec<f64>,
    pub risk_free: Vec<f64>,
    /// Non-market baseline factors (decimal).
    pub factors: [Vec<f64>; 4],
    pub market_excess: Vec<f64>,
    pub stocks: Vec<PlantedStock>,
    pub industries: Vec<(String, String)>,
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

pub fn generate(spec: &SynthSpec) -> Result<Fixture> {
    spec.validate()?;
    let seed = spec.seed;
    let (ns, rs) = (&spec.news, &spec.returns);
    let t_len = spec.n_weeks();
    let dates: Vec<NaiveDate> = (0..t_len).map(|i| spec.start_date + Duration::weeks(i as i64)).collect();

    let mut companies = Vec::new();
    let mut company_topic = Vec::new();
    for k in 0..ns.topics {
        for c in 0..ns.companies_per_topic {
            companies.push(company_ticker(k, c));
            company_topic.push(k);
        }
    }

    let articles = generate_articles(spec, &companies, &company_topic, &dates[..rs.train_weeks]);

    let mut rng = rng::stream(seed, "synth-market", b"");
    let market_excess: Vec<f64> = (0..t_len)
        .map(|_| rs.market_mean + normal(rs.market_vol).sample(&mut rng))
        .collect();
    let risk_free = vec![rs.risk_free; t_len];
    let mut rng = rng::stream(seed, "synth-topics", b"");
    let topic_shocks: Vec<Vec<f64>> = (0..ns.topics)
        .map(|_| (0..t_len).map(|_| normal(rs.topic_vol).sample(&mut rng)).collect())
        .collect();

    let company_excess: Vec<Vec<f64>> = companies
        .iter()
        .zip(&company_topic)
        .map(|(ticker, &k)| {
            let mut rng = rng::stream(seed, "synth-company", ticker.as_bytes());
            let beta = rng.random_range(0.6..1.4);
            (0..t_len)
                .map(|t| beta * market_excess[t] + topic_shocks[k][t] + normal(rs.idiosyncratic_vol).sample(&mut rng))
                .collect()
        })
        .collect();

    let mut stocks = Vec::with_capacity(rs.stocks);
    let mut stock_excess = Vec::with_capacity(rs.stocks);
    for i in 0..rs.stocks {
        let ticker = stock_ticker(i);
        let mut rng = rng::stream(seed, "synth-stock", ticker.as_bytes());
        let size = rng.random_range(rs.support_min..=rs.support_max);
        let mut chosen = sample(&mut rng, companies.len(), size).into_vec();
        chosen.sort_unstable();
        let coefficients: Vec<f64> = chosen
            .iter()
            .map(|_| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.random_range(0.5..1.0)
            })
            .collect();
        let market_beta = rng.random_range(0.5..1.5);
        let signal: Vec<f64> = (0..t_len)
            .map(|t| chosen.iter().zip(&coefficients).map(|(&j, b)| b * company_excess[j][t]).sum())
            .collect();
        let noise_sd = rs.noise_ratio * sample_sd(&signal);
        let mut series: Vec<f64> = (0..t_len)
            .map(|t| market_beta * market_excess[t] + signal[t] + normal(noise_sd).sample(&mut rng))
            .collect();
        if i < rs.missing_stocks {
            let gap = rng.random_range(0..rs.train_weeks);
            series[gap] = f64::NAN;
        }
        stocks.push(PlantedStock {
            ticker,
            support: chosen.iter().map(|&j| companies[j].clone()).collect(),
            coefficients,
            market_beta,
            noise_sd,
        });
        stock_excess.push(series);
    }

    let mut rng = rng::stream(seed, "synth-factors", b"");
    let factors: [Vec<f64>; 4] =
        std::array::from_fn(|_| (0..t_len).map(|_| normal(rs.factor_vol).sample(&mut rng)).collect());

    let mut rng = rng::stream(seed, "synth-industry", b"");
    let industries = stocks
        .iter()
        .map(|s| (s.ticker.clone(), INDUSTRIES[rng.random_range(0..INDUSTRIES.len())].to_string()))
        .collect();

    let to_raw = |ex: &[f64]| -> Vec<f64> { ex.iter().zip(&risk_free).map(|(e, f)| e + f).collect() };
    let mut tickers = companies.clone();
    tickers.extend(stocks.iter().map(|s| s.ticker.clone()));
    let returns = company_excess.iter().chain(&stock_excess).map(|s| to_raw(s)).collect();
    Ok(Fixture {
        market: to_raw(&market_excess),
        dates,
        companies,
        company_topic,
        articles,
        tickers,
        returns,
        risk_free,
        factors,
        market_excess,
        stocks,
        industries,
    })
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Cumulative Zipf weights over `n` ranks.
fn zipf_cdf(n: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (1..=n)
        .map(|r| {
            acc += 1.0 / (r as f64).powf(s);
            acc
        })
        .collect();
    cdf.iter_mut().for_each(|c| *c /= acc);
    cdf
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

fn generate_articles(spec: &SynthSpec, companies: &[String], topic: &[usize], dates: &[NaiveDate]) -> Vec<String> {
    let ns = &spec.news;
    let topic_cdf = zipf_cdf(ns.vocabulary_per_topic, ns.zipf_exponent);
    let common_cdf = (ns.common_words > 0).then(|| zipf_cdf(ns.common_words, ns.zipf_exponent));
    let mut out = Vec::with_capacity(companies.len() * ns.articles_per_company);
    let mut id = 0usize;
    for (c, ticker) in companies.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, "synth-news", ticker.as_bytes());
        for _ in 0..ns.articles_per_company {
            id += 1;
            let mut text = String::new();
            for w in 0..ns.words_per_article {
                let word = match &common_cdf {
                    Some(cdf) if rng.random_bool(ns.common_rate) => common_word(draw(cdf, rng.random())),
                    _ => topic_word(topic[c], draw(&topic_cdf, rng.random())),
                };
                if w == 0 {
                    let mut chars = word.chars();
                    let first = chars.next().expect("non-empty word").to_ascii_uppercase();
                    text.push(first);
                    text.push_str(chars.as_str());
                } else {
                    text.push(' ');
                    text.push_str(&word);
                }
                // Numbers and punctuation exercise the text cleaning.
                if w % 17 == 16 {
                    let _ = write!(text, " {},", rng.random_range(1..2000));
                }
            }
            text.push('.');
            let date = dates[rng.random_range(0..dates.len())];
            let record = serde_json::json!({
                "article_id": format!("A{id:06}"),
                "date": date.format("%Y-%m-%d").to_string(),
                "company_tags": [ticker],
                "text": text,
            });
            out.push(record.to_string());
        }
    }
    out
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Generates the fixture and writes every file into `out`. Returns the
/// written paths.
pub fn write_fixture(spec: &SynthSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let fx = generate(spec)?;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let date = |t: usize| fx.dates[t].format("%Y-%m-%d").to_string();
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let p = out.join(name);
        write(&p, &text)?;
        written.push(p);
        Ok(())
    };

    let mut news = fx.articles.join("\n");
    news.push('\n');
    emit(files::NEWS, news)?;

    let mut returns = String::from("date");
    for t in &fx.tickers {
        returns.push(',');
        returns.push_str(t);
    }
    returns.push('\n');
    for t in 0..fx.dates.len() {
        returns.push_str(&date(t));
        for s in &fx.returns {
            returns.push(',');
            returns.push_str(&fmt_value(s[t]));
        }
        returns.push('\n');
    }
    emit(files::RETURNS, returns)?;

    let series = |name: &str, values: &[f64]| {
        let mut s = format!("date,{name}\n");
        for (t, v) in values.iter().enumerate() {
            let _ = writeln!(s, "{},{}", date(t), fmt_value(*v));
        }
        s
    };
    emit(files::MARKET, series("market", &fx.market))?;
    emit(files::RISK_FREE, series("risk_free", &fx.risk_free))?;

    let mut ff5 = String::from("date,Mkt-RF,SMB,HML,RMW,CMA,RF\n");
    for t in 0..fx.dates.len() {
        let _ = write!(ff5, "{},{}", date(t), fmt_value(fx.market_excess[t] * 100.0));
        for f in &fx.factors {
            let _ = write!(ff5, ",{}", fmt_value(f[t] * 100.0));
        }
        let _ = writeln!(ff5, ",{}", fmt_value(fx.risk_free[t] * 100.0));
    }
    emit(files::FF5, ff5)?;

    let mut ind = String::from("ticker,industry\n");
    for (t, i) in &fx.industries {
        let _ = writeln!(ind, "{t},{i}");
    }
    emit(files::INDUSTRIES, ind)?;

    let mut clusters = String::from("ticker,topic\n");
    for (c, k) in fx.companies.iter().zip(&fx.company_topic) {
        let _ = writeln!(clusters, "{c},{k}");
    }
    emit(files::TRUTH_CLUSTERS, clusters)?;

    let mut supports = String::from("stock,support,coefficients,market_beta,noise_sd\n");
    for s in &fx.stocks {
        let coefs: Vec<String> = s.coefficients.iter().map(|c| format!("{c}")).collect();
        let _ = writeln!(
            supports,
            "{},{},{},{},{}",
            s.ticker,
            s.support.join("|"),
            coefs.join("|"),
            s.market_beta,
            s.noise_sd
        );
    }
    emit(files::TRUTH_SUPPORTS, supports)?;

    let rs = &spec.returns;
    let split = crate::config::SplitDates {
        train_end: fx.dates[rs.train_weeks - 1],
        validation_end: fx.dates[rs.train_weeks + rs.validation_weeks - 1],
    };
    // Lagged regressors need one week before the first fitted week.
    let window = (rs.train_weeks - 1).min(McpConfig::default().window);
    let config = crate::config::PipelineConfig::for_fixture(split, spec.seed, spec.cut_height, window);
    emit(files::CONFIG, config.to_toml()?)?;
    Ok(written)
}

/// Planted topic per company from a fixture's truth file.
pub fn read_truth_clusters(path: &Path) -> Result<Vec<(String, usize)>> {
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_error(&ctx, e))?;
    reader
        .deserialize::<(String, usize)>()
        .map(|rec| rec.map_err(|e| parse_error(&ctx, e)))
        .collect()
}

/// Planted support per stock from a fixture's truth file.
pub fn read_truth_supports(path: &Path) -> Result<Vec<PlantedStock>> {
    let ctx = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_error(&ctx, e))?;
    let split = |s: &str| -> Vec<String> { s.split('|').filter(|x| !x.is_empty()).map(str::to_string).collect() };
    let num = |s: &str| s.parse::<f64>().map_err(|e| parse_error(&ctx, format!("value `{s}`: {e}")));
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_error(&ctx, e))?;
        if rec.len() != 5 {
            return Err(parse_error(&ctx, "expected 5 fields"));
        }
        out.push(PlantedStock {
            ticker: rec[0].to_string(),
            support: split(&rec[1]),
            coefficients: split(&rec[2]).iter().map(|c| num(c)).collect::<Result<_>>()?,
            market_beta: num(&rec[3])?,
            noise_sd: num(&rec[4])?,
        });
    }
    Ok(out)
}
