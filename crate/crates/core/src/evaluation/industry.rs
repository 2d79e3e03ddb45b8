//! Primary-industry classification and per-industry averages.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, StockEvaluation};
use crate::error::{Error, Result};

pub const INDUSTRIES: [&str; 17] = [
    "Financial Services",
    "Technology",
    "Agriculture",
    "Industrial Goods",
    "Consumer Goods",
    "Basic Materials/Resources",
    "Health Care/Life Sciences",
    "Leisure/Arts/Hospitality",
    "Media/Entertainment",
    "Transportation/Logistics",
    "Utilities",
    "Telecommunication Services",
    "Automotive",
    "Real Estate/Construction",
    "Business/Consumer Services",
    "Energy",
    "Retail/Wholesale",
];

/// Label used for stocks absent from the industry map.
pub const UNCLASSIFIED: &str = "Unclassified";

/// Ticker to primary industry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndustryMap {
    pub industries: BTreeMap<String, String>,
}

impl IndustryMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut industries = BTreeMap::new();
        for (ticker, industry) in pairs {
            if !INDUSTRIES.contains(&industry.as_str()) {
                return Err(Error::Data(format!("ticker {ticker} has unknown industry `{industry}`")));
            }
            if industries.insert(ticker.clone(), industry).is_some() {
                return Err(Error::Data(format!("ticker {ticker} is listed twice in the industry map")));
            }
        }
        Ok(IndustryMap { industries })
    }

    /// Two-column CSV `ticker,industry`.
    pub fn load(path: &Path) -> Result<Self> {
        let ctx = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let mut pairs = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
            if rec.len() != 2 {
                return Err(Error::parse(&ctx, "expected `ticker,industry` rows"));
            }
            pairs.push((rec[0].to_string(), rec[1].to_string()));
        }
        Self::new(pairs)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ctx = path.display().to_string();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(&ctx, e))?;
        w.write_record(["ticker", "industry"]).map_err(|e| Error::parse(&ctx, e))?;
        for (t, i) in &self.industries {
            w.write_record([t, i]).map_err(|e| Error::parse(&ctx, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn industry_of(&self, ticker: &str) -> Option<&str> {
        self.industries.get(ticker).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sample {
    InSample,
    OutOfSample,
}

impl Sample {
    pub fn label(self) -> &'static str {
        match self {
            Sample::InSample => "in_sample",
            Sample::OutOfSample => "out_of_sample",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryRow {
    pub industry: String,
    pub model: Model,
    pub sample: Sample,
    pub n_stocks: usize,
    pub mean_adjusted_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndustryReport {
    /// Sorted by industry, model, sample; unclassified stocks form their own
    /// group after the named industries.
    pub rows: Vec<IndustryRow>,
    pub unclassified: Vec<String>,
}

/// Mean in-sample and out-of-sample explanation adjusted R² per industry and
/// model. Undefined values are left out of the means; industries without
/// any stock are omitted.
pub fn industry_summary(evaluations: &[StockEvaluation], map: &IndustryMap) -> IndustryReport {
    type Key = (String, Model, Sample);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut unclassified_groups: BTreeMap<(Model, Sample), Vec<f64>> = BTreeMap::new();
    let mut unclassified = Vec::new();
    for e in evaluations {
        let industry = map.industry_of(&e.stock);
        if industry.is_none() && !unclassified.contains(&e.stock) {
            unclassified.push(e.stock.clone());
        }
        for (sample, value) in [(Sample::InSample, e.in_sample), (Sample::OutOfSample, e.oos_explanation)] {
            let Some(v) = value else { continue };
            match industry {
                Some(ind) => groups.entry((ind.to_string(), e.model, sample)).or_default().push(v),
                None => unclassified_groups.entry((e.model, sample)).or_default().push(v),
            }
        }
    }
    for name in INDUSTRIES {
        if !groups.keys().any(|(ind, _, _)| ind == name) {
            log::warn!("industry {name} has no evaluated stocks and is omitted");
        }
    }
    if !unclassified.is_empty() {
        log::warn!("{} evaluated stocks have no industry", unclassified.len());
    }
    unclassified.sort();
    let row = |industry: String, model, sample, values: Vec<f64>| IndustryRow {
        industry,
        model,
        sample,
        n_stocks: values.len(),
        mean_adjusted_r2: values.iter().sum::<f64>() / values.len() as f64,
    };
    let mut rows: Vec<IndustryRow> = groups.into_iter().map(|((i, m, s), v)| row(i, m, s, v)).collect();
    rows.extend(
        unclassified_groups
            .into_iter()
            .map(|((m, s), v)| row(UNCLASSIFIED.to_string(), m, s, v)),
    );
    IndustryReport { rows, unclassified }
}
