//! Weekly return panels and their train / validation / test split.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple weekly returns on a shared week grid. Missing observations are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// One series per ticker.
    pub returns: Vec<Vec<f64>>,
    pub market: Vec<f64>,
    pub risk_free: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        tickers: Vec<String>,
        returns: Vec<Vec<f64>>,
        market: Vec<f64>,
        risk_free: Vec<f64>,
    ) -> Result<Self> {
        let t = dates.len();
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("panel dates must be strictly increasing".into()));
        }
        if tickers.len() != returns.len() {
            return Err(Error::Data("one return series per ticker is required".into()));
        }
        if market.len() != t || risk_free.len() != t {
            return Err(Error::Data("market and risk-free series must cover the week grid".into()));
        }
        if let Some((i, _)) = returns.iter().enumerate().find(|(_, r)| r.len() != t) {
            return Err(Error::Data(format!("series {} does not cover the week grid", tickers[i])));
        }
        let mut index = HashMap::with_capacity(tickers.len());
        for (i, tk) in tickers.iter().enumerate() {
            if index.insert(tk.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate ticker {tk}")));
            }
        }
        Ok(ReturnPanel {
            dates,
            tickers,
            returns,
            market,
            risk_free,
            index,
        })
    }

    pub fn n_weeks(&self) -> usize {
        self.dates.len()
    }

    pub fn position(&self, ticker: &str) -> Result<usize> {
        self.index.get(ticker).copied().ok_or_else(|| Error::Lookup(ticker.to_string()))
    }

    pub fn series(&self, ticker: &str) -> Result<&[f64]> {
        Ok(&self.returns[self.position(ticker)?])
    }

    /// The first `end` weeks.
    pub fn truncate(&self, end: usize) -> ReturnPanel {
        let end = end.min(self.n_weeks());
        ReturnPanel {
            dates: self.dates[..end].to_vec(),
            tickers: self.tickers.clone(),
            returns: self.returns.iter().map(|r| r[..end].to_vec()).collect(),
            market: self.market[..end].to_vec(),
            risk_free: self.risk_free[..end].to_vec(),
            index: self.index.clone(),
        }
    }

    /// Reads a wide return CSV (`date,<ticker>...`, empty cells missing) and
    /// two-column market and risk-free files on the same dates.
    pub fn load(returns: &Path, market: &Path, risk_free: &Path) -> Result<Self> {
        let (dates, tickers, series) = read_wide_csv(returns)?;
        let market = read_aligned_series(market, &dates)?;
        let risk_free = read_aligned_series(risk_free, &dates)?;
        ReturnPanel::new(dates, tickers, series, market, risk_free)
    }
}

pub(crate) fn parse_date(s: &str, ctx: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::parse(ctx, format!("date `{s}`: {e}")))
}

fn parse_cell(s: &str, ctx: &str) -> Result<f64> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    s.parse::<f64>().map_err(|e| Error::parse(ctx, format!("value `{s}`: {e}")))
}

/// `date` column followed by one numeric column per series.
pub(crate) fn read_wide_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<String>, Vec<Vec<f64>>)> {
    let ctx = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers().map_err(|e| Error::parse(&ctx, e))?.clone();
    if headers.is_empty() || !headers[0].trim().eq_ignore_ascii_case("date") {
        return Err(Error::parse(&ctx, "first column must be `date`"));
    }
    let names: Vec<String> = headers.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut series = vec![Vec::new(); names.len()];
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
        let row_ctx = format!("{ctx} row {}", line + 2);
        if rec.len() != headers.len() {
            return Err(Error::parse(&row_ctx, "wrong number of fields"));
        }
        dates.push(parse_date(&rec[0], &row_ctx)?);
        for (k, cell) in rec.iter().skip(1).enumerate() {
            series[k].push(parse_cell(cell, &row_ctx)?);
        }
    }
    Ok((dates, names, series))
}

/// A single-series CSV whose dates must equal `dates` exactly.
fn read_aligned_series(path: &Path, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let (own_dates, names, series) = read_wide_csv(path)?;
    let ctx = path.display().to_string();
    if names.len() != 1 {
        return Err(Error::parse(&ctx, "expected exactly one value column"));
    }
    if own_dates != dates {
        let missing = dates.iter().find(|d| !own_dates.contains(d));
        return Err(Error::Data(match missing {
            Some(d) => format!("{ctx} is missing week {d}"),
            None => format!("{ctx} is not on the panel week grid"),
        }));
    }
    Ok(series.into_iter().next().unwrap_or_default())
}

/// Returns with the risk-free rate removed. The market series is the market
/// excess return.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub returns: Vec<Vec<f64>>,
    pub market: Vec<f64>,
    index: HashMap<String, usize>,
}

impl ExcessPanel {
    pub fn n_weeks(&self) -> usize {
        self.dates.len()
    }

    pub fn position(&self, ticker: &str) -> Result<usize> {
        self.index.get(ticker).copied().ok_or_else(|| Error::Lookup(ticker.to_string()))
    }

    pub fn series(&self, ticker: &str) -> Result<&[f64]> {
        Ok(&self.returns[self.position(ticker)?])
    }

    /// Errors naming the series and week of the first missing value in
    /// `weeks`.
    pub fn require_complete(&self, series: usize, weeks: Range<usize>) -> Result<()> {
        if weeks.end > self.n_weeks() {
            return Err(Error::Data(format!(
                "series {} needs week {} but the panel has {} weeks",
                self.tickers[series],
                weeks.end - 1,
                self.n_weeks()
            )));
        }
        match weeks.clone().find(|&t| !self.returns[series][t].is_finite()) {
            Some(t) => Err(Error::Data(format!(
                "series {} is missing week {}",
                self.tickers[series], self.dates[t]
            ))),
            None => Ok(()),
        }
    }
}

/// Subtracts the risk-free rate from every series. A missing market or
/// risk-free week is an error; missing asset weeks stay missing and are
/// checked where a window needs them.
pub fn excess_returns(panel: &ReturnPanel) -> Result<ExcessPanel> {
    for (name, s) in [("risk_free", &panel.risk_free), ("market", &panel.market)] {
        if let Some(t) = s.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("series {name} is missing week {}", panel.dates[t])));
        }
    }
    let sub = |s: &[f64]| -> Vec<f64> { s.iter().zip(&panel.risk_free).map(|(r, f)| r - f).collect() };
    Ok(ExcessPanel {
        dates: panel.dates.clone(),
        tickers: panel.tickers.clone(),
        returns: panel.returns.iter().map(|s| sub(s)).collect(),
        market: sub(&panel.market),
        index: panel.index.clone(),
    })
}

/// Week-index boundaries: training `[0, train_end)`, validation
/// `[train_end, valid_end)`, test `[valid_end, n_weeks)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_end: usize,
    pub valid_end: usize,
}

impl Split {
    pub fn validate(&self, n_weeks: usize) -> Result<()> {
        if !(1 <= self.train_end && self.train_end < self.valid_end && self.valid_end < n_weeks) {
            return Err(Error::Config(format!(
                "split boundaries must satisfy 1 <= train_end ({}) < valid_end ({}) < weeks ({n_weeks})",
                self.train_end, self.valid_end
            )));
        }
        Ok(())
    }

    /// Boundaries from the last training date and last validation date.
    pub fn from_dates(dates: &[NaiveDate], train_last: NaiveDate, valid_last: NaiveDate) -> Result<Self> {
        let split = Split {
            train_end: dates.partition_point(|d| *d <= train_last),
            valid_end: dates.partition_point(|d| *d <= valid_last),
        };
        split.validate(dates.len())?;
        Ok(split)
    }

    pub fn train(&self) -> Range<usize> {
        0..self.train_end
    }

    pub fn validation(&self) -> Range<usize> {
        self.train_end..self.valid_end
    }

    pub fn test(&self, n_weeks: usize) -> Range<usize> {
        self.valid_end..n_weeks
    }
}
