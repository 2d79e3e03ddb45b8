//! Five-factor baseline: factor file loading and the baseline regression.

use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::factor_model::{fit_lagged, ExcessPanel};
use crate::regression::RegressionFit;

pub const FACTOR_NAMES: [&str; 5] = ["Mkt-RF", "SMB", "HML", "RMW", "CMA"];

/// Factor returns as decimals on a week grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Ff5Factors {
    pub dates: Vec<NaiveDate>,
    /// One series per entry of [`FACTOR_NAMES`].
    pub factors: [Vec<f64>; 5],
    pub risk_free: Vec<f64>,
}

impl Ff5Factors {
    /// Reads `date,Mkt-RF,SMB,HML,RMW,CMA,RF` in percent. Columns are matched
    /// by name; dates may be `YYYY-MM-DD` or `YYYYMMDD`.
    pub fn load(path: &Path) -> Result<Self> {
        let ctx = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader.headers().map_err(|e| Error::parse(&ctx, e))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::parse(&ctx, format!("missing column `{name}`")))
        };
        let date_col = col("date")?;
        let factor_cols = FACTOR_NAMES.map(col);
        let factor_cols: Vec<usize> = factor_cols.into_iter().collect::<Result<_>>()?;
        let rf_col = col("RF")?;

        let mut out = Ff5Factors {
            dates: Vec::new(),
            factors: Default::default(),
            risk_free: Vec::new(),
        };
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(&ctx, e))?;
            let row_ctx = format!("{ctx} row {}", line + 2);
            out.dates.push(parse_factor_date(&rec[date_col], &row_ctx)?);
            for (k, &c) in factor_cols.iter().enumerate() {
                out.factors[k].push(percent(&rec[c], &row_ctx)?);
            }
            out.risk_free.push(percent(&rec[rf_col], &row_ctx)?);
        }
        if out.dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse(&ctx, "dates must be strictly increasing"));
        }
        Ok(out)
    }

    /// The factors on exactly `dates`; a missing week is an error.
    pub fn align(&self, dates: &[NaiveDate]) -> Result<Ff5Factors> {
        let mut rows = Vec::with_capacity(dates.len());
        for d in dates {
            match self.dates.binary_search(d) {
                Ok(i) => rows.push(i),
                Err(_) => return Err(Error::Data(format!("factor file is missing week {d}"))),
            }
        }
        let pick = |s: &[f64]| rows.iter().map(|&i| s[i]).collect::<Vec<f64>>();
        Ok(Ff5Factors {
            dates: dates.to_vec(),
            factors: [
                pick(&self.factors[0]),
                pick(&self.factors[1]),
                pick(&self.factors[2]),
                pick(&self.factors[3]),
                pick(&self.factors[4]),
            ],
            risk_free: pick(&self.risk_free),
        })
    }

    pub fn columns(&self) -> Vec<&[f64]> {
        self.factors.iter().map(|f| f.as_slice()).collect()
    }

    /// Writes the file format read by [`Ff5Factors::load`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let ctx = path.display().to_string();
        let mut header = vec!["date"];
        header.extend(FACTOR_NAMES);
        header.push("RF");
        w.write_record(&header).map_err(|e| Error::parse(&ctx, e))?;
        for (t, d) in self.dates.iter().enumerate() {
            let mut row = vec![d.format("%Y-%m-%d").to_string()];
            row.extend(self.factors.iter().map(|f| format!("{}", f[t] * 100.0)));
            row.push(format!("{}", self.risk_free[t] * 100.0));
            w.write_record(&row).map_err(|e| Error::parse(&ctx, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn parse_factor_date(s: &str, ctx: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y%m%d"))
        .map_err(|e| Error::parse(ctx, format!("date `{s}`: {e}")))
}

fn percent(s: &str, ctx: &str) -> Result<f64> {
    let v: f64 = s.parse().map_err(|e| Error::parse(ctx, format!("value `{s}`: {e}")))?;
    if !v.is_finite() {
        return Err(Error::parse(ctx, format!("value `{s}` is not finite")));
    }
    Ok(v / 100.0)
}

/// OLS with intercept of the stock's excess return on the five factors over
/// `weeks`, with factors lagged by `lag` weeks. Uses the same fitting path
/// as the selected models.
pub fn baseline_ff5_fit(
    panel: &ExcessPanel,
    ff5: &Ff5Factors,
    stock: usize,
    weeks: Range<usize>,
    lag: usize,
) -> Result<RegressionFit> {
    if ff5.dates != panel.dates {
        return Err(Error::Data("factor series are not aligned to the panel week grid".into()));
    }
    fit_lagged(&panel.returns[stock], &ff5.columns(), weeks, lag)
}
