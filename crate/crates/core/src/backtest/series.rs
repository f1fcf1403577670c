use alloc::format;
use alloc::vec::Vec;

use super::Date;
use crate::error::{Error, Result};
use crate::pricing::{MarketSnapshot, SmilePillars};

/// One observation. Vols are decimals; `rr25`/`bf25` are the 25-delta
/// risk reversal and butterfly, also in decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketRow {
    pub date: Date,
    pub spot: f64,
    pub atm_vol: f64,
    pub r_d: f64,
    pub r_f: f64,
    pub rr25: Option<f64>,
    pub bf25: Option<f64>,
}

impl MarketRow {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return Err(Error::invalid(format!("spot must be positive, got {}", self.spot)));
        }
        if !(self.atm_vol > 0.0 && self.atm_vol.is_finite()) {
            return Err(Error::invalid(format!("ATM vol must be positive, got {}", self.atm_vol)));
        }
        if !self.r_d.is_finite() || !self.r_f.is_finite() {
            return Err(Error::NonFinite("rates"));
        }
        if self.rr25.is_some_and(|v| !v.is_finite()) || self.bf25.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite("smile quotes"));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<MarketSnapshot> {
        MarketSnapshot::new(self.spot, self.atm_vol, self.r_d, self.r_f)
    }

    /// Pillars from the risk reversal and butterfly; a missing quote counts
    /// as zero, so a row without either gives a flat smile.
    pub fn pillars(&self) -> Result<SmilePillars> {
        match (self.rr25, self.bf25) {
            (None, None) => SmilePillars::flat(self.atm_vol),
            (rr, bf) => SmilePillars::from_rr_bf(self.atm_vol, rr.unwrap_or(0.0), bf.unwrap_or(0.0)),
        }
    }
}

/// Rows with strictly increasing dates.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    rows: Vec<MarketRow>,
}

impl MarketSeries {
    pub fn new(rows: Vec<MarketRow>) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            r.validate().map_err(|e| e.at(r.date))?;
            if i > 0 && rows[i - 1].date >= r.date {
                return Err(Error::invalid(format!(
                    "dates must increase strictly: {} follows {}",
                    r.date,
                    rows[i - 1].date
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[MarketRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Rebalancing and prediction frequency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Frequency {
    #[default]
    Daily,
    /// The first row, then each row at least seven calendar days after the
    /// previously kept one.
    Weekly,
}

impl Frequency {
    /// Indices of the rows on this frequency's grid.
    pub fn grid(self, series: &MarketSeries) -> Vec<usize> {
        match self {
            Frequency::Daily => (0..series.len()).collect(),
            Frequency::Weekly => {
                let mut out = Vec::new();
                for (i, r) in series.rows.iter().enumerate() {
                    match out.last() {
                        None => out.push(i),
                        Some(&k) if series.rows[k].date.days_until(r.date) >= 7 => out.push(i),
                        _ => {}
                    }
                }
                out
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
        }
    }
}
