//! Seeded synthetic market series: GBM spot under the domestic measure with
//! a mean-reverting log-volatility.

use geogreeks_core::backtest::{Date, DayCount, MarketRow, MarketSeries};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spot follows `dS/S = (r_d - r_f) dt + σ dW₁`; `ln σ` is an
/// Ornstein–Uhlenbeck process with volatility `vol_of_vol`, reverting to
/// `ln long_run_vol` at rate `mean_reversion`, with shock correlation
/// `correlation`. Smile quotes are held constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthModel {
    pub spot: f64,
    /// Initial ATM vol, decimal.
    pub vol: f64,
    pub r_d: f64,
    pub r_f: f64,
    pub vol_of_vol: f64,
    pub mean_reversion: f64,
    /// Defaults to the initial vol.
    pub long_run_vol: Option<f64>,
    pub correlation: f64,
    pub rr25: Option<f64>,
    pub bf25: Option<f64>,
    pub day_count: f64,
}

impl Default for SynthModel {
    fn default() -> Self {
        Self {
            spot: 1.0,
            vol: 0.09,
            r_d: 0.0,
            r_f: 0.0,
            vol_of_vol: 0.0,
            mean_reversion: 0.0,
            long_run_vol: None,
            correlation: 0.0,
            rr25: None,
            bf25: None,
            day_count: 365.0,
        }
    }
}

impl SynthModel {
    fn validate(&self) -> Result<()> {
        let ok = self.spot > 0.0
            && self.vol > 0.0
            && self.vol_of_vol >= 0.0
            && self.mean_reversion >= 0.0
            && self.long_run_vol.is_none_or(|v| v > 0.0)
            && (-1.0..=1.0).contains(&self.correlation)
            && self.day_count > 0.0
            && [self.spot, self.vol, self.r_d, self.r_f, self.vol_of_vol, self.mean_reversion]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::config("synthetic model parameters out of range"))
        }
    }
}

/// Which days a generated date grid includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Calendar {
    /// Every calendar day.
    #[default]
    Daily,
    /// Monday to Friday.
    Weekdays,
}

/// `count` dates from `start` (inclusive), skipping weekends when asked.
pub fn date_grid(start: Date, count: usize, calendar: Calendar) -> Vec<Date> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if calendar == Calendar::Daily || d.weekday() < 5 {
            out.push(d);
        }
        d = d.add_days(1);
    }
    out
}

/// Generates one row per date. The same seed, model and dates always give
/// the same series.
pub fn synthesize_series(seed: u64, model: &SynthModel, dates: &[Date]) -> Result<MarketSeries> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dc = DayCount {
        denominator: model.day_count,
    };
    let mu = model.r_d - model.r_f;
    let theta = model.long_run_vol.unwrap_or(model.vol).ln();
    let rho = model.correlation;
    let rho_c = (1.0 - rho * rho).sqrt();
    let kappa = model.mean_reversion;

    let mut rows = Vec::with_capacity(dates.len());
    let mut ln_s = model.spot.ln();
    let mut ln_v = model.vol.ln();
    for (n, &date) in dates.iter().enumerate() {
        if n > 0 {
            let dt = dc.year_fraction(dates[n - 1], date);
            if !(dt > 0.0) {
                return Err(Error::config(format!("dates must increase strictly at {date}")));
            }
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let sigma = ln_v.exp();
            ln_s += (mu - 0.5 * sigma * sigma) * dt + sigma * dt.sqrt() * z1;
            let decay = (-kappa * dt).exp();
            ln_v = theta + (ln_v - theta) * decay;
            if model.vol_of_vol > 0.0 {
                let var = if kappa > 0.0 {
                    (1.0 - decay * decay) / (2.0 * kappa)
                } else {
                    dt
                };
                ln_v += model.vol_of_vol * var.sqrt() * (rho * z1 + rho_c * z2);
            }
        }
        rows.push(MarketRow {
            date,
            spot: ln_s.exp(),
            atm_vol: ln_v.exp(),
            r_d: model.r_d,
            r_f: model.r_f,
            rr25: model.rr25,
            bf25: model.bf25,
        });
    }
    Ok(MarketSeries::new(rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start() -> Date {
        Date::from_ymd(2024, 1, 1).unwrap()
    }

    #[test]
    fn zero_vol_of_vol_keeps_vol_constant() {
        let m = SynthModel {
            vol: 0.123,
            mean_reversion: 2.0,
            ..Default::default()
        };
        let s = synthesize_series(3, &m, &date_grid(start(), 300, Calendar::Weekdays)).unwrap();
        assert!(s.rows().iter().all(|r| r.atm_vol == s.rows()[0].atm_vol));
        assert!((s.rows()[0].atm_vol - 0.123).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_series() {
        let m = SynthModel {
            vol_of_vol: 0.8,
            mean_reversion: 1.5,
            correlation: -0.3,
            rr25: Some(0.01),
            ..Default::default()
        };
        let d = date_grid(start(), 200, Calendar::Daily);
        assert_eq!(synthesize_series(11, &m, &d).unwrap(), synthesize_series(11, &m, &d).unwrap());
        assert_ne!(synthesize_series(11, &m, &d).unwrap(), synthesize_series(12, &m, &d).unwrap());
    }

    #[test]
    fn mean_log_return_matches_drift() {
        let m = SynthModel {
            vol: 0.2,
            r_d: 0.05,
            r_f: 0.01,
            ..Default::default()
        };
        let n = 10_000;
        let s = synthesize_series(2024, &m, &date_grid(start(), n + 1, Calendar::Daily)).unwrap();
        let rets: Vec<f64> = s.rows().windows(2).map(|w| (w[1].spot / w[0].spot).ln()).collect();
        let dt = 1.0 / 365.0;
        let expected = (m.r_d - m.r_f - 0.5 * m.vol * m.vol) * dt;
        let mean = rets.iter().sum::<f64>() / n as f64;
        let se = m.vol * dt.sqrt() / (n as f64).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "mean {mean}, expected {expected}, se {se}");
    }

    #[test]
    fn weekday_grid_skips_weekends() {
        let d = date_grid(start(), 10, Calendar::Weekdays);
        assert_eq!(d.len(), 10);
        assert!(d.iter().all(|x| x.weekday() < 5));
        assert_eq!(d[5], Date::from_ymd(2024, 1, 8).unwrap());
    }

    #[test]
    fn rejects_bad_parameters() {
        let d = date_grid(start(), 3, Calendar::Daily);
        let bad = SynthModel {
            correlation: 1.5,
            ..Default::default()
        };
        assert!(synthesize_series(1, &bad, &d).is_err());
        assert!(synthesize_series(1, &SynthModel::default(), &[d[1], d[0]]).is_err());
    }
}
