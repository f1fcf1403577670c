use alloc::vec::Vec;

use super::stats::{mae_rmse, pearson};
use super::{Date, DayCount, Frequency, MarketSeries};
use crate::calibration::{calibrate_connection, CalibrationInstrument, CalibrationOptions};
use crate::error::{Error, Result};
use crate::geometry::{covariant_hessian, quadratic_predictor, Chart, Connection, TangentMove};
use crate::pricing::{
    pillar_strikes, vanna_volga_price, vv_target_hessian, BarrierSpec, FdBumps, Instrument, MarketSnapshot, OptionKind,
    SmilePillars, VanillaSpec, VolUnit,
};

/// Instruments used to calibrate the connection at each date.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CalibrationChoice {
    /// ATM straddle and 25-delta call struck at the date's pillar strikes.
    #[default]
    StraddleAnd25Call,
    /// Fixed-strike instruments; their expiry follows the traded option's.
    Fixed(Vec<Instrument>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnlConfig {
    pub strike: f64,
    pub barrier: f64,
    pub expiry: Date,
    pub day_count: DayCount,
    pub frequency: Frequency,
    pub vol_unit: VolUnit,
    pub bumps: FdBumps,
    pub calibration: CalibrationChoice,
    pub eta: f64,
}

impl PnlConfig {
    pub fn new(strike: f64, barrier: f64, expiry: Date) -> Self {
        Self {
            strike,
            barrier,
            expiry,
            day_count: DayCount::default(),
            frequency: Frequency::Daily,
            vol_unit: VolUnit::Points,
            bumps: FdBumps::default(),
            calibration: CalibrationChoice::default(),
            eta: 0.0,
        }
    }
}

/// Predictor names in report order.
pub const PREDICTORS: [&str; 3] = ["bs-taylor", "vv-revaluation", "connection-corrected"];

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSeries {
    pub name: &'static str,
    pub increments: Vec<f64>,
    pub mae: f64,
    pub rmse: f64,
    /// `None` when either series is constant.
    pub pearson: Option<f64>,
}

/// One-step increments of the benchmark and each predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorReport {
    pub frequency: Frequency,
    pub start_dates: Vec<Date>,
    pub end_dates: Vec<Date>,
    /// Closed-form price change over each step.
    pub benchmark: Vec<f64>,
    pub predictors: Vec<PredictorSeries>,
    /// Barrier touched on or before the step's start date.
    pub knocked: Vec<bool>,
    pub connections: Vec<Connection>,
}

impl PredictorReport {
    pub fn predictor(&self, name: &str) -> Option<&PredictorSeries> {
        self.predictors.iter().find(|p| p.name == name)
    }

    pub fn len(&self) -> usize {
        self.benchmark.len()
    }

    pub fn is_empty(&self) -> bool {
        self.benchmark.is_empty()
    }
}

fn calibration_instruments(
    cfg: &PnlConfig,
    mkt: &MarketSnapshot,
    pillars: &SmilePillars,
    tau: f64,
) -> Result<Vec<Instrument>> {
    Ok(match &cfg.calibration {
        CalibrationChoice::StraddleAnd25Call => {
            let k = pillar_strikes(pillars, mkt, tau);
            alloc::vec![
                Instrument::Straddle {
                    strike: k[0],
                    expiry: tau,
                },
                Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, k[1], tau)?),
            ]
        }
        CalibrationChoice::Fixed(list) => list.iter().map(|i| i.with_expiry(tau)).collect(),
    })
}

/// Connection matching each calibration instrument's smile Hessian. The
/// baseline uses the same finite-difference scheme on a flat smile, so a
/// flat smile yields a zero connection.
fn calibrate_at(
    cfg: &PnlConfig,
    chart: &Chart,
    mkt: &MarketSnapshot,
    pillars: &SmilePillars,
    tau: f64,
) -> Result<Connection> {
    let flat = SmilePillars::flat(mkt.vol)?;
    let mut list = Vec::new();
    for inst in calibration_instruments(cfg, mkt, pillars, tau)? {
        let grad = inst.greeks(mkt, cfg.vol_unit, &cfg.bumps)?.gradient(chart)?;
        let baseline = vv_target_hessian(&inst, mkt, &flat, &cfg.bumps, cfg.vol_unit, chart)?;
        let target = vv_target_hessian(&inst, mkt, pillars, &cfg.bumps, cfg.vol_unit, chart)?;
        list.push(CalibrationInstrument::new(grad, baseline, target, 1.0)?);
    }
    let opts = CalibrationOptions {
        eta: cfg.eta,
        ..Default::default()
    };
    Ok(calibrate_connection(&list, &opts)?.connection)
}

/// Replays one-step predictors of the up-and-in call's value change.
///
/// Predictors see only `(δS, δσ)`: rates and time decay are held at the
/// step's start, so the benchmark's theta shows up as prediction error.
/// Knock-in is monitored on every row of the series, whatever the grid.
pub fn run_pnl_backtest(series: &MarketSeries, cfg: &PnlConfig) -> Result<PredictorReport> {
    let rows = series.rows();
    let chart = Chart::spot_vol(cfg.vol_unit.label());
    let base = BarrierSpec::new(cfg.strike, cfg.barrier, 1.0)?;
    cfg.bumps.validate()?;

    let mut touched = Vec::with_capacity(rows.len());
    let mut hit = false;
    for r in rows {
        hit |= r.spot >= cfg.barrier;
        touched.push(hit);
    }
    let grid: Vec<usize> = cfg
        .frequency
        .grid(series)
        .into_iter()
        .filter(|&i| cfg.day_count.year_fraction(rows[i].date, cfg.expiry) > 0.0)
        .collect();
    if grid.len() < 2 {
        return Err(Error::invalid("the replay needs at least two dates before expiry"));
    }

    let instrument = |i: usize| -> Instrument {
        let tau = cfg.day_count.year_fraction(rows[i].date, cfg.expiry);
        let spec = BarrierSpec { expiry: tau, ..base };
        if touched[i] {
            Instrument::Vanilla(spec.knocked_in())
        } else {
            Instrument::UpInCall(spec)
        }
    };

    let steps = grid.len() - 1;
    let mut report = PredictorReport {
        frequency: cfg.frequency,
        start_dates: Vec::with_capacity(steps),
        end_dates: Vec::with_capacity(steps),
        benchmark: Vec::with_capacity(steps),
        predictors: Vec::new(),
        knocked: Vec::with_capacity(steps),
        connections: Vec::with_capacity(steps),
    };
    let mut inc: [Vec<f64>; 3] = Default::default();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ra, rb) = (&rows[a], &rows[b]);
        let step = || -> Result<(f64, [f64; 3], Connection)> {
            let mkt_a = ra.snapshot()?;
            let mkt_b = rb.snapshot()?;
            let pillars_a = ra.pillars()?;
            let inst_a = instrument(a);
            let tau = inst_a.expiry();
            let bench = instrument(b).price(&mkt_b) - inst_a.price(&mkt_a);

            let dv = rb.atm_vol - ra.atm_vol;
            let mv = TangentMove::new(&chart, &[rb.spot - ra.spot, cfg.vol_unit.from_decimal(dv)])?;
            let greeks = inst_a.greeks(&mkt_a, cfg.vol_unit, &cfg.bumps)?;
            let grad = greeks.gradient(&chart)?;
            let hess = greeks.hessian(&chart)?;
            let taylor = quadratic_predictor(&grad, &hess, &mv, None)?;

            let moved = MarketSnapshot {
                spot: rb.spot,
                vol: rb.atm_vol,
                ..mkt_a
            };
            let vv = vanna_volga_price(&inst_a, &moved, &pillars_a.shifted(dv)?)?
                - vanna_volga_price(&inst_a, &mkt_a, &pillars_a)?;

            let conn = calibrate_at(cfg, &chart, &mkt_a, &pillars_a, tau)?;
            let adjusted = covariant_hessian(&hess, &conn, &grad)?;
            let corrected = quadratic_predictor(&grad, &adjusted, &mv, None)?;
            Ok((bench, [taylor, vv, corrected], conn))
        };
        let (bench, preds, conn) = step().map_err(|e| e.at(ra.date))?;
        report.start_dates.push(ra.date);
        report.end_dates.push(rb.date);
        report.benchmark.push(bench);
        report.knocked.push(touched[a]);
        report.connections.push(conn);
        for (k, p) in preds.into_iter().enumerate() {
            inc[k].push(p);
        }
    }
    for (name, increments) in PREDICTORS.into_iter().zip(inc) {
        let (mae, rmse) = mae_rmse(&increments, &report.benchmark).unwrap_or_else(|_| {
            let e = increments[0] - report.benchmark[0];
            (e.abs(), e.abs())
        });
        let pearson = pearson(&increments, &report.benchmark).ok();
        report.predictors.push(PredictorSeries {
            name,
            increments,
            mae,
            rmse,
            pearson,
        });
    }
    Ok(report)
}
