use alloc::vec::Vec;

use super::{Date, DayCount, Frequency, MarketSeries};
use crate::error::{Error, Result};
use crate::geometry::{Chart, StatePoint};
use crate::linalg::{self, Matrix};
use crate::liquidity::{
    build_hedge_response, least_cost_trade, pullback_penalty, rebalance_trigger, ExposureSpec, HedgeInstrumentSpec,
    ImpactMatrix,
};
use crate::pricing::{pillar_strikes, BarrierSpec, FdBumps, GreekBundle, Instrument, OptionKind, VanillaSpec, VolUnit};

/// Liquidity inputs for the spot, ATM straddle and 25-delta call.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeUniverse {
    pub spot: HedgeInstrumentSpec,
    pub straddle: HedgeInstrumentSpec,
    pub call25: HedgeInstrumentSpec,
}

impl HedgeUniverse {
    pub fn specs(&self) -> [&HedgeInstrumentSpec; 3] {
        [&self.spot, &self.straddle, &self.call25]
    }

    /// Every width multiplied by `a`.
    pub fn with_widths_scaled(&self, a: f64) -> Result<Self> {
        use crate::liquidity::WidthQuote;
        let scale = |s: &HedgeInstrumentSpec| -> Result<HedgeInstrumentSpec> {
            let width = match s.width {
                WidthQuote::Price { half_spread } => WidthQuote::Price {
                    half_spread: half_spread * a,
                },
                WidthQuote::Vol { half_width, quote_vega } => WidthQuote::Vol {
                    half_width: half_width * a,
                    quote_vega,
                },
            };
            let mut out = HedgeInstrumentSpec::new(&s.name, &s.unit, width, s.clip)?;
            if let Some(rows) = &s.tiers {
                let rows = rows
                    .iter()
                    .map(|r| crate::liquidity::TierRow { width: r.width * a, ..*r })
                    .collect();
                out = out.with_tiers(rows)?;
            }
            Ok(out)
        };
        Ok(Self {
            spot: scale(&self.spot)?,
            straddle: scale(&self.straddle)?,
            call25: scale(&self.call25)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CostMode {
    /// `½δqᵀΛδq` with `λ = 2s/Q`.
    #[default]
    Flat,
    /// Per-instrument `½λ(q)q²` from the tier tables; trades use `λ` frozen
    /// at the clip size.
    Tiered,
}

/// Rebalancing stops for good once both book exposures fall below these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopFloors {
    pub delta: f64,
    pub vega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    pub strike: f64,
    pub barrier: f64,
    pub expiry: Date,
    /// Option notional held in the book.
    pub notional: f64,
    pub day_count: DayCount,
    pub frequency: Frequency,
    pub vol_unit: VolUnit,
    pub bumps: FdBumps,
    pub hedges: HedgeUniverse,
    pub mode: CostMode,
    /// Rebalance only when the liquidity distance since the last rebalance
    /// reaches this level.
    pub trigger: Option<f64>,
    pub floors: Option<StopFloors>,
}

impl CostConfig {
    pub fn new(strike: f64, barrier: f64, expiry: Date, notional: f64, hedges: HedgeUniverse) -> Self {
        Self {
            strike,
            barrier,
            expiry,
            notional,
            day_count: DayCount::default(),
            frequency: Frequency::Weekly,
            vol_unit: VolUnit::Points,
            bumps: FdBumps::default(),
            hedges,
            mode: CostMode::Flat,
            trigger: None,
            floors: None,
        }
    }
}

/// Per-date hedge trades and costs. The first date carries no trade.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub dates: Vec<Date>,
    /// Trades in spot, straddle and call units.
    pub trades: Vec<[f64; 3]>,
    /// Diagonal of the impact matrix used for each date's trade.
    pub lambdas: Vec<[f64; 3]>,
    pub costs: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub rebalanced: Vec<bool>,
    pub initial_premium: f64,
    pub halted_at: Option<Date>,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Cumulative cost over the initial option premium.
    pub fn premium_fraction(&self) -> Option<f64> {
        (self.initial_premium > 0.0).then(|| self.total() / self.initial_premium)
    }
}

struct DateState {
    x: StatePoint,
    b: Matrix,
    j_e: Matrix,
    lambda: ImpactMatrix,
    vegas: [Option<f64>; 3],
    book: GreekBundle,
}

/// Replays least-cost hedging of the option's delta and vega with the spot,
/// an ATM straddle and a 25-delta call. Each rebalance offsets the exposure
/// drift `J_E·δx` accumulated since the previous one.
pub fn run_cost_backtest(series: &MarketSeries, cfg: &CostConfig) -> Result<CostReport> {
    let rows = series.rows();
    let chart = Chart::spot_vol(cfg.vol_unit.label());
    let base = BarrierSpec::new(cfg.strike, cfg.barrier, 1.0)?;
    cfg.bumps.validate()?;
    if !(cfg.notional.is_finite()) {
        return Err(Error::NonFinite("notional"));
    }
    if let Some(l) = cfg.trigger {
        if !(l > 0.0) {
            return Err(Error::invalid("trigger level must be positive"));
        }
    }
    let grid: Vec<usize> = cfg
        .frequency
        .grid(series)
        .into_iter()
        .filter(|&i| cfg.day_count.year_fraction(rows[i].date, cfg.expiry) > 0.0)
        .collect();
    if grid.is_empty() {
        return Err(Error::invalid("no dates before expiry"));
    }
    let mut touched = Vec::with_capacity(rows.len());
    let mut hit = false;
    for r in rows {
        hit |= r.spot >= cfg.barrier;
        touched.push(hit);
    }

    let state = |i: usize| -> Result<DateState> {
        let r = &rows[i];
        let mkt = r.snapshot()?;
        let tau = cfg.day_count.year_fraction(r.date, cfg.expiry);
        let spec = BarrierSpec { expiry: tau, ..base };
        let option = if touched[i] {
            Instrument::Vanilla(spec.knocked_in())
        } else {
            Instrument::UpInCall(spec)
        };
        let book = option.greeks(&mkt, cfg.vol_unit, &cfg.bumps)?.scaled(cfg.notional);
        let k = pillar_strikes(&r.pillars()?, &mkt, tau);
        let straddle = Instrument::Straddle { strike: k[0], expiry: tau };
        let call = Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, k[1], tau)?);
        let gs = straddle.greeks(&mkt, cfg.vol_unit, &cfg.bumps)?;
        let gc = call.greeks(&mkt, cfg.vol_unit, &cfg.bumps)?;
        let b = Matrix::from_row_slice(2, 3, &[1.0, gs.delta, gc.delta, 0.0, gs.vega, gc.vega]);
        let j_e = Matrix::from_row_slice(2, 2, &[book.gamma, book.vanna, book.vanna, book.volga]);
        // widths are quoted in vol points, so conversions use vega per point
        let vegas = [
            None,
            Some(straddle.greeks(&mkt, VolUnit::Points, &cfg.bumps)?.vega),
            Some(call.greeks(&mkt, VolUnit::Points, &cfg.bumps)?.vega),
        ];
        let specs = cfg.hedges.specs();
        let mut diag = [0.0; 3];
        for k in 0..3 {
            diag[k] = match cfg.mode {
                CostMode::Flat => specs[k].lambda(vegas[k])?,
                CostMode::Tiered => specs[k].frozen_lambda(vegas[k], None)?,
            };
        }
        let x = StatePoint::new(&chart, &[r.spot, cfg.vol_unit.from_decimal(r.atm_vol)])?;
        Ok(DateState {
            x,
            b,
            j_e,
            lambda: ImpactMatrix::diagonal(&diag)?,
            vegas,
            book,
        })
    };

    let first = state(grid[0]).map_err(|e| e.at(rows[grid[0]].date))?;
    let initial_premium = first.book.price;
    let n = grid.len();
    let mut report = CostReport {
        dates: Vec::with_capacity(n),
        trades: Vec::with_capacity(n),
        lambdas: Vec::with_capacity(n),
        costs: Vec::with_capacity(n),
        cumulative: Vec::with_capacity(n),
        rebalanced: Vec::with_capacity(n),
        initial_premium,
        halted_at: None,
    };
    let diag = |l: &ImpactMatrix| [l.matrix()[(0, 0)], l.matrix()[(1, 1)], l.matrix()[(2, 2)]];
    report.dates.push(rows[grid[0]].date);
    report.trades.push([0.0; 3]);
    report.lambdas.push(diag(&first.lambda));
    report.costs.push(0.0);
    report.cumulative.push(0.0);
    report.rebalanced.push(false);

    let mut anchor = first;
    let mut total = 0.0;
    for &i in &grid[1..] {
        let date = rows[i].date;
        let now = state(i).map_err(|e| e.at(date))?;
        let mut trade = [0.0; 3];
        let mut cost = 0.0;
        let mut rebalanced = false;
        if report.halted_at.is_none() {
            if let Some(f) = cfg.floors {
                if now.book.delta.abs() < f.delta && now.book.vega.abs() < f.vega {
                    report.halted_at = Some(date);
                }
            }
        }
        if report.halted_at.is_none() {
            let step = || -> Result<Option<([f64; 3], f64)>> {
                if let Some(level) = cfg.trigger {
                    if anchor.lambda.is_zero() {
                        return Ok(None);
                    }
                    let e = ExposureSpec::new(&chart, anchor.b.clone(), anchor.j_e.clone())?;
                    let g = pullback_penalty(&build_hedge_response(&anchor.lambda, &e)?, &anchor.lambda)?;
                    if !rebalance_trigger(&now.x, &anchor.x, g.form(), level)? {
                        return Ok(None);
                    }
                }
                let dx = anchor.x.displacement_to(&now.x)?;
                let c = -(&anchor.j_e * dx.delta());
                let (dq, cost) = if now.lambda.is_zero() {
                    (linalg::min_norm_solve(&now.b, &c, 1e-12), 0.0)
                } else {
                    let dq = least_cost_trade(&now.lambda, &now.b, &c)?;
                    let cost = match cfg.mode {
                        CostMode::Flat => now.lambda.cost(&dq)?,
                        CostMode::Tiered => {
                            let specs = cfg.hedges.specs();
                            let mut s = 0.0;
                            for k in 0..3 {
                                s += specs[k].cost(dq[k], now.vegas[k])?;
                            }
                            s
                        }
                    };
                    (dq, cost)
                };
                Ok(Some(([dq[0], dq[1], dq[2]], cost)))
            };
            if let Some((dq, c)) = step().map_err(|e| e.at(date))? {
                trade = dq;
                cost = c;
                rebalanced = true;
            }
        }
        total += cost;
        report.dates.push(date);
        report.trades.push(trade);
        report.lambdas.push(diag(&now.lambda));
        report.costs.push(cost);
        report.cumulative.push(total);
        report.rebalanced.push(rebalanced);
        if rebalanced {
            anchor = now;
        }
    }
    Ok(report)
}
