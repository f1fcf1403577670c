use geogreeks_core::backtest::{
    run_cost_backtest, run_pnl_backtest, CostConfig, CostMode, Date, Frequency, HedgeUniverse, MarketRow,
    MarketSeries, PnlConfig, StopFloors,
};
use geogreeks_core::book::wealth_step;
use geogreeks_core::linalg::{Matrix, Vector};
use geogreeks_core::liquidity::{HedgeInstrumentSpec, ImpactMatrix, TierRow, WidthQuote};
use geogreeks_core::pricing::{
    bs_greeks, pillar_strikes, BarrierSpec, FdBumps, Instrument, MarketSnapshot, OptionKind, SmilePillars,
    VanillaSpec, VolUnit,
};
use geogreeks_core::Error;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const START: i32 = 19_000;

fn row(day: i32, spot: f64, vol: f64) -> MarketRow {
    MarketRow {
        date: Date::from_days(START + day),
        spot,
        atm_vol: vol,
        r_d: 0.02,
        r_f: 0.01,
        rr25: None,
        bf25: None,
    }
}

/// GBM spot with a mean-reverting vol on consecutive calendar days.
fn gbm_series(seed: u64, steps: usize, s0: f64, vol: f64, vol_of_vol: f64, smile: Option<(f64, f64)>) -> MarketSeries {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dt = 1.0 / 365.0;
    let mut rows = Vec::with_capacity(steps + 1);
    let (mut s, mut v) = (s0, vol);
    for day in 0..=steps as i32 {
        if day > 0 {
            let h = dt;
            let z: f64 = StandardNormal.sample(&mut rng);
            let w: f64 = StandardNormal.sample(&mut rng);
            s *= ((0.02 - 0.01 - 0.5 * v * v) * h + v * h.sqrt() * z).exp();
            v = (v + 2.0 * (vol - v) * h + vol_of_vol * h.sqrt() * w).max(0.01);
        }
        let mut r = row(day, s, v);
        if let Some((rr, bf)) = smile {
            r.rr25 = Some(rr);
            r.bf25 = Some(bf);
        }
        rows.push(r);
    }
    MarketSeries::new(rows).unwrap()
}

fn expiry() -> Date {
    Date::from_days(START + 730)
}

fn hedges(spot_hs: f64, straddle_hw: f64, call_hw: f64) -> HedgeUniverse {
    HedgeUniverse {
        spot: HedgeInstrumentSpec::new("spot", "EUR", WidthQuote::Price { half_spread: spot_hs }, 1e7).unwrap(),
        straddle: HedgeInstrumentSpec::new(
            "atm-straddle",
            "EUR",
            WidthQuote::Vol {
                half_width: straddle_hw,
                quote_vega: None,
            },
            1e7,
        )
        .unwrap(),
        call25: HedgeInstrumentSpec::new(
            "call-25d",
            "EUR",
            WidthQuote::Vol {
                half_width: call_hw,
                quote_vega: None,
            },
            1e7,
        )
        .unwrap(),
    }
}

#[test]
fn flat_series_has_zero_predictions_and_pure_theta_benchmark() {
    let rows: Vec<MarketRow> = (0..6).map(|d| row(d, 1.1, 0.09)).collect();
    let series = MarketSeries::new(rows).unwrap();
    let report = run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.25, expiry())).unwrap();
    assert_eq!(report.len(), 5);
    for p in &report.predictors {
        assert!(p.increments.iter().all(|v| *v == 0.0), "{}", p.name);
        assert!(p.pearson.is_none());
    }
    assert!(report.benchmark.iter().all(|v| *v != 0.0 && *v < 0.0));
}

#[test]
fn flat_smile_connection_corrected_equals_taylor() {
    let series = gbm_series(1, 60, 1.1, 0.09, 0.3, None);
    let report = run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.3, expiry())).unwrap();
    let taylor = report.predictor("bs-taylor").unwrap();
    let corrected = report.predictor("connection-corrected").unwrap();
    for (a, b) in taylor.increments.iter().zip(&corrected.increments) {
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-12));
    }
    assert!(report.connections.iter().all(|c| c.max_abs() == 0.0));
}

#[test]
fn smile_produces_nonzero_connection() {
    let series = gbm_series(2, 20, 1.1, 0.09, 0.2, Some((0.01, 0.003)));
    let report = run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.3, expiry())).unwrap();
    assert!(report.connections.iter().all(|c| c.max_abs() > 0.0));
    let taylor = report.predictor("bs-taylor").unwrap();
    let corrected = report.predictor("connection-corrected").unwrap();
    assert!(taylor.increments.iter().zip(&corrected.increments).any(|(a, b)| a != b));
}

#[test]
fn taylor_tracks_closed_form_on_daily_gbm() {
    let series = gbm_series(7, 250, 1.0, 0.09, 0.0, None);
    let report = run_pnl_backtest(&series, &PnlConfig::new(1.0, 1.5, expiry())).unwrap();
    assert_eq!(report.len(), 250);
    let p = report.predictor("bs-taylor").unwrap().pearson.unwrap();
    assert!(p > 0.99, "pearson {p}");
}

#[test]
fn weekly_benchmark_telescopes_daily() {
    let series = gbm_series(3, 40, 1.1, 0.1, 0.2, None);
    // barrier inside the path's range so knock-in happens off the weekly grid
    let max = series.rows().iter().map(|r| r.spot).fold(0.0, f64::max);
    let mut cfg = PnlConfig::new(1.1, 0.5 * (1.1 + max), expiry());
    let daily = run_pnl_backtest(&series, &cfg).unwrap();
    cfg.frequency = Frequency::Weekly;
    let weekly = run_pnl_backtest(&series, &cfg).unwrap();
    for (k, (start, end)) in weekly.start_dates.iter().zip(&weekly.end_dates).enumerate() {
        let sum: f64 = daily
            .start_dates
            .iter()
            .zip(&daily.benchmark)
            .filter(|(d, _)| *d >= start && *d < end)
            .map(|(_, v)| v)
            .sum();
        assert!((sum - weekly.benchmark[k]).abs() < 1e-12, "{sum} vs {}", weekly.benchmark[k]);
    }
}

#[test]
fn knock_in_persists_after_spot_falls_back() {
    let rows = vec![row(0, 1.1, 0.1), row(1, 1.21, 0.1), row(2, 1.15, 0.1), row(3, 1.14, 0.1)];
    let series = MarketSeries::new(rows).unwrap();
    let report = run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.2, expiry())).unwrap();
    assert_eq!(report.knocked, vec![false, true, true]);
    // after the touch the option is the vanilla call
    let tau = |d: i32| (expiry().days() - START - d) as f64 / 365.0;
    let call = |s: f64, d: i32| {
        let m = MarketSnapshot::new(s, 0.1, 0.02, 0.01).unwrap();
        geogreeks_core::pricing::bs_price(OptionKind::Call, &m, 1.1, tau(d))
    };
    assert!((report.benchmark[2] - (call(1.14, 3) - call(1.15, 2))).abs() < 1e-14);
}

#[test]
fn pnl_rejects_short_series() {
    let series = MarketSeries::new(vec![row(0, 1.1, 0.1)]).unwrap();
    assert!(run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.2, expiry())).is_err());
}

#[test]
fn zero_widths_cost_nothing() {
    let series = gbm_series(4, 30, 1.1, 0.1, 0.2, None);
    let cfg = CostConfig::new(1.1, 1.3, expiry(), 1e7, hedges(0.0, 0.0, 0.0));
    let report = run_cost_backtest(&series, &cfg).unwrap();
    assert!(report.costs.iter().all(|c| *c == 0.0));
    assert!(report.trades.iter().skip(1).any(|t| t.iter().any(|q| *q != 0.0)));
}

/// Independent least-cost trade from the bordered KKT system.
fn kkt_oracle(lambda: &[f64; 3], b: &Matrix, c: &Vector) -> Vector {
    let mut k = Matrix::zeros(5, 5);
    for i in 0..3 {
        k[(i, i)] = lambda[i];
        for r in 0..2 {
            k[(i, 3 + r)] = b[(r, i)];
            k[(3 + r, i)] = b[(r, i)];
        }
    }
    let mut rhs = Vector::zeros(5);
    rhs[3] = c[0];
    rhs[4] = c[1];
    let sol = k.lu().solve(&rhs).unwrap();
    Vector::from_column_slice(&sol.as_slice()[..3])
}

#[test]
fn single_spot_move_cost_matches_hand_chain() {
    let expiry = expiry();
    let rows = vec![row(0, 1.1, 0.1), row(1, 1.14, 0.1)];
    let series = MarketSeries::new(rows.clone()).unwrap();
    let h = hedges(5e-5, 0.05, 0.1);
    let mut cfg = CostConfig::new(1.1, 1.3, expiry, 1e7, h.clone());
    cfg.frequency = Frequency::Daily;
    let report = run_cost_backtest(&series, &cfg).unwrap();

    let bumps = FdBumps::default();
    let unit = VolUnit::Points;
    let tau0 = (expiry.days() - START) as f64 / 365.0;
    let tau1 = tau0 - 1.0 / 365.0;
    let m0 = rows[0].snapshot().unwrap();
    let m1 = rows[1].snapshot().unwrap();
    let opt = Instrument::UpInCall(BarrierSpec::new(1.1, 1.3, tau0).unwrap());
    let g = opt.greeks(&m0, unit, &bumps).unwrap().scaled(1e7);
    let j_e = Matrix::from_row_slice(2, 2, &[g.gamma, g.vanna, g.vanna, g.volga]);
    let dx = Vector::from_column_slice(&[0.04, 0.0]);
    let c = -(j_e * dx);

    let k = pillar_strikes(&SmilePillars::flat(0.1).unwrap(), &m1, tau1);
    let call = |strike: f64, kind| bs_greeks(&VanillaSpec::new(kind, strike, tau1).unwrap(), &m1, unit).unwrap();
    let straddle = call(k[0], OptionKind::Call).add(&call(k[0], OptionKind::Put));
    let c25 = call(k[1], OptionKind::Call);
    let b = Matrix::from_row_slice(2, 3, &[1.0, straddle.delta, c25.delta, 0.0, straddle.vega, c25.vega]);
    let lambda = [
        2.0 * 5e-5 / 1e7,
        2.0 * 0.05 * straddle.vega / 1e7,
        2.0 * 0.1 * c25.vega / 1e7,
    ];
    let dq = kkt_oracle(&lambda, &b, &c);
    let cost: f64 = 0.5 * (0..3).map(|i| lambda[i] * dq[i] * dq[i]).sum::<f64>();
    for i in 0..3 {
        assert!((report.trades[1][i] - dq[i]).abs() <= 1e-8 * dq.amax());
        assert!((report.lambdas[1][i] - lambda[i]).abs() <= 1e-12 * lambda[i]);
    }
    assert!((report.costs[1] - cost).abs() <= 1e-8 * cost);
    assert_eq!(report.costs[0], 0.0);
}

#[test]
fn doubling_widths_doubles_costs_exactly() {
    let series = gbm_series(5, 80, 1.1, 0.1, 0.3, Some((0.008, 0.002)));
    let h = hedges(5e-5, 0.05, 0.1);
    let cfg = CostConfig::new(1.1, 1.35, expiry(), 1e7, h.clone());
    let one = run_cost_backtest(&series, &cfg).unwrap();
    let two = run_cost_backtest(
        &series,
        &CostConfig {
            hedges: h.with_widths_scaled(2.0).unwrap(),
            ..cfg
        },
    )
    .unwrap();
    assert!(one.total() > 0.0);
    for (a, b) in one.costs.iter().zip(&two.costs) {
        assert_eq!(2.0 * a, *b);
    }
    assert_eq!(2.0 * one.total(), two.total());
    assert_eq!(one.trades, two.trades);
}

#[test]
fn cumulative_cost_matches_wealth_recursion() {
    let series = gbm_series(6, 60, 1.1, 0.1, 0.3, None);
    let cfg = CostConfig::new(1.1, 1.35, expiry(), 1e7, hedges(5e-5, 0.05, 0.1));
    let report = run_cost_backtest(&series, &cfg).unwrap();
    for (k, c) in report.cumulative.iter().enumerate() {
        let prefix: f64 = report.costs[..=k].iter().sum();
        assert!((c - prefix).abs() <= 1e-12 * prefix.max(1e-300));
    }
    // fixed prices isolate the execution-cost term of the wealth recursion
    let prices = Vector::from_column_slice(&[1.0, 1.0, 1.0]);
    let mut q = Vector::zeros(3);
    let mut wealth = 0.0;
    for (t, l) in report.trades.iter().zip(&report.lambdas) {
        let next = &q + Vector::from_column_slice(t);
        wealth = wealth_step(wealth, &q, &prices, &prices, &next, &ImpactMatrix::diagonal(l).unwrap()).unwrap();
        q = next;
    }
    assert!((-wealth - report.total()).abs() <= 1e-10 * report.total());
    assert!(report.premium_fraction().unwrap() > 0.0);
}

#[test]
fn stop_floors_halt_rebalancing() {
    let series = gbm_series(8, 30, 1.1, 0.1, 0.2, None);
    let mut cfg = CostConfig::new(1.1, 1.35, expiry(), 1e7, hedges(5e-5, 0.05, 0.1));
    cfg.floors = Some(StopFloors {
        delta: f64::INFINITY,
        vega: f64::INFINITY,
    });
    let report = run_cost_backtest(&series, &cfg).unwrap();
    assert_eq!(report.halted_at, Some(report.dates[1]));
    assert_eq!(report.total(), 0.0);
    assert!(!report.rebalanced.iter().any(|r| *r));
}

#[test]
fn trigger_gates_rebalancing() {
    let series = gbm_series(9, 60, 1.1, 0.1, 0.2, None);
    let mut cfg = CostConfig::new(1.1, 1.35, expiry(), 1e7, hedges(5e-5, 0.05, 0.1));
    cfg.frequency = Frequency::Daily;
    let every = run_cost_backtest(&series, &cfg).unwrap();
    let median = {
        let mut c: Vec<f64> = every.costs[1..].to_vec();
        c.sort_by(f64::total_cmp);
        c[c.len() / 2]
    };
    cfg.trigger = Some(median);
    let gated = run_cost_backtest(&series, &cfg).unwrap();
    let n = gated.rebalanced.iter().filter(|r| **r).count();
    assert!(n > 0 && n < every.rebalanced.iter().filter(|r| **r).count());
    cfg.trigger = Some(-1.0);
    assert!(run_cost_backtest(&series, &cfg).is_err());
}

#[test]
fn tiered_mode_charges_tier_costs() {
    let series = gbm_series(10, 20, 1.1, 0.1, 0.2, None);
    let mut h = hedges(5e-5, 0.05, 0.1);
    let tiers = |w: f64| {
        vec![
            TierRow {
                breakpoint: 1e7,
                clip: 1e7,
                width: w,
                smoothing: 1e6,
            },
            TierRow {
                breakpoint: f64::INFINITY,
                clip: 1e7,
                width: 3.0 * w,
                smoothing: 1e6,
            },
        ]
    };
    h.spot = h.spot.with_tiers(tiers(5e-5)).unwrap();
    h.straddle = h.straddle.with_tiers(tiers(0.05)).unwrap();
    h.call25 = h.call25.with_tiers(tiers(0.1)).unwrap();
    let mut cfg = CostConfig::new(1.1, 1.35, expiry(), 1e7, h);
    cfg.mode = CostMode::Flat;
    let flat = run_cost_backtest(&series, &cfg).unwrap();
    cfg.mode = CostMode::Tiered;
    let tiered = run_cost_backtest(&series, &cfg).unwrap();
    assert!(tiered.total() > 0.0);
    assert!(tiered.total() != flat.total());
}

#[test]
fn pricing_failure_reports_date() {
    // put wing vol placing the 25-delta put strike on the forward
    let mut r0 = row(0, 1.1, 0.1);
    let tau = (expiry().days() - START) as f64 / 365.0;
    let put = 2.0 * geogreeks_core::special::inv_norm_cdf(0.75) / tau.sqrt();
    r0.rr25 = Some(0.0 - put + 0.1);
    r0.bf25 = Some(0.5 * (put - 0.1));
    let series = MarketSeries::new(vec![r0, row(1, 1.1, 0.1)]).unwrap();
    let err = run_pnl_backtest(&series, &PnlConfig::new(1.1, 1.3, expiry())).unwrap_err();
    assert!(matches!(err, Error::AtDate { .. }), "{err}");
}
