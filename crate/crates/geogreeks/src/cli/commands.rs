use std::io::Write;
use std::path::Path;

use geogreeks_core::backtest::{
    run_cost_backtest, run_pnl_backtest, CalibrationChoice, CostConfig, CostMode, DayCount, HedgeUniverse, MarketSeries,
    PnlConfig, StopFloors,
};
use geogreeks_core::book::{decomposition_residual, portfolio_cost};
use geogreeks_core::calibration::{adjusted_hessians, calibrate_connection, CalibrationInstrument, CalibrationOptions};
use geogreeks_core::geometry::{
    covariant_hessian, quadratic_predictor, transform_connection, transform_gradient, transform_move,
    transform_ordinary_hessian, Chart, ChartMapAtPoint, Connection, Gradient, QuadraticForm, TangentMove,
};
use geogreeks_core::linalg::{self, Matrix};
use geogreeks_core::liquidity::{
    build_hedge_response, closed_form_penalty, default_baseline, g_ell_derivatives_fd, levi_civita, pullback_penalty,
    regularize_penalty, ExposureSpec, FactorPenalty, HedgeInstrumentSpec, ImpactMatrix, TierRow, WidthQuote,
};
use geogreeks_core::penalties::gap_penalty;
use geogreeks_core::pricing::{
    pillar_strikes, vanna_volga_price, vv_target_hessian, GreekBundle, Instrument, MarketSnapshot, OptionKind,
    SmilePillars, VanillaSpec, VolUnit,
};
use geogreeks_core::reconstruction::{self, metrizability_verdict, GridField};

use super::print;
use crate::config::{
    matrix_from_rows, ChartName, Config, ConnectionSource, CostModeName, HedgeKind, InstrumentKind, LiquidityConfig,
};
use crate::error::{Error, Result};
use crate::formats::{load_book, load_connection_field, load_stress_moves, write_metric_field};
use crate::report::{emit_cost_report, emit_pnl_report, RunMeta};
use crate::series::{load_market_series, SeriesSchema};
use crate::synth::{date_grid, synthesize_series};

const PREMIUM: &str = "premium";

fn spot_chart(cfg: &Config) -> Chart {
    Chart::spot_vol(cfg.vol_unit().label())
}

fn bundle(out: &mut dyn Write, g: &GreekBundle) -> Result<()> {
    let v = g.vol_unit.label();
    print::line(out, "price", g.price, PREMIUM)?;
    print::line(out, "delta", g.delta, "premium/price")?;
    print::line(out, "vega", g.vega, &format!("premium/{v}"))?;
    print::line(out, "gamma", g.gamma, "premium/price^2")?;
    print::line(out, "vanna", g.vanna, &format!("premium/(price*{v})"))?;
    print::line(out, "volga", g.volga, &format!("premium/{v}^2"))?;
    if g.degenerate {
        print::text(out, "note: expired, intrinsic value only")?;
    }
    Ok(())
}

/// The configured instrument at its `expiry` in years.
fn instrument(cfg: &Config) -> Result<Instrument> {
    let ic = cfg.instrument()?;
    ic.build(ic.expiry_years()?)
}

fn has_smile(cfg: &Config) -> bool {
    cfg.market.is_some_and(|m| m.rr25.is_some() || m.bf25.is_some())
}

pub fn greeks(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let m = cfg.market()?;
    let mkt = m.snapshot()?;
    let inst = instrument(cfg)?;
    let g = inst.greeks(&mkt, cfg.vol_unit(), &cfg.fd_bumps()?)?;
    print::chart(out, &spot_chart(cfg))?;
    bundle(out, &g)?;
    if has_smile(cfg) {
        print::line(out, "vanna-volga price", vanna_volga_price(&inst, &mkt, &m.pillars()?)?, PREMIUM)?;
    }
    Ok(())
}

fn explicit_connection(chart: &Chart, c: &[Vec<Vec<f64>>]) -> Result<Connection> {
    let d = chart.dim();
    if c.len() != d || c.iter().any(|m| m.len() != d || m.iter().any(|r| r.len() != d)) {
        return Err(Error::config(format!("connection coefficients must be {d}x{d}x{d}")));
    }
    for k in 0..d {
        for i in 0..d {
            for j in 0..i {
                if c[k][i][j] != c[k][j][i] {
                    return Err(Error::config("connection coefficients must be symmetric in the lower indices"));
                }
            }
        }
    }
    Ok(Connection::from_fn(chart, |k, i, j| c[k][i][j])?)
}

fn form_from_rows(chart: &Chart, rows: &[Vec<f64>], what: &str) -> Result<QuadraticForm> {
    Ok(QuadraticForm::hessian(chart, matrix_from_rows(rows, what)?)?)
}

/// Named calibration inputs: explicit matrices, or priced instruments with
/// Vanna–Volga targets against a flat-smile baseline.
fn calibration_inputs(cfg: &Config, chart: &Chart) -> Result<Vec<(String, CalibrationInstrument)>> {
    let cc = &cfg.calibration;
    if !cc.explicit.is_empty() {
        return cc
            .explicit
            .iter()
            .enumerate()
            .map(|(n, e)| {
                let inst = CalibrationInstrument::new(
                    Gradient::new(chart, &e.gradient)?,
                    form_from_rows(chart, &e.baseline, "baseline")?,
                    form_from_rows(chart, &e.target, "target")?,
                    e.weight,
                )?;
                Ok((format!("explicit-{}", n + 1), inst))
            })
            .collect();
    }
    let m = cfg.market()?;
    let mkt = m.snapshot()?;
    let pillars = m.pillars()?;
    let flat = SmilePillars::flat(mkt.vol)?;
    let tau = cfg.instrument()?.expiry_years()?;
    let k = pillar_strikes(&pillars, &mkt, tau);
    let list = if cc.instruments.is_empty() {
        vec![
            crate::config::CalibrationInstrumentConfig {
                kind: HedgeKind::Straddle,
                strike: None,
                weight: 1.0,
            },
            crate::config::CalibrationInstrumentConfig {
                kind: HedgeKind::Call,
                strike: None,
                weight: 1.0,
            },
        ]
    } else {
        cc.instruments.clone()
    };
    let bumps = cfg.fd_bumps()?;
    list.iter()
        .map(|ci| {
            let (name, inst) = match ci.kind {
                HedgeKind::Straddle => {
                    let strike = ci.strike.unwrap_or(k[0]);
                    ("straddle", Instrument::Straddle { strike, expiry: tau })
                }
                HedgeKind::Call => (
                    "call",
                    Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, ci.strike.unwrap_or(k[1]), tau)?),
                ),
                HedgeKind::Put => (
                    "put",
                    Instrument::Vanilla(VanillaSpec::new(OptionKind::Put, ci.strike.unwrap_or(k[2]), tau)?),
                ),
            };
            let strike = match inst {
                Instrument::Straddle { strike, .. } => strike,
                Instrument::Vanilla(v) => v.strike,
                Instrument::UpInCall(b) => b.strike,
            };
            let grad = inst.greeks(&mkt, cfg.vol_unit(), &bumps)?.gradient(chart)?;
            let baseline = vv_target_hessian(&inst, &mkt, &flat, &bumps, cfg.vol_unit(), chart)?;
            let target = vv_target_hessian(&inst, &mkt, &pillars, &bumps, cfg.vol_unit(), chart)?;
            Ok((
                format!("{name}@{}", print::num(strike)),
                CalibrationInstrument::new(grad, baseline, target, ci.weight)?,
            ))
        })
        .collect()
}

fn calibrated(cfg: &Config, chart: &Chart) -> Result<(Vec<(String, CalibrationInstrument)>, geogreeks_core::calibration::CalibrationResult)> {
    let inputs = calibration_inputs(cfg, chart)?;
    let list: Vec<CalibrationInstrument> = inputs.iter().map(|(_, i)| i.clone()).collect();
    let opts = CalibrationOptions {
        eta: cfg.calibration.eta,
        ..Default::default()
    };
    let res = calibrate_connection(&list, &opts)?;
    Ok((inputs, res))
}

pub fn calibrate(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let chart = spot_chart(cfg);
    let (inputs, res) = calibrated(cfg, &chart)?;
    print::chart(out, &chart)?;
    print::line(out, "eta", cfg.calibration.eta, "1")?;
    print::line(out, "condition", res.condition, "1")?;
    print::text(out, &format!("{:<30} {:>24}", "rank", res.rank))?;
    print::connection(out, &chart, &res.connection)?;
    let l = chart.coords();
    for r in &res.residuals {
        print::line(out, &format!("residual_{}_{}", l[r.i], l[r.j]), r.residual, PREMIUM)?;
    }
    let list: Vec<CalibrationInstrument> = inputs.iter().map(|(_, i)| i.clone()).collect();
    let adjusted = adjusted_hessians(&list, &res.connection)?;
    for ((name, inst), a) in inputs.iter().zip(&adjusted) {
        print::text(out, &format!("instrument {name}"))?;
        print::form(out, &chart, "target", inst.target.matrix(), PREMIUM)?;
        print::form(out, &chart, "adjusted", a.matrix(), PREMIUM)?;
    }
    Ok(())
}

fn hedge_specs(lc: &LiquidityConfig) -> Result<Vec<HedgeInstrumentSpec>> {
    lc.hedges
        .iter()
        .map(|h| {
            let width = match (h.half_spread, h.half_width) {
                (Some(s), None) => WidthQuote::Price { half_spread: s },
                (None, Some(w)) => WidthQuote::Vol {
                    half_width: w,
                    quote_vega: h.quote_vega,
                },
                _ => {
                    return Err(Error::config(format!(
                        "hedge `{}` needs exactly one of `half_spread` and `half_width`",
                        h.name
                    )))
                }
            };
            let spec = HedgeInstrumentSpec::new(&h.name, &h.unit, width, h.clip)?;
            if h.tiers.is_empty() {
                return Ok(spec);
            }
            let rows = h
                .tiers
                .iter()
                .map(|t| TierRow {
                    breakpoint: t.breakpoint,
                    clip: t.clip,
                    width: t.width,
                    smoothing: t.smoothing,
                })
                .collect();
            Ok(spec.with_tiers(rows)?)
        })
        .collect()
}

struct LiquidityState {
    lambda: ImpactMatrix,
    exposure: ExposureSpec,
    names: Vec<String>,
    units: Vec<String>,
    derived: bool,
}

/// Impact matrix and controlled exposures at `mkt`. Without explicit `b`
/// and `j_e`, the hedges are the spot, ATM straddle and 25-delta call and
/// the controlled exposures are the book's delta and vega.
fn liquidity_state(cfg: &Config, chart: &Chart, mkt: &MarketSnapshot) -> Result<LiquidityState> {
    let lc = cfg.liquidity()?;
    let specs = hedge_specs(lc)?;
    if specs.is_empty() {
        return Err(Error::config("[liquidity] needs at least one hedge"));
    }
    let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
    let units: Vec<String> = specs
        .iter()
        .map(|s| if s.unit.is_empty() { "unit".to_string() } else { s.unit.clone() })
        .collect();
    let unit_refs: Vec<&str> = units.iter().map(String::as_str).collect();
    let (b, j_e, vegas, derived) = match (&lc.b, &lc.j_e) {
        (Some(b), Some(j)) => (matrix_from_rows(b, "b")?, matrix_from_rows(j, "j_e")?, vec![None; specs.len()], false),
        (None, None) => {
            if specs.len() != 3 {
                return Err(Error::config("derived exposures need three hedges: spot, ATM straddle, 25-delta call"));
            }
            let unit = cfg.vol_unit();
            let bumps = cfg.fd_bumps()?;
            let tau = cfg.instrument()?.expiry_years()?;
            let book = instrument(cfg)?.greeks(mkt, unit, &bumps)?.scaled(lc.notional.unwrap_or(1.0));
            let k = pillar_strikes(&cfg.market()?.pillars()?, mkt, tau);
            let straddle = Instrument::Straddle { strike: k[0], expiry: tau };
            let call = Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, k[1], tau)?);
            let gs = straddle.greeks(mkt, unit, &bumps)?;
            let gc = call.greeks(mkt, unit, &bumps)?;
            let b = Matrix::from_row_slice(2, 3, &[1.0, gs.delta, gc.delta, 0.0, gs.vega, gc.vega]);
            let j_e = Matrix::from_row_slice(2, 2, &[book.gamma, book.vanna, book.vanna, book.volga]);
            let vegas = vec![
                None,
                Some(straddle.greeks(mkt, VolUnit::Points, &bumps)?.vega),
                Some(call.greeks(mkt, VolUnit::Points, &bumps)?.vega),
            ];
            (b, j_e, vegas, true)
        }
        _ => return Err(Error::config("give both `b` and `j_e`, or neither")),
    };
    if b.ncols() != specs.len() {
        return Err(Error::config(format!("`b` has {} columns for {} hedges", b.ncols(), specs.len())));
    }
    let diag = specs
        .iter()
        .zip(&vegas)
        .map(|(s, v)| s.lambda(*v))
        .collect::<geogreeks_core::Result<Vec<f64>>>()?;
    let mut lambda = ImpactMatrix::diagonal(&diag)?.with_units(&unit_refs)?;
    if let Some(bucket) = &lc.bucket {
        lambda = lambda.with_bucket(bucket);
    }
    Ok(LiquidityState {
        lambda,
        exposure: ExposureSpec::new(chart, b, j_e)?,
        names,
        units,
        derived,
    })
}

fn liquidity_penalty(cfg: &Config, chart: &Chart, st: &LiquidityState, mkt: &MarketSnapshot) -> Result<FactorPenalty> {
    let g = pullback_penalty(&build_hedge_response(&st.lambda, &st.exposure)?, &st.lambda)?;
    let eps = cfg.tolerances.regularize;
    if eps > 0.0 {
        let g0 = default_baseline(chart, &[mkt.spot, cfg.vol_unit().from_decimal(mkt.vol)])?;
        Ok(regularize_penalty(&g, eps, &g0)?)
    } else {
        Ok(g)
    }
}

/// Levi-Civita connection of the liquidity penalty, with its derivatives by
/// central differences over the market state.
fn liquidity_connection(cfg: &Config, chart: &Chart, mkt: &MarketSnapshot, st: &LiquidityState) -> Result<Connection> {
    let g = liquidity_penalty(cfg, chart, st, mkt)?;
    if !st.derived {
        return Ok(levi_civita(g.form(), &vec![Matrix::zeros(2, 2); chart.dim()])?);
    }
    let unit = cfg.vol_unit();
    let field = |x: &[f64]| -> geogreeks_core::Result<Matrix> {
        let m = MarketSnapshot {
            spot: x[0],
            vol: unit.to_decimal(x[1]),
            ..*mkt
        };
        let st = liquidity_state(cfg, chart, &m).map_err(core_error)?;
        Ok(liquidity_penalty(cfg, chart, &st, &m).map_err(core_error)?.matrix().clone())
    };
    let bumps = cfg.fd_bumps()?;
    let x = [mkt.spot, unit.from_decimal(mkt.vol)];
    let steps = [bumps.spot_rel * mkt.spot, unit.from_decimal(bumps.vol_points / 100.0)];
    let dg = g_ell_derivatives_fd(&field, &x, &steps)?;
    Ok(levi_civita(g.form(), &dg)?)
}

fn core_error(e: Error) -> geogreeks_core::Error {
    match e {
        Error::Core(c) => c,
        other => geogreeks_core::Error::InvalidInput(other.to_string()),
    }
}

pub fn adjusted_greeks(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let chart = spot_chart(cfg);
    let m = cfg.market()?;
    let mkt = m.snapshot()?;
    let g = instrument(cfg)?.greeks(&mkt, cfg.vol_unit(), &cfg.fd_bumps()?)?;
    let cc = cfg.connection.clone().unwrap_or_default();
    let conn = match cc.source {
        ConnectionSource::Zero => Connection::zeros(&chart),
        ConnectionSource::Explicit => explicit_connection(
            &chart,
            cc.coefficients
                .as_deref()
                .ok_or_else(|| Error::config("explicit connection needs `coefficients`"))?,
        )?,
        ConnectionSource::Calibrated => calibrated(cfg, &chart)?.1.connection,
        ConnectionSource::Liquidity => {
            let st = liquidity_state(cfg, &chart, &mkt)?;
            liquidity_connection(cfg, &chart, &mkt, &st)?
        }
    };
    let grad = g.gradient(&chart)?;
    let hess = g.hessian(&chart)?;
    let adjusted = covariant_hessian(&hess, &conn, &grad)?;
    print::chart(out, &chart)?;
    print::text(out, &format!("connection source: {}", source_name(cc.source)))?;
    bundle(out, &g)?;
    print::connection(out, &chart, &conn)?;
    print::form(out, &chart, "covariant", adjusted.matrix(), PREMIUM)
}

fn source_name(s: ConnectionSource) -> &'static str {
    match s {
        ConnectionSource::Zero => "zero",
        ConnectionSource::Explicit => "explicit",
        ConnectionSource::Calibrated => "calibrated",
        ConnectionSource::Liquidity => "liquidity",
    }
}

pub fn liquidity(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let chart = spot_chart(cfg);
    let mkt = match &cfg.market {
        Some(m) => m.snapshot()?,
        None => MarketSnapshot::new(1.0, 0.1, 0.0, 0.0)?,
    };
    let st = liquidity_state(cfg, &chart, &mkt)?;
    let names: Vec<&str> = st.names.iter().map(String::as_str).collect();
    let rows: Vec<String> = if st.derived {
        vec!["delta".into(), "vega".into()]
    } else {
        (0..st.exposure.b.nrows()).map(|i| format!("E{}", i + 1)).collect()
    };
    let rows: Vec<&str> = rows.iter().map(String::as_str).collect();
    print::chart(out, &chart)?;
    for (i, n) in names.iter().enumerate() {
        print::line(
            out,
            &format!("lambda[{n}]"),
            st.lambda.matrix()[(i, i)],
            &format!("premium/{}^2", st.units[i]),
        )?;
    }
    print::matrix(out, "B", &rows, &names, &st.exposure.b, "exposure/unit")?;
    let coords: Vec<&str> = chart.coords().iter().map(String::as_str).collect();
    print::matrix(out, "J_E", &rows, &coords, &st.exposure.j_e, "exposure/coordinate")?;
    let resp = build_hedge_response(&st.lambda, &st.exposure)?;
    print::matrix(out, "M", &names, &coords, &resp.m, "unit/coordinate")?;
    let g = liquidity_penalty(cfg, &chart, &st, &mkt)?;
    print::form(out, &chart, "g", g.matrix(), PREMIUM)?;
    let closed = closed_form_penalty(&st.lambda, &st.exposure)?;
    let scale = linalg::max_abs(closed.matrix()).max(f64::MIN_POSITIVE);
    let pullback = pullback_penalty(&resp, &st.lambda)?;
    print::line(
        out,
        "closed-form mismatch",
        linalg::max_abs(&(pullback.matrix() - closed.matrix())) / scale,
        "relative",
    )?;
    match liquidity_connection(cfg, &chart, &mkt, &st) {
        Ok(conn) => print::connection(out, &chart, &conn)?,
        Err(e) => print::text(out, &format!("levi-civita: unavailable ({e})"))?,
    }
    let lc = cfg.liquidity()?;
    if let Some(p) = &lc.stress {
        let stresses = load_stress_moves(&cfg.resolve(p), &chart)?;
        let gap = gap_penalty(&stresses, g.form())?;
        print::form(out, &chart, "gap", gap.matrix(), PREMIUM)?;
    }
    if let Some(p) = &lc.book {
        let deals = load_book(&cfg.resolve(p), &names)?;
        let r = portfolio_cost(&deals, &st.lambda)?;
        print::line(out, "book cost", r.total, PREMIUM)?;
        for (id, c) in &r.own {
            print::line(out, &format!("own[{id}]"), *c, PREMIUM)?;
        }
        for (a, b, c) in &r.cross {
            print::line(out, &format!("cross[{a},{b}]"), *c, PREMIUM)?;
        }
        print::line(out, "decomposition residual", decomposition_residual(&r), PREMIUM)?;
    }
    Ok(())
}

fn chart_for(cfg: &Config, c: ChartName) -> Chart {
    let u = cfg.vol_unit().label();
    match c {
        ChartName::SpotVol => Chart::spot_vol(u),
        ChartName::ForwardVol => Chart::forward_vol(u),
        ChartName::LogforwardVol => Chart::log_forward_vol(u),
    }
}

fn rank(c: ChartName) -> i32 {
    match c {
        ChartName::SpotVol => 0,
        ChartName::ForwardVol => 1,
        ChartName::LogforwardVol => 2,
    }
}

fn chart_name(r: i32) -> ChartName {
    match r {
        0 => ChartName::SpotVol,
        1 => ChartName::ForwardVol,
        _ => ChartName::LogforwardVol,
    }
}

/// Maps from `from` to `to` through the spot → forward → log-forward chain.
fn chart_maps(cfg: &Config, from: ChartName, to: ChartName, growth: f64, forward: f64) -> Result<Vec<ChartMapAtPoint>> {
    let mut maps = Vec::new();
    let (mut r, end) = (rank(from), rank(to));
    while r != end {
        let next = if end > r { r + 1 } else { r - 1 };
        let (a, b) = (chart_for(cfg, chart_name(r)), chart_for(cfg, chart_name(next)));
        maps.push(match (r, next) {
            (0, 1) => ChartMapAtPoint::spot_to_forward(&a, &b, 0, growth)?,
            (1, 0) => ChartMapAtPoint::spot_to_forward(&b, &a, 0, growth)?.inverse(),
            (1, 2) => ChartMapAtPoint::forward_to_log_forward(&a, &b, 0, forward)?,
            _ => ChartMapAtPoint::log_forward_to_forward(&a, &b, 0, forward)?,
        });
        r = next;
    }
    Ok(maps)
}

struct Objects {
    grad: Gradient,
    hess: QuadraticForm,
    conn: Connection,
    mv: Option<TangentMove>,
}

fn push(o: &Objects, maps: &[ChartMapAtPoint]) -> Result<Objects> {
    let mut cur = Objects {
        grad: o.grad.clone(),
        hess: o.hess.clone(),
        conn: o.conn.clone(),
        mv: o.mv.clone(),
    };
    for m in maps {
        cur = Objects {
            hess: transform_ordinary_hessian(&cur.hess, &cur.grad, m)?,
            grad: transform_gradient(&cur.grad, m)?,
            conn: transform_connection(&cur.conn, m)?,
            mv: cur.mv.as_ref().map(|v| transform_move(v, m)).transpose()?,
        };
    }
    Ok(cur)
}

fn print_objects(out: &mut dyn Write, chart: &Chart, o: &Objects) -> Result<()> {
    print::chart(out, chart)?;
    print::gradient(out, chart, "V", o.grad.values(), PREMIUM)?;
    print::form(out, chart, "V", o.hess.matrix(), PREMIUM)?;
    print::connection(out, chart, &o.conn)?;
    let adj = covariant_hessian(&o.hess, &o.conn, &o.grad)?;
    print::form(out, chart, "covariant", adj.matrix(), PREMIUM)?;
    if let Some(mv) = &o.mv {
        print::line(out, "predictor", quadratic_predictor(&o.grad, &adj, mv, None)?, PREMIUM)?;
    }
    Ok(())
}

pub fn transform(cfg: &Config, out: &mut dyn Write) -> Result<()> {
    let tc = cfg
        .transform
        .as_ref()
        .ok_or_else(|| Error::config("missing [transform] section"))?;
    let m = cfg.market()?;
    let tau = match (tc.expiry, &cfg.instrument) {
        (Some(t), _) => t,
        (None, Some(i)) => i.expiry.unwrap_or(0.0),
        (None, None) => 0.0,
    };
    let growth = ((m.r_d - m.r_f) * tau).exp();
    let forward = m.spot * growth;
    let src = chart_for(cfg, tc.from);
    let dst = chart_for(cfg, tc.to);

    let (grad, hess) = match (&tc.gradient, &tc.hessian) {
        (Some(g), Some(h)) => (Gradient::new(&src, g)?, form_from_rows(&src, h, "hessian")?),
        (None, None) if tc.from == ChartName::SpotVol => {
            let g = instrument(cfg)?.greeks(&m.snapshot()?, cfg.vol_unit(), &cfg.fd_bumps()?)?;
            (g.gradient(&src)?, g.hessian(&src)?)
        }
        _ => return Err(Error::config("give both `gradient` and `hessian`, or neither with from = \"spot-vol\"")),
    };
    let conn = match &tc.connection {
        Some(c) => explicit_connection(&src, c)?,
        None => Connection::zeros(&src),
    };
    let mv = tc.tangent.as_ref().map(|v| TangentMove::new(&src, v)).transpose()?;
    let objects = Objects { grad, hess, conn, mv };

    let maps = chart_maps(cfg, tc.from, tc.to, growth, forward)?;
    let there = push(&objects, &maps)?;
    let back_maps: Vec<ChartMapAtPoint> = maps.iter().rev().map(ChartMapAtPoint::inverse).collect();
    let back = push(&there, &back_maps)?;

    let rel = |a: &Matrix, b: &Matrix| linalg::max_abs(&(a - b)) / linalg::max_abs(a).max(1.0);
    let conn_scale = objects.conn.max_abs().max(1.0);
    let residual = [
        (objects.grad.values() - back.grad.values()).amax() / objects.grad.values().amax().max(1.0),
        rel(objects.hess.matrix(), back.hess.matrix()),
        objects.conn.max_abs_diff(&back.conn) / conn_scale,
    ]
    .into_iter()
    .fold(0.0_f64, f64::max);

    print::line(out, "forward", forward, "price")?;
    print_objects(out, &src, &objects)?;
    print_objects(out, &dst, &there)?;
    print::line(out, "round-trip residual", residual, "relative")?;
    if !(residual <= cfg.tolerances.round_trip) {
        return Err(Error::config(format!(
            "round-trip residual {} exceeds tolerance {}",
            print::num(residual),
            print::num(cfg.tolerances.round_trip)
        )));
    }
    Ok(())
}

/// The configured series: a file, or a synthetic path from the seed.
pub fn load_series(cfg: &Config) -> Result<MarketSeries> {
    let sc = cfg
        .series
        .as_ref()
        .ok_or_else(|| Error::config("missing [series] section"))?;
    match (&sc.path, &sc.synthetic) {
        (Some(p), None) => {
            let delimiter = u8::try_from(sc.delimiter).map_err(|_| Error::config("delimiter must be ASCII"))?;
            let schema = SeriesSchema {
                vol_unit: sc.vol_units.into(),
                delimiter,
            };
            load_market_series(&cfg.resolve(p), &schema)
        }
        (None, Some(s)) => {
            let start = s.start.parse()?;
            synthesize_series(cfg.seed.unwrap_or(0), &s.model, &date_grid(start, s.count, s.calendar))
        }
        _ => Err(Error::config("[series] needs exactly one of `path` and `synthetic`")),
    }
}

fn barrier_terms(cfg: &Config) -> Result<(f64, f64, geogreeks_core::backtest::Date)> {
    let ic = cfg.instrument()?;
    if ic.kind != InstrumentKind::UpInCall {
        return Err(Error::config("backtests replay an up-and-in call"));
    }
    Ok((ic.strike, ic.barrier()?, ic.expiry_date()?))
}

fn meta(cfg: &Config, command: &str) -> Result<RunMeta> {
    Ok(RunMeta {
        command: command.into(),
        seed: cfg.seed,
        config: cfg.to_toml()?,
        histogram_bins: cfg.report.histogram_bins,
    })
}

pub fn backtest_pnl(cfg: &Config, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let series = load_series(cfg)?;
    let (strike, barrier, expiry) = barrier_terms(cfg)?;
    let mut pc = PnlConfig::new(strike, barrier, expiry);
    pc.day_count = DayCount {
        denominator: cfg.pnl.day_count,
    };
    pc.frequency = cfg.pnl.frequency.into();
    pc.vol_unit = cfg.vol_unit();
    pc.bumps = cfg.fd_bumps()?;
    pc.eta = cfg.calibration.eta;
    if !cfg.calibration.explicit.is_empty() {
        return Err(Error::config("backtests calibrate to priced instruments, not explicit matrices"));
    }
    if !cfg.calibration.instruments.is_empty() {
        let list = cfg
            .calibration
            .instruments
            .iter()
            .map(|ci| {
                let k = ci
                    .strike
                    .ok_or_else(|| Error::config("backtest calibration instruments need fixed strikes"))?;
                Ok(match ci.kind {
                    HedgeKind::Straddle => Instrument::Straddle { strike: k, expiry: 1.0 },
                    HedgeKind::Call => Instrument::Vanilla(VanillaSpec::new(OptionKind::Call, k, 1.0)?),
                    HedgeKind::Put => Instrument::Vanilla(VanillaSpec::new(OptionKind::Put, k, 1.0)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        pc.calibration = CalibrationChoice::Fixed(list);
    }
    let report = run_pnl_backtest(&series, &pc)?;
    let files = emit_pnl_report(&report, dir, &meta(cfg, "backtest-pnl")?)?;
    print::text(out, &format!("steps {} ({})", report.len(), report.frequency.label()))?;
    for p in &report.predictors {
        print::line(out, &format!("{} mae", p.name), p.mae, PREMIUM)?;
        print::line(out, &format!("{} rmse", p.name), p.rmse, PREMIUM)?;
        match p.pearson {
            Some(r) => print::line(out, &format!("{} pearson", p.name), r, "1")?,
            None => print::text(out, &format!("{} pearson undefined", p.name))?,
        }
    }
    for f in files {
        print::text(out, &format!("wrote {}", f.display()))?;
    }
    Ok(())
}

pub fn backtest_cost(cfg: &Config, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let series = load_series(cfg)?;
    let (strike, barrier, expiry) = barrier_terms(cfg)?;
    let specs = hedge_specs(cfg.liquidity()?)?;
    let [spot, straddle, call25]: [HedgeInstrumentSpec; 3] = specs
        .try_into()
        .map_err(|_| Error::config("the cost backtest needs three hedges: spot, ATM straddle, 25-delta call"))?;
    let hedges = HedgeUniverse { spot, straddle, call25 };
    let cs = &cfg.cost;
    let mut cc = CostConfig::new(strike, barrier, expiry, cs.notional, hedges);
    cc.day_count = DayCount {
        denominator: cs.day_count,
    };
    cc.frequency = cs.frequency.into();
    cc.vol_unit = cfg.vol_unit();
    cc.bumps = cfg.fd_bumps()?;
    cc.mode = match cs.mode {
        CostModeName::Flat => CostMode::Flat,
        CostModeName::Tiered => CostMode::Tiered,
    };
    cc.trigger = cs.trigger;
    cc.floors = match (cs.stop_delta, cs.stop_vega) {
        (Some(delta), Some(vega)) => Some(StopFloors { delta, vega }),
        (None, None) => None,
        _ => return Err(Error::config("give both `stop_delta` and `stop_vega`, or neither")),
    };
    let report = run_cost_backtest(&series, &cc)?;
    let files = emit_cost_report(&report, dir, &meta(cfg, "backtest-cost")?)?;
    print::text(out, &format!("dates {}", report.dates.len()))?;
    print::text(
        out,
        &format!("rebalances {}", report.rebalanced.iter().filter(|r| **r).count()),
    )?;
    print::line(out, "total cost", report.total(), PREMIUM)?;
    print::line(out, "initial premium", report.initial_premium, PREMIUM)?;
    if let Some(f) = report.premium_fraction() {
        print::line(out, "cost / premium", f, "1")?;
    }
    if let Some(d) = report.halted_at {
        print::text(out, &format!("halted at {d}"))?;
    }
    for f in files {
        print::text(out, &format!("wrote {}", f.display()))?;
    }
    Ok(())
}

pub fn reconstruct_metric(cfg: &Config, dir: &Path, out: &mut dyn Write) -> Result<()> {
    let rc = cfg
        .reconstruct
        .as_ref()
        .ok_or_else(|| Error::config("missing [reconstruct] section"))?;
    let (chart, field) = load_connection_field(&cfg.resolve(&rc.connections))?;
    let grid = field.grid().clone();
    let anchor = QuadraticForm::penalty(&chart, matrix_from_rows(&rc.anchor_metric, "anchor_metric")?)?;
    let node = grid.nearest_node(&rc.anchor)?;
    let rec = reconstruction::reconstruct_metric(&field, node, &anchor)?;

    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let metric_path = dir.join("metric.csv");
    write_metric_field(&metric_path, &chart, &rec.metrics)?;
    let scale = linalg::max_abs(anchor.matrix());
    let projected = rec.projected(cfg.tolerances.spd_floor, scale)?;
    let spd = GridField::new(
        grid.clone(),
        projected.values().iter().map(|f| f.matrix().clone()).collect(),
    )?;
    let spd_path = dir.join("metric_spd.csv");
    write_metric_field(&spd_path, &chart, &spd)?;

    let mut results = toml::Table::new();
    results.insert("nodes".into(), (grid.len() as i64).into());
    results.insert("anchor_node".into(), (node as i64).into());
    results.insert("residual".into(), rec.residual.into());
    results.insert("relative_residual".into(), rec.relative_residual.into());
    print::chart(out, &chart)?;
    print::line(out, "residual", rec.residual, "metric/coordinate")?;
    print::line(out, "relative residual", rec.relative_residual, "1/coordinate")?;

    if let Some(p) = &rc.refined {
        let (fine_chart, fine) = load_connection_field(&cfg.resolve(p))?;
        if fine_chart.coords() != chart.coords() || fine.grid().counts() != grid.refined().counts() {
            return Err(Error::file(p, "not the once-refined grid of the connection file"));
        }
        let lookup = |x: &[f64]| -> geogreeks_core::Result<Connection> {
            let n = fine.grid().nearest_node(x)?;
            let c = fine.at(n);
            let mut out = Connection::zeros(&chart);
            let d = chart.dim();
            for k in 0..d {
                for i in 0..d {
                    for j in i..d {
                        out.set(k, i, j, c.get(k, i, j));
                    }
                }
            }
            Ok(out)
        };
        let v = metrizability_verdict(&grid, &lookup, &rc.anchor, &anchor)?;
        print::line(out, "coarse residual", v.coarse_residual, "1/coordinate")?;
        print::line(out, "fine residual", v.fine_residual, "1/coordinate")?;
        print::line(out, "order", v.order, "1")?;
        print::text(out, &format!("metrizable {}", v.metrizable))?;
        let mut t = toml::Table::new();
        t.insert("coarse_residual".into(), v.coarse_residual.into());
        t.insert("fine_residual".into(), v.fine_residual.into());
        t.insert("order".into(), v.order.into());
        t.insert("metrizable".into(), v.metrizable.into());
        results.insert("verdict".into(), t.into());
    }

    let m = meta(cfg, "reconstruct-metric")?;
    let mut doc = toml::Table::new();
    let mut run = toml::Table::new();
    run.insert("command".into(), m.command.clone().into());
    doc.insert("run".into(), run.into());
    doc.insert("results".into(), results.into());
    let config: toml::Table = toml::from_str(&m.config).map_err(|e| Error::config(e.to_string()))?;
    doc.insert("config".into(), config.into());
    let summary = dir.join("summary.toml");
    let text = toml::to_string(&doc).map_err(|e| Error::config(e.to_string()))?;
    std::fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    for f in [metric_path, spd_path, summary] {
        print::text(out, &format!("wrote {}", f.display()))?;
    }
    Ok(())
}
