//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! before asserting, so `cargo test --test acceptance -- --nocapture` gives
//! a compact summary.

use geogreeks::synth::{date_grid, synthesize_series, Calendar, SynthModel};
use geogreeks_core::backtest::{
    run_cost_backtest, run_pnl_backtest, CostConfig, Date, HedgeUniverse, PnlConfig,
};
use geogreeks_core::book::{incremental_liquidity_charge, portfolio_cost, DealHedge};
use geogreeks_core::calibration::{adjusted_hessians, calibrate_connection, CalibrationInstrument, CalibrationOptions};
use geogreeks_core::geometry::{
    covariant_hessian, predictor_invariance_residual, transform_connection, transform_gradient,
    transform_ordinary_hessian, Chart, ChartMapAtPoint, Connection, Gradient, QuadraticForm, StatePoint, TangentMove,
};
use geogreeks_core::linalg::{Matrix, Vector};
use geogreeks_core::liquidity::{
    build_hedge_response, closed_form_penalty, equal_cost_split, execution_energy, half_spread_from_vol_width,
    lambda_from_clip_spread, lambda_from_width_clip, least_cost_trade, levi_civita, pullback_penalty,
    trigger_distance, ExposureSpec, HedgeInstrumentSpec, ImpactMatrix, WidthQuote,
};
use geogreeks_core::pricing::{
    bs_greeks, bs_price, reiner_rubinstein_uic, BarrierSpec, MarketSnapshot, OptionKind, VanillaSpec, VolUnit,
};
use geogreeks_core::reconstruction::{
    metric_pde_residual, metrizability_verdict, reconstruct_metric, GridField, GridSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sym2(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Matrix {
    let (a, b, c) = (r.random_range(lo..hi), r.random_range(lo..hi), r.random_range(lo..hi));
    Matrix::from_row_slice(2, 2, &[a, b, b, c])
}

fn spd(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + Matrix::identity(n, n) * 0.5
}

#[test]
fn impact_calibration_from_quoted_widths() {
    let clip = 1e7;
    // quote vega per unit notional: 50K and 120K vega per vol point on the clip
    let straddle = lambda_from_width_clip(half_spread_from_vol_width(0.05, 5e4 / clip).unwrap(), clip).unwrap();
    let call25 = lambda_from_width_clip(half_spread_from_vol_width(0.1, 1.2e5 / clip).unwrap(), clip).unwrap();
    // same quantities from the half-spread on the whole clip
    let straddle_clip = lambda_from_clip_spread(0.05 * 5e4, clip).unwrap();
    let call25_clip = lambda_from_clip_spread(0.1 * 1.2e5, clip).unwrap();
    let errs = [
        rel(straddle, 5.0e-11),
        rel(call25, 2.4e-10),
        rel(straddle_clip, 5.0e-11),
        rel(call25_clip, 2.4e-10),
    ];
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    verdict(
        "impact calibration",
        worst < 0.01,
        format!("lambda_straddle={straddle:e} lambda_call25={call25:e} max rel err {worst:e}"),
    );
}

#[test]
fn calibration_round_trip() {
    let chart = Chart::spot_vol("vol-point");
    let mut r = rng(1);
    let mut worst = 0.0_f64;
    let mut worst_zero = 0.0_f64;
    let mut sets = 0;
    while sets < 100 {
        let g1: [f64; 2] = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let g2: [f64; 2] = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let det = g1[0] * g2[1] - g1[1] * g2[0];
        if det.abs() < 0.1 {
            continue;
        }
        sets += 1;
        let (w1, w2) = (r.random_range(0.5..2.0), r.random_range(0.5..2.0));
        let (b1, t1) = (sym2(&mut r, -3.0, 3.0), sym2(&mut r, -3.0, 3.0));
        let (b2, t2) = (sym2(&mut r, -3.0, 3.0), sym2(&mut r, -3.0, 3.0));
        let inst = |g: [f64; 2], base: Matrix, target: Matrix, w: f64| {
            CalibrationInstrument::new(
                Gradient::new(&chart, &g).unwrap(),
                QuadraticForm::hessian(&chart, base).unwrap(),
                QuadraticForm::hessian(&chart, target).unwrap(),
                w,
            )
            .unwrap()
        };
        let list = [inst(g1, b1.clone(), t1.clone(), w1), inst(g2, b2.clone(), t2.clone(), w2)];
        let fit = calibrate_connection(&list, &CalibrationOptions::default()).unwrap();
        for (h, t) in adjusted_hessians(&list, &fit.connection).unwrap().iter().zip([&t1, &t2]) {
            for k in 0..4 {
                let scale = t[k].abs().max(1e-3);
                worst = worst.max((h.matrix()[k] - t[k]).abs() / scale);
            }
        }
        let same = [inst(g1, b1.clone(), b1, w1), inst(g2, b2.clone(), b2, w2)];
        let fit = calibrate_connection(&same, &CalibrationOptions::default()).unwrap();
        worst_zero = worst_zero.max(fit.connection.max_abs());
    }
    verdict(
        "calibration round trip",
        worst < 1e-8 && worst_zero < 1e-10,
        format!("100 sets, max rel mismatch {worst:e}, max |C| with target=baseline {worst_zero:e}"),
    );
}

#[test]
fn chart_invariance_forward_to_log_forward() {
    let fc = Chart::forward_vol("vol-point");
    let zc = Chart::log_forward_vol("vol-point");
    let mut r = rng(2);
    let (mut inv, mut id_c, mut id_h) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let f = r.random_range(0.5..3.0);
        let grad = Gradient::new(&fc, &[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).unwrap();
        let hess = QuadraticForm::hessian(&fc, sym2(&mut r, -2.0, 2.0)).unwrap();
        let coeffs: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
        let conn = Connection::from_fn(&fc, |k, i, j| coeffs[4 * k + 2 * i + j]).unwrap();
        let mv = TangentMove::new(&fc, &[r.random_range(-0.2..0.2), r.random_range(-1.0..1.0)]).unwrap();
        let map = ChartMapAtPoint::forward_to_log_forward(&fc, &zc, 0, f).unwrap();
        inv = inv.max(predictor_invariance_residual(&grad, &hess, &conn, &mv, &map).unwrap());

        let cz = transform_connection(&conn, &map).unwrap();
        id_c = id_c.max((cz.get(0, 0, 0) - (f * conn.get(0, 0, 0) + 1.0)).abs());

        let adj_f = covariant_hessian(&hess, &conn, &grad).unwrap();
        let adj_z = covariant_hessian(
            &transform_ordinary_hessian(&hess, &grad, &map).unwrap(),
            &cz,
            &transform_gradient(&grad, &map).unwrap(),
        )
        .unwrap();
        let expected = f * f * adj_f.matrix()[(0, 0)];
        id_h = id_h.max((adj_z.matrix()[(0, 0)] - expected).abs() / expected.abs().max(1.0));
    }
    verdict(
        "chart invariance",
        inv < 1e-10 && id_c < 1e-12 && id_h < 1e-12,
        format!("100 states, predictor residual {inv:e}, connection identity {id_c:e}, hessian identity {id_h:e}"),
    );
}

#[test]
fn equal_split_minimizes_execution_energy() {
    let chart = Chart::spot_vol("vol-point");
    let mut r = rng(3);
    let g = QuadraticForm::penalty(&chart, spd(&mut r, 2)).unwrap();
    let dx = TangentMove::new(&chart, &[0.3, -1.2]).unwrap();
    let n = 8;
    let (steps, energy) = equal_cost_split(&dx, &g, n).unwrap();
    let gm = g.matrix();
    let d = dx.delta();
    let oracle = d.dot(&(gm * d)) / (2.0 * n as f64);
    let split_err = (energy - oracle).abs();
    let via_steps: f64 = steps.iter().map(|s| 0.5 * s.delta().dot(&(gm * s.delta()))).sum();
    let path_err = (via_steps - oracle).abs();

    // perturbations of the equal split that keep the total displacement,
    // at scales from round-off to the size of the steps themselves
    let mut worst_gap = f64::INFINITY;
    for t in 0..10_000 {
        let scale = 10f64.powf(-12.0 + 12.0 * (t as f64 / 10_000.0));
        let mut eps: Vec<Vector> = (0..n - 1)
            .map(|_| Vector::from_column_slice(&[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]) * scale)
            .collect();
        eps.push(-eps.iter().fold(Vector::zeros(2), |a, p| a + p));
        let e: f64 = eps
            .iter()
            .map(|p| {
                let s = d / n as f64 + p;
                0.5 * s.dot(&(gm * &s))
            })
            .sum();
        worst_gap = worst_gap.min(e - energy);
    }
    verdict(
        "equal-cost split",
        split_err < 1e-12 && path_err < 1e-12 && worst_gap >= -1e-12,
        format!("energy {energy:e}, oracle err {split_err:e}, min brute-force excess {worst_gap:e} over 1e4 splits"),
    );
}

/// Christoffel symbols of the second kind from first principles.
fn christoffel(g: &Matrix, dg: &[Matrix]) -> [[[f64; 2]; 2]; 2] {
    let gi = g.clone().try_inverse().unwrap();
    let mut c = [[[0.0; 2]; 2]; 2];
    for (k, ck) in c.iter_mut().enumerate() {
        for i in 0..2 {
            for j in 0..2 {
                ck[i][j] = (0..2)
                    .map(|l| 0.5 * gi[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
                    .sum();
            }
        }
    }
    c
}

#[test]
fn levi_civita_and_scale_laws() {
    let chart = Chart::spot_vol("vol-point");
    let mut r = rng(4);
    let (mut flat, mut oracle, mut coeff, mut hess, mut energy) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let gm = spd(&mut r, 2);
        let g = QuadraticForm::penalty(&chart, gm.clone()).unwrap();
        flat = flat.max(levi_civita(&g, &[Matrix::zeros(2, 2), Matrix::zeros(2, 2)]).unwrap().max_abs());

        let dg = [sym2(&mut r, -1.0, 1.0), sym2(&mut r, -1.0, 1.0)];
        let c = levi_civita(&g, &dg).unwrap();
        let o = christoffel(&gm, &dg);
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    oracle = oracle.max((c.get(k, i, j) - o[k][i][j]).abs());
                }
            }
        }

        let alpha: f64 = r.random_range(0.01..100.0);
        let ga = QuadraticForm::penalty(&chart, &gm * alpha).unwrap();
        let ca = levi_civita(&ga, &[&dg[0] * alpha, &dg[1] * alpha]).unwrap();
        coeff = coeff.max(c.max_abs_diff(&ca));

        let grad = Gradient::new(&chart, &[r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).unwrap();
        let h = QuadraticForm::hessian(&chart, sym2(&mut r, -2.0, 2.0)).unwrap();
        let h1 = covariant_hessian(&h, &c, &grad).unwrap();
        let h2 = covariant_hessian(&h, &ca, &grad).unwrap();
        hess = hess.max((h1.matrix() - h2.matrix()).amax());

        let x0 = StatePoint::new(&chart, &[1.0, 9.0]).unwrap();
        let x1 = StatePoint::new(&chart, &[1.0 + r.random_range(-0.1..0.1), 9.0 + r.random_range(-1.0..1.0)]).unwrap();
        let x2 = StatePoint::new(&chart, &[1.05, 9.5]).unwrap();
        let dx = x0.displacement_to(&x2).unwrap();
        let pairs = [
            (trigger_distance(&x1, &x0, &g).unwrap(), trigger_distance(&x1, &x0, &ga).unwrap()),
            (equal_cost_split(&dx, &g, 5).unwrap().1, equal_cost_split(&dx, &ga, 5).unwrap().1),
            (
                execution_energy(&[x0.clone(), x1.clone(), x2.clone()], &[g.clone(), g.clone()]).unwrap(),
                execution_energy(&[x0, x1, x2], &[ga.clone(), ga.clone()]).unwrap(),
            ),
        ];
        for (a, b) in pairs {
            energy = energy.max(rel(b, alpha * a));
        }
    }
    verdict(
        "levi-civita and scale laws",
        flat < 1e-12 && oracle < 1e-12 && coeff < 1e-10 && hess < 1e-10 && energy < 1e-14,
        format!(
            "constant metric {flat:e}, vs christoffel {oracle:e}, scaled coeffs {coeff:e}, scaled hessians {hess:e}, energy scaling rel {energy:e}"
        ),
    );
}

/// Least-cost trade from the full KKT system `[Λ Bᵀ; B 0][δq; μ] = [0; c]`.
fn kkt_oracle(lambda: &Matrix, b: &Matrix, c: &Vector) -> Vector {
    let (m, n) = (lambda.nrows(), b.nrows());
    let mut k = Matrix::zeros(m + n, m + n);
    k.view_mut((0, 0), (m, m)).copy_from(lambda);
    k.view_mut((0, m), (m, n)).copy_from(&b.transpose());
    k.view_mut((m, 0), (n, m)).copy_from(b);
    let mut rhs = Vector::zeros(m + n);
    rhs.rows_mut(m, n).copy_from(c);
    k.lu().solve(&rhs).unwrap().rows(0, m).into_owned()
}

#[test]
fn least_cost_hedge() {
    let chart = Chart::spot_vol("vol-point");
    let mut r = rng(5);
    let (mut constraint, mut oracle, mut closed, mut rescale) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..200 {
        let lm = spd(&mut r, 3) * 1e-10;
        let lambda = ImpactMatrix::new(lm.clone()).unwrap();
        let b = Matrix::from_fn(2, 3, |_, _| r.random_range(-1.0..1.0));
        let c = Vector::from_column_slice(&[r.random_range(-1e6..1e6), r.random_range(-1e6..1e6)]);
        let dq = least_cost_trade(&lambda, &b, &c).unwrap();
        constraint = constraint.max((&b * &dq - &c).norm() / c.norm());
        let o = kkt_oracle(&(&lm * 1e10), &b, &c);
        oracle = oracle.max((&dq - &o).amax() / o.amax());

        let j_e = Matrix::from_fn(2, 2, |_, _| r.random_range(-1e5..1e5));
        let e = ExposureSpec::new(&chart, b.clone(), j_e).unwrap();
        let resp = build_hedge_response(&lambda, &e).unwrap();
        let pull = pullback_penalty(&resp, &lambda).unwrap();
        let cf = closed_form_penalty(&lambda, &e).unwrap();
        closed = closed.max((pull.matrix() - cf.matrix()).amax() / cf.matrix().amax());

        let k: f64 = r.random_range(0.1..10.0);
        let scaled = build_hedge_response(&lambda.scaled(k).unwrap(), &e).unwrap();
        rescale = rescale.max((&scaled.m - &resp.m).amax() / resp.m.amax());
    }
    verdict(
        "least-cost hedge",
        constraint <= 1e-10 && oracle < 1e-9 && closed < 1e-10 && rescale < 1e-12,
        format!(
            "constraint {constraint:e}, vs KKT oracle {oracle:e}, closed-form penalty {closed:e}, M under rescaling {rescale:e}"
        ),
    );
}

#[test]
fn book_netting() {
    let mut r = rng(6);
    let (mut decomp, mut incr) = (0.0_f64, 0.0_f64);
    for _ in 0..200 {
        let lm = spd(&mut r, 3) * 1e-10;
        let lambda = ImpactMatrix::new(lm.clone()).unwrap();
        let n = r.random_range(1..=20);
        let deals: Vec<DealHedge> = (0..n)
            .map(|i| {
                let q: Vec<f64> = (0..3).map(|_| r.random_range(-1e6..1e6)).collect();
                DealHedge::new(&format!("d{i}"), r.random_range(-2.0..2.0), &q).unwrap()
            })
            .collect();
        let rep = portfolio_cost(&deals, &lambda).unwrap();
        let scaled: Vec<Vector> = deals.iter().map(|d| &d.trade * d.weight).collect();
        let net = scaled.iter().fold(Vector::zeros(3), |a, q| a + q);
        let total = 0.5 * net.dot(&(&lm * &net));
        let mut sum = 0.0;
        let mut scale = total.abs();
        for a in 0..n {
            let own = 0.5 * scaled[a].dot(&(&lm * &scaled[a]));
            sum += own;
            scale = scale.max(own.abs());
            for b in a + 1..n {
                let cross = scaled[a].dot(&(&lm * &scaled[b]));
                sum += cross;
                scale = scale.max(cross.abs());
            }
        }
        let own: f64 = rep.own.iter().map(|(_, v)| v).sum();
        let cross: f64 = rep.cross.iter().map(|(_, _, v)| v).sum();
        decomp = decomp
            .max((rep.total - total).abs() / scale)
            .max((total - sum).abs() / scale)
            .max((rep.total - own - cross).abs() / scale);

        let d0 = Vector::from_fn(3, |_, _| r.random_range(-1e6..1e6));
        let kappa = |q: &Vector| 0.5 * q.dot(&(&lm * q));
        let charge = incremental_liquidity_charge(&net, &d0, &lambda).unwrap();
        let expected = kappa(&(&net + &d0)) - kappa(&net);
        incr = incr.max((charge - expected).abs() / kappa(&net).max(kappa(&d0)));
    }
    let q = [3e6, -1.5e5, 2e5];
    let neg: Vec<f64> = q.iter().map(|v| -v).collect();
    let offset = portfolio_cost(
        &[DealHedge::new("a", 1.0, &q).unwrap(), DealHedge::new("b", 1.0, &neg).unwrap()],
        &ImpactMatrix::diagonal(&[1e-12, 5e-11, 2.4e-10]).unwrap(),
    )
    .unwrap()
    .total;
    verdict(
        "book netting",
        decomp < 1e-12 && offset == 0.0 && incr < 1e-12,
        format!("decomposition rel {decomp:e}, offset book cost {offset:e}, incremental charge rel {incr:e}"),
    );
}

/// Up-and-in call by Monte Carlo on the terminal spot, weighting paths that
/// end below the barrier by the Brownian-bridge crossing probability.
fn uic_monte_carlo(spec: &BarrierSpec, mkt: &MarketSnapshot, paths: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (s0, sig, t) = (mkt.spot, mkt.vol, spec.expiry);
    let drift = (mkt.r_d - mkt.r_f - 0.5 * sig * sig) * t;
    let sd = sig * t.sqrt();
    let disc = (-mkt.r_d * t).exp();
    let lb = (spec.barrier / s0).ln();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..paths {
        let z: f64 = StandardNormal.sample(&mut r);
        let st = s0 * (drift + sd * z).exp();
        let payoff = (st - spec.strike).max(0.0);
        let hit = if st >= spec.barrier {
            1.0
        } else {
            (-2.0 * lb * (spec.barrier / st).ln() / (sig * sig * t)).exp()
        };
        let v = disc * payoff * hit;
        sum += v;
        sq += v * v;
    }
    let n = paths as f64;
    let mean = sum / n;
    (mean, ((sq / n - mean * mean) / (n - 1.0)).sqrt())
}

/// Richardson-extrapolated central differences of the Black–Scholes price.
fn fd_greeks(kind: OptionKind, mkt: &MarketSnapshot, k: f64, t: f64) -> [f64; 5] {
    let p = |s: f64, v: f64| bs_price(kind, &MarketSnapshot { spot: s, vol: v, ..*mkt }, k, t);
    let (s, v) = (mkt.spot, mkt.vol);
    let scheme = |hs: f64, hv: f64| {
        [
            (p(s + hs, v) - p(s - hs, v)) / (2.0 * hs),
            (p(s, v + hv) - p(s, v - hv)) / (2.0 * hv),
            (p(s + hs, v) - 2.0 * p(s, v) + p(s - hs, v)) / (hs * hs),
            (p(s + hs, v + hv) - p(s + hs, v - hv) - p(s - hs, v + hv) + p(s - hs, v - hv)) / (4.0 * hs * hv),
            (p(s, v + hv) - 2.0 * p(s, v) + p(s, v - hv)) / (hv * hv),
        ]
    };
    let hs = 0.01 * s * v * t.sqrt();
    let hv = 0.01 * v;
    let coarse = scheme(hs, hv);
    let fine = scheme(hs / 2.0, hv / 2.0);
    std::array::from_fn(|i| (4.0 * fine[i] - coarse[i]) / 3.0)
}

#[test]
fn barrier_and_vanilla_pricing() {
    let sets = [
        (1.0, 1.0, 1.1, 1.0, 0.10, 0.02, 0.01),
        (1.04, 1.05, 1.15, 1.0, 0.09, 0.03, 0.025),
        (100.0, 90.0, 120.0, 0.5, 0.25, 0.05, 0.0),
        (1.0, 1.2, 1.1, 2.0, 0.15, 0.01, 0.02),
        (1.3, 1.25, 1.5, 0.25, 0.30, 0.0, 0.01),
    ];
    let mut worst_se = 0.0_f64;
    for (i, &(s, k, b, t, v, rd, rf)) in sets.iter().enumerate() {
        let mkt = MarketSnapshot::new(s, v, rd, rf).unwrap();
        let spec = BarrierSpec::new(k, b, t).unwrap();
        let (mc, se) = uic_monte_carlo(&spec, &mkt, 1_000_000, 100 + i as u64);
        worst_se = worst_se.max((reiner_rubinstein_uic(&spec, &mkt) - mc).abs() / se);
    }

    let mut degenerate = 0.0_f64;
    for &(s, k, _, t, v, rd, rf) in &sets {
        let mkt = MarketSnapshot::new(s, v, rd, rf).unwrap();
        for b in [s, 0.9 * s, 0.5 * s] {
            let uic = reiner_rubinstein_uic(&BarrierSpec::new(k, b, t).unwrap(), &mkt);
            degenerate = degenerate.max((uic - bs_price(OptionKind::Call, &mkt, k, t)).abs());
        }
    }

    let mut greeks = 0.0_f64;
    for &(s, kr, t, v, rd, rf) in &[
        (1.0, 0.9, 1.0, 0.1, 0.02, 0.01),
        (1.0, 1.15, 0.5, 0.12, 0.0, 0.03),
        (100.0, 0.8, 2.0, 0.25, 0.05, 0.01),
        (1.3, 1.45, 0.25, 0.3, 0.01, 0.0),
    ] {
        let mkt = MarketSnapshot::new(s, v, rd, rf).unwrap();
        for kind in [OptionKind::Call, OptionKind::Put] {
            let spec = VanillaSpec::new(kind, kr * s, t).unwrap();
            let g = bs_greeks(&spec, &mkt, VolUnit::Decimal).unwrap();
            let fd = fd_greeks(kind, &mkt, spec.strike, t);
            for (a, b) in [g.delta, g.vega, g.gamma, g.vanna, g.volga].into_iter().zip(fd) {
                greeks = greeks.max(rel(a, b));
            }
        }
    }
    verdict(
        "pricing",
        worst_se < 3.0 && degenerate < 1e-12 && greeks < 1e-6,
        format!(
            "UIC vs 1e6-path MC max {worst_se:.2} SE over 5 sets, B<=S vs vanilla {degenerate:e}, greeks vs FD rel {greeks:e}"
        ),
    );
}

fn hedges() -> HedgeUniverse {
    let vol = |name: &str, hw: f64| {
        HedgeInstrumentSpec::new(
            name,
            "EUR",
            WidthQuote::Vol {
                half_width: hw,
                quote_vega: None,
            },
            1e7,
        )
        .unwrap()
    };
    HedgeUniverse {
        spot: HedgeInstrumentSpec::new("spot", "EUR", WidthQuote::Price { half_spread: 5e-5 }, 1e7).unwrap(),
        straddle: vol("atm-straddle", 0.05),
        call25: vol("call-25d", 0.1),
    }
}

#[test]
fn backtest_structure() {
    let start = Date::from_ymd(2024, 7, 1).unwrap();
    let dates = date_grid(start, 251, Calendar::Daily);
    let expiry = start.add_days(730);
    let model = SynthModel {
        spot: 1.04,
        vol: 0.09,
        r_d: 0.03,
        r_f: 0.025,
        ..Default::default()
    };
    let gbm = synthesize_series(2024, &model, &dates).unwrap();
    let cfg = PnlConfig::new(1.04, 1.6, expiry);
    let report = run_pnl_backtest(&gbm, &cfg).unwrap();
    let pearson = report.predictor("bs-taylor").unwrap().pearson.unwrap();
    let steps = report.len();

    let flat_model = SynthModel {
        vol_of_vol: 0.5,
        mean_reversion: 2.0,
        rr25: Some(0.0),
        bf25: Some(0.0),
        ..model.clone()
    };
    let flat = synthesize_series(2025, &flat_model, &dates).unwrap();
    let report = run_pnl_backtest(&flat, &cfg).unwrap();
    let taylor = &report.predictor("bs-taylor").unwrap().increments;
    let corrected = &report.predictor("connection-corrected").unwrap().increments;
    let flat_gap = taylor.iter().zip(corrected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let vol_model = SynthModel {
        vol_of_vol: 0.6,
        mean_reversion: 2.0,
        ..model
    };
    let series = synthesize_series(2026, &vol_model, &dates).unwrap();
    let base = CostConfig::new(1.04, 1.6, expiry, 1e7, hedges());
    let wide = CostConfig {
        hedges: hedges().with_widths_scaled(2.0).unwrap(),
        ..base.clone()
    };
    let c1 = run_cost_backtest(&series, &base).unwrap().total();
    let c2 = run_cost_backtest(&series, &wide).unwrap().total();
    verdict(
        "backtest structure",
        pearson > 0.99 && steps == 250 && flat_gap <= 1e-10 && c1 > 0.0 && c2 == 2.0 * c1,
        format!("pearson {pearson:.5} over {steps} steps, flat-smile gap {flat_gap:e}, cost ratio {}", c2 / c1),
    );
}

/// `g = diag(e^σ, 1)` with its coordinate derivatives.
fn exp_metric(x: &[f64]) -> (Matrix, [Matrix; 2]) {
    let e = x[1].exp();
    (
        Matrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0]),
        [Matrix::zeros(2, 2), Matrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 0.0])],
    )
}

#[test]
fn metric_reconstruction() {
    let chart = Chart::spot_vol("vol-point");
    let connection = |x: &[f64]| {
        let (g, dg) = exp_metric(x);
        levi_civita(&QuadraticForm::penalty(&chart, g)?, &dg)
    };
    let coarse = GridSpec::new(&chart, &[1.0, 0.0], &[0.01, 0.01], &[41, 41]).unwrap();
    let anchor_point = [1.2, 0.2];
    let run = |grid: &GridSpec| {
        let c = GridField::from_fn(grid, connection).unwrap();
        let node = grid.nearest_node(&anchor_point).unwrap();
        let anchor = QuadraticForm::penalty(&chart, exp_metric(&grid.coords(node)).0).unwrap();
        let rec = reconstruct_metric(&c, node, &anchor).unwrap();
        let res = metric_pde_residual(&rec.metrics, &c).unwrap();
        let rms = (res.iter().map(|r| r * r).sum::<f64>() / res.len() as f64).sqrt();
        (rec, rms, anchor)
    };
    let (rec, r1, anchor) = run(&coarse);
    let (_, r2, _) = run(&coarse.refined());
    let mut err = 0.0_f64;
    for n in 0..coarse.len() {
        let exact = exp_metric(&coarse.coords(n)).0;
        for k in 0..4 {
            if exact[k] != 0.0 {
                err = err.max(rel(rec.metrics.at(n)[k], exact[k]));
            } else {
                err = err.max(rec.metrics.at(n)[k].abs());
            }
        }
    }
    let order = (r1 / r2).log2();
    let v = metrizability_verdict(&coarse, &connection, &anchor_point, &anchor).unwrap();
    verdict(
        "metric reconstruction",
        err < 1e-4 && order >= 1.5 && v.metrizable,
        format!(
            "41x41 max rel err {err:e}, PDE residual {r1:e} -> {r2:e} (order {order:.2}), verdict order {:.2}",
            v.order
        ),
    );
}
