use alloc::vec::Vec;

use super::{GreekBundle, MarketSnapshot, OptionKind, VanillaSpec, VolUnit};
use crate::error::Result;
use crate::special::{norm_cdf, norm_pdf};

fn intrinsic(kind: OptionKind, spot: f64, strike: f64) -> f64 {
    match kind {
        OptionKind::Call => (spot - strike).max(0.0),
        OptionKind::Put => (strike - spot).max(0.0),
    }
}

/// Garman–Kohlhagen price. Non-positive expiries return intrinsic value.
pub fn bs_price(kind: OptionKind, mkt: &MarketSnapshot, strike: f64, expiry: f64) -> f64 {
    if expiry <= 0.0 {
        return intrinsic(kind, mkt.spot, strike);
    }
    let sd = mkt.vol * libm::sqrt(expiry);
    let d1 = (libm::log(mkt.spot / strike) + (mkt.r_d - mkt.r_f) * expiry) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let df_f = libm::exp(-mkt.r_f * expiry);
    let df_d = libm::exp(-mkt.r_d * expiry);
    match kind {
        OptionKind::Call => mkt.spot * df_f * norm_cdf(d1) - strike * df_d * norm_cdf(d2),
        OptionKind::Put => strike * df_d * norm_cdf(-d2) - mkt.spot * df_f * norm_cdf(-d1),
    }
}

/// Price and analytic Greeks of a vanilla option.
///
/// Vega and Vanna are per vol unit, Volga per vol unit squared.
pub fn bs_greeks(spec: &VanillaSpec, mkt: &MarketSnapshot, unit: VolUnit) -> Result<GreekBundle> {
    let (s, k, t, v) = (mkt.spot, spec.strike, spec.expiry, mkt.vol);
    if t <= 0.0 {
        let itm = match spec.kind {
            OptionKind::Call => s > k,
            OptionKind::Put => s < k,
        };
        let delta = match (spec.kind, itm) {
            (OptionKind::Call, true) => 1.0,
            (OptionKind::Put, true) => -1.0,
            _ => 0.0,
        };
        let mut g = GreekBundle::zero(unit);
        g.price = intrinsic(spec.kind, s, k);
        g.delta = delta;
        g.degenerate = true;
        return Ok(g);
    }
    let sqrt_t = libm::sqrt(t);
    let sd = v * sqrt_t;
    let d1 = (libm::log(s / k) + (mkt.r_d - mkt.r_f) * t) / sd + 0.5 * sd;
    let d2 = d1 - sd;
    let df_f = libm::exp(-mkt.r_f * t);
    let n1 = norm_pdf(d1);
    let delta = match spec.kind {
        OptionKind::Call => df_f * norm_cdf(d1),
        OptionKind::Put => -df_f * norm_cdf(-d1),
    };
    let vega = s * df_f * n1 * sqrt_t;
    let per = unit.per_decimal();
    Ok(GreekBundle {
        price: bs_price(spec.kind, mkt, k, t),
        delta,
        vega: vega / per,
        gamma: df_f * n1 / (s * sd),
        vanna: -df_f * n1 * d2 / v / per,
        volga: vega * d1 * d2 / v / (per * per),
        extra: Vec::new(),
        degenerate: false,
        vol_unit: unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::{fd_greeks, FdBumps};
    use proptest::prelude::*;

    fn mkt() -> MarketSnapshot {
        MarketSnapshot::new(1.08, 0.09, 0.03, 0.015).unwrap()
    }

    #[test]
    fn put_call_parity() {
        let m = mkt();
        for &k in &[0.8, 1.0, 1.08, 1.3] {
            let t = 0.75;
            let c = bs_price(OptionKind::Call, &m, k, t);
            let p = bs_price(OptionKind::Put, &m, k, t);
            let rhs = m.spot * libm::exp(-m.r_f * t) - k * libm::exp(-m.r_d * t);
            assert!((c - p - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_itm_call_limit() {
        let m = mkt();
        let g = bs_greeks(&VanillaSpec::new(OptionKind::Call, 1e-6, 1.0).unwrap(), &m, VolUnit::Points).unwrap();
        assert!((g.delta - libm::exp(-m.r_f)).abs() < 1e-12);
        assert!(g.gamma.abs() < 1e-12);
    }

    #[test]
    fn expired_option_is_degenerate() {
        let g = bs_greeks(&VanillaSpec::new(OptionKind::Call, 1.0, 0.0).unwrap(), &mkt(), VolUnit::Points).unwrap();
        assert!(g.degenerate);
        assert!((g.price - 0.08).abs() < 1e-15);
        assert_eq!((g.gamma, g.vanna, g.volga), (0.0, 0.0, 0.0));
    }

    #[test]
    fn greeks_match_finite_differences() {
        let m = mkt();
        for unit in [VolUnit::Points, VolUnit::Decimal] {
            for kind in [OptionKind::Call, OptionKind::Put] {
                for &k in &[0.95, 1.08, 1.2] {
                    let spec = VanillaSpec::new(kind, k, 0.5).unwrap();
                    let a = bs_greeks(&spec, &m, unit).unwrap();
                    let f = |s: f64, v: f64| bs_price(kind, &MarketSnapshot { spot: s, vol: v, ..m }, k, 0.5);
                    // Richardson-extrapolated central differences
                    let coarse = fd_greeks(f, &m, unit, &FdBumps { spot_rel: 1e-3, vol_points: 0.1 }).unwrap();
                    let fine = fd_greeks(f, &m, unit, &FdBumps { spot_rel: 5e-4, vol_points: 0.05 }).unwrap();
                    let n = coarse.scaled(-1.0 / 3.0).add(&fine.scaled(4.0 / 3.0));
                    for (x, y) in [(a.delta, n.delta), (a.vega, n.vega), (a.gamma, n.gamma), (a.vanna, n.vanna), (a.volga, n.volga)] {
                        assert!((x - y).abs() <= 1e-6 * x.abs().max(1e-3 * a.vega.abs().max(1e-12)), "{unit:?} {kind:?} {k} {x} vs {y}");
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneity_in_spot_and_strike(c in 0.2f64..5.0, k in 0.7f64..1.4, t in 0.05f64..2.0) {
            let m = mkt();
            let scaled = MarketSnapshot { spot: c * m.spot, ..m };
            for kind in [OptionKind::Call, OptionKind::Put] {
                let p1 = bs_price(kind, &m, k, t);
                let p2 = bs_price(kind, &scaled, c * k, t);
                prop_assert!((p2 - c * p1).abs() < 1e-12 * (1.0 + c));
            }
        }
    }
}
