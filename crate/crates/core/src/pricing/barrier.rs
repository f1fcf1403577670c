use super::{bs_price, BarrierSpec, MarketSnapshot, OptionKind};
use crate::special::norm_cdf;

/// Reiner–Rubinstein price of an up-and-in call under flat volatility and
/// continuous monitoring, without rebate.
///
/// A barrier at or below spot means the option has already knocked in and
/// the vanilla call price is returned.
pub fn reiner_rubinstein_uic(spec: &BarrierSpec, mkt: &MarketSnapshot) -> f64 {
    let (s, k, h, t) = (mkt.spot, spec.strike, spec.barrier, spec.expiry);
    if h <= s {
        return bs_price(OptionKind::Call, mkt, k, t);
    }
    if t <= 0.0 {
        return 0.0;
    }
    let v = mkt.vol;
    let b = mkt.r_d - mkt.r_f;
    let sd = v * libm::sqrt(t);
    let mu = (b - 0.5 * v * v) / (v * v);
    let shift = (1.0 + mu) * sd;
    let fwd_df = s * libm::exp(-mkt.r_f * t);
    let k_df = k * libm::exp(-mkt.r_d * t);
    let hs = h / s;
    let p_s = libm::pow(hs, 2.0 * (mu + 1.0));
    let p_k = libm::pow(hs, 2.0 * mu);

    if k >= h {
        // A term with phi = 1
        let x1 = libm::log(s / k) / sd + shift;
        fwd_df * norm_cdf(x1) - k_df * norm_cdf(x1 - sd)
    } else {
        // B - C + D with phi = 1, eta = -1
        let x2 = libm::log(s / h) / sd + shift;
        let y1 = libm::log(h * h / (s * k)) / sd + shift;
        let y2 = libm::log(h / s) / sd + shift;
        let bt = fwd_df * norm_cdf(x2) - k_df * norm_cdf(x2 - sd);
        let ct = fwd_df * p_s * norm_cdf(-y1) - k_df * p_k * norm_cdf(-y1 + sd);
        let dt = fwd_df * p_s * norm_cdf(-y2) - k_df * p_k * norm_cdf(-y2 + sd);
        bt - ct + dt
    }
}
