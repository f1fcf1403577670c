use super::{bs_greeks, bs_price, fd_greeks, FdBumps, Instrument, MarketSnapshot, OptionKind, VanillaSpec, VolUnit};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, Chart, QuadraticForm};
use crate::linalg::{self, Matrix, Vector};
use crate::special::inv_norm_cdf;

/// Market vols (decimal) of the three Vanna–Volga pillars at the
/// instrument's expiry: ATM, 25-delta call and 25-delta put.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmilePillars {
    pub atm: f64,
    pub call25: f64,
    pub put25: f64,
}

impl SmilePillars {
    pub fn new(atm: f64, call25: f64, put25: f64) -> Result<Self> {
        if [atm, call25, put25].iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self { atm, call25, put25 })
        } else {
            Err(Error::invalid("pillar vols must be positive"))
        }
    }

    pub fn flat(atm: f64) -> Result<Self> {
        Self::new(atm, atm, atm)
    }

    /// From ATM vol, 25-delta risk reversal and butterfly.
    pub fn from_rr_bf(atm: f64, rr25: f64, bf25: f64) -> Result<Self> {
        Self::new(atm, atm + bf25 + 0.5 * rr25, atm + bf25 - 0.5 * rr25)
    }

    /// Parallel shift of all pillars, keeping RR and BF fixed.
    pub fn shifted(&self, dv: f64) -> Result<Self> {
        Self::new(self.atm + dv, self.call25 + dv, self.put25 + dv)
    }

    fn vols(&self) -> [f64; 3] {
        [self.atm, self.call25, self.put25]
    }
}

/// Pillar strikes `[ATM, 25Δ call, 25Δ put]`: ATM at the forward, wings from
/// forward (premium-unadjusted) deltas evaluated at each pillar's own vol.
pub fn pillar_strikes(pillars: &SmilePillars, mkt: &MarketSnapshot, expiry: f64) -> [f64; 3] {
    let f = mkt.forward(expiry);
    let sq = libm::sqrt(expiry);
    let wing = |vol: f64, d1: f64| f * libm::exp(-d1 * vol * sq + 0.5 * vol * vol * expiry);
    [
        f,
        wing(pillars.call25, inv_norm_cdf(0.25)),
        wing(pillars.put25, inv_norm_cdf(0.75)),
    ]
}

fn decimal_greeks(inst: &Instrument, mkt: &MarketSnapshot) -> Result<[f64; 3]> {
    let g = match inst {
        Instrument::UpInCall(b) if b.barrier > mkt.spot => {
            // Wider inner bumps keep round-off out of any outer differencing.
            let bumps = FdBumps { spot_rel: 1e-3, vol_points: 0.1 };
            let f = |s: f64, v: f64| inst.price(&MarketSnapshot { spot: s, vol: v, ..*mkt });
            fd_greeks(f, mkt, VolUnit::Decimal, &bumps)?
        }
        _ => inst.greeks(mkt, VolUnit::Decimal, &FdBumps::default())?,
    };
    Ok([g.vega, g.vanna, g.volga])
}

/// Pillar weights matching the instrument's flat-vol Vega, Vanna and Volga.
pub fn vv_weights(inst: &Instrument, mkt: &MarketSnapshot, pillars: &SmilePillars) -> Result<[f64; 3]> {
    let t = inst.expiry();
    let strikes = pillar_strikes(pillars, mkt, t);
    let mut a = Matrix::zeros(3, 3);
    for (j, &k) in strikes.iter().enumerate() {
        let g = bs_greeks(&VanillaSpec::new(OptionKind::Call, k, t)?, mkt, VolUnit::Decimal)?;
        a[(0, j)] = g.vega;
        a[(1, j)] = g.vanna;
        a[(2, j)] = g.volga;
    }
    let target = Vector::from_column_slice(&decimal_greeks(inst, mkt)?);
    // Equilibrate rows before judging rank; the three Greeks live on very
    // different scales.
    let mut scaled = a.clone();
    let mut rhs = target.clone();
    for r in 0..3 {
        let s = scaled.row(r).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            return Err(Error::PillarsDoNotSpan);
        }
        scaled.row_mut(r).scale_mut(1.0 / s);
        rhs[r] /= s;
    }
    if linalg::condition_number(&scaled) > 1e12 {
        return Err(Error::PillarsDoNotSpan);
    }
    let x = scaled.lu().solve(&rhs).ok_or(Error::PillarsDoNotSpan)?;
    Ok([x[0], x[1], x[2]])
}

/// Flat-vol price plus the cost of the Vega/Vanna/Volga-matching pillar
/// overhedge valued at market pillar vols.
///
/// The flat vol is `mkt.vol`; for barriers the same weight system is applied
/// to the barrier's flat-vol sensitivities.
pub fn vanna_volga_price(inst: &Instrument, mkt: &MarketSnapshot, pillars: &SmilePillars) -> Result<f64> {
    let t = inst.expiry();
    let base = inst.price(mkt);
    if t <= 0.0 {
        return Ok(base);
    }
    let inst = match inst {
        Instrument::UpInCall(b) if b.barrier <= mkt.spot => Instrument::Vanilla(b.knocked_in()),
        other => *other,
    };
    let w = vv_weights(&inst, mkt, pillars)?;
    let strikes = pillar_strikes(pillars, mkt, t);
    let vols = pillars.vols();
    let mut corr = 0.0;
    for j in 0..3 {
        let market = bs_price(OptionKind::Call, &mkt.with_vol(vols[j]), strikes[j], t);
        let flat = bs_price(OptionKind::Call, mkt, strikes[j], t);
        corr += w[j] * (market - flat);
    }
    let p = base + corr;
    if p.is_finite() {
        Ok(p)
    } else {
        Err(Error::NonFinite("Vanna-Volga price"))
    }
}

/// Central finite-difference Hessian of the Vanna–Volga price on a
/// spot/vol chart.
///
/// A vol bump shifts all pillar vols in parallel (risk reversal and
/// butterfly held fixed); pillar strikes follow the bumped forward.
pub fn vv_target_hessian(
    inst: &Instrument,
    mkt: &MarketSnapshot,
    pillars: &SmilePillars,
    bumps: &FdBumps,
    unit: VolUnit,
    chart: &Chart,
) -> Result<QuadraticForm> {
    check_dim("spot/vol chart", 2, chart.dim())?;
    bumps.validate()?;
    let price = |s: f64, v: f64| -> Result<f64> {
        let m = MarketSnapshot { spot: s, vol: v, ..*mkt };
        vanna_volga_price(inst, &m, &pillars.shifted(v - mkt.vol)?)
    };
    let (s, v) = (mkt.spot, mkt.vol);
    let hs = bumps.spot_rel * s;
    let hv = bumps.vol_decimal();
    let p0 = price(s, v)?;
    let pu = price(s + hs, v)?;
    let pd = price(s - hs, v)?;
    let vu = price(s, v + hv)?;
    let vd = price(s, v - hv)?;
    let cross = price(s + hs, v + hv)? - price(s + hs, v - hv)? - price(s - hs, v + hv)? + price(s - hs, v - hv)?;
    let k = unit.per_decimal();
    let h_ss = (pu - 2.0 * p0 + pd) / (hs * hs);
    let h_sv = cross / (4.0 * hs * hv) / k;
    let h_vv = (vu - 2.0 * p0 + vd) / (hv * hv) / (k * k);
    if ![h_ss, h_sv, h_vv].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("Vanna-Volga target Hessian"));
    }
    QuadraticForm::hessian(chart, Matrix::from_row_slice(2, 2, &[h_ss, h_sv, h_sv, h_vv]))
}
