//! Black–Scholes (Garman–Kohlhagen) vanillas, Reiner–Rubinstein up-and-in
//! calls, Vanna–Volga smile corrections and finite-difference target Hessians.

mod barrier;
mod black_scholes;
mod vanna_volga;

use alloc::string::String;
use alloc::vec::Vec;

pub use barrier::reiner_rubinstein_uic;
pub use black_scholes::{bs_greeks, bs_price};
pub use vanna_volga::{pillar_strikes, SmilePillars, vanna_volga_price, vv_target_hessian, vv_weights};

use crate::error::{Error, Result};
use crate::geometry::{check_dim, Chart, Gradient, QuadraticForm};
use crate::linalg::Matrix;

/// Unit of the volatility coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolUnit {
    /// One unit is 1% of volatility (0.01 decimal).
    #[default]
    Points,
    /// One unit is 100% of volatility.
    Decimal,
}

impl VolUnit {
    /// Coordinate units per unit of decimal volatility.
    pub fn per_decimal(self) -> f64 {
        match self {
            VolUnit::Points => 100.0,
            VolUnit::Decimal => 1.0,
        }
    }

    pub fn to_decimal(self, v: f64) -> f64 {
        v / self.per_decimal()
    }

    pub fn from_decimal(self, v: f64) -> f64 {
        v * self.per_decimal()
    }

    pub fn label(self) -> &'static str {
        match self {
            VolUnit::Points => "vol-point",
            VolUnit::Decimal => "vol-decimal",
        }
    }
}

/// Flat-vol market inputs. The volatility is stored in decimal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSnapshot {
    pub spot: f64,
    pub vol: f64,
    pub r_d: f64,
    pub r_f: f64,
}

impl MarketSnapshot {
    pub fn new(spot: f64, vol: f64, r_d: f64, r_f: f64) -> Result<Self> {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(Error::invalid("spot must be positive"));
        }
        if !(vol > 0.0) || !vol.is_finite() {
            return Err(Error::invalid("volatility must be positive"));
        }
        if !r_d.is_finite() || !r_f.is_finite() {
            return Err(Error::NonFinite("interest rates"));
        }
        Ok(Self { spot, vol, r_d, r_f })
    }

    pub fn forward(&self, expiry: f64) -> f64 {
        self.spot * libm::exp((self.r_d - self.r_f) * expiry)
    }

    pub fn with_spot(&self, spot: f64) -> Self {
        Self { spot, ..*self }
    }

    pub fn with_vol(&self, vol: f64) -> Self {
        Self { vol, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanillaSpec {
    pub kind: OptionKind,
    pub strike: f64,
    /// Time to expiry in years. Non-positive values price at intrinsic.
    pub expiry: f64,
}

impl VanillaSpec {
    pub fn new(kind: OptionKind, strike: f64, expiry: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::invalid("strike must be positive"));
        }
        if !expiry.is_finite() {
            return Err(Error::NonFinite("expiry"));
        }
        Ok(Self { kind, strike, expiry })
    }
}

/// Up-and-in call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSpec {
    pub strike: f64,
    pub barrier: f64,
    pub expiry: f64,
}

impl BarrierSpec {
    pub fn new(strike: f64, barrier: f64, expiry: f64) -> Result<Self> {
        if !(strike > 0.0) || !(barrier > 0.0) || !strike.is_finite() || !barrier.is_finite() {
            return Err(Error::invalid("strike and barrier must be positive"));
        }
        if !expiry.is_finite() {
            return Err(Error::NonFinite("expiry"));
        }
        Ok(Self { strike, barrier, expiry })
    }

    /// The vanilla call the option turns into once the barrier is touched.
    pub fn knocked_in(&self) -> VanillaSpec {
        VanillaSpec {
            kind: OptionKind::Call,
            strike: self.strike,
            expiry: self.expiry,
        }
    }
}

/// Instruments priced by this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instrument {
    Vanilla(VanillaSpec),
    /// Call plus put at the same strike, per unit notional.
    Straddle { strike: f64, expiry: f64 },
    UpInCall(BarrierSpec),
}

impl Instrument {
    pub fn expiry(&self) -> f64 {
        match self {
            Instrument::Vanilla(v) => v.expiry,
            Instrument::Straddle { expiry, .. } => *expiry,
            Instrument::UpInCall(b) => b.expiry,
        }
    }

    pub fn with_expiry(&self, expiry: f64) -> Self {
        match *self {
            Instrument::Vanilla(v) => Instrument::Vanilla(VanillaSpec { expiry, ..v }),
            Instrument::Straddle { strike, .. } => Instrument::Straddle { strike, expiry },
            Instrument::UpInCall(b) => Instrument::UpInCall(BarrierSpec { expiry, ..b }),
        }
    }

    /// Flat-vol Black–Scholes price (Reiner–Rubinstein for barriers).
    pub fn price(&self, mkt: &MarketSnapshot) -> f64 {
        match self {
            Instrument::Vanilla(v) => bs_price(v.kind, mkt, v.strike, v.expiry),
            Instrument::Straddle { strike, expiry } => {
                bs_price(OptionKind::Call, mkt, *strike, *expiry) + bs_price(OptionKind::Put, mkt, *strike, *expiry)
            }
            Instrument::UpInCall(b) => reiner_rubinstein_uic(b, mkt),
        }
    }

    /// Greeks in the requested vol unit: analytic for vanillas and
    /// straddles, central finite differences for barriers.
    pub fn greeks(&self, mkt: &MarketSnapshot, unit: VolUnit, bumps: &FdBumps) -> Result<GreekBundle> {
        match self {
            Instrument::Vanilla(v) => bs_greeks(v, mkt, unit),
            Instrument::Straddle { strike, expiry } => {
                let c = bs_greeks(&VanillaSpec::new(OptionKind::Call, *strike, *expiry)?, mkt, unit)?;
                let p = bs_greeks(&VanillaSpec::new(OptionKind::Put, *strike, *expiry)?, mkt, unit)?;
                Ok(c.add(&p))
            }
            Instrument::UpInCall(b) => {
                if b.barrier <= mkt.spot || b.expiry <= 0.0 {
                    if b.barrier <= mkt.spot {
                        return bs_greeks(&b.knocked_in(), mkt, unit);
                    }
                    let mut g = GreekBundle::zero(unit);
                    g.degenerate = true;
                    return Ok(g);
                }
                let f = |s: f64, v: f64| reiner_rubinstein_uic(b, &MarketSnapshot { spot: s, vol: v, ..*mkt });
                fd_greeks(f, mkt, unit, bumps)
            }
        }
    }
}

/// Finite-difference bump sizes: `h_S = spot_rel·S`, `h_σ = vol_points` vol points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdBumps {
    pub spot_rel: f64,
    pub vol_points: f64,
}

impl Default for FdBumps {
    fn default() -> Self {
        Self {
            spot_rel: 1e-4,
            vol_points: 0.01,
        }
    }
}

impl FdBumps {
    pub fn validate(&self) -> Result<()> {
        if self.spot_rel > 0.0 && self.vol_points > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("finite-difference bumps must be positive"))
        }
    }

    pub(crate) fn vol_decimal(&self) -> f64 {
        self.vol_points / 100.0
    }
}

/// Price and sensitivities of one instrument. Vol sensitivities are per
/// unit of `vol_unit`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreekBundle {
    pub price: f64,
    pub delta: f64,
    pub vega: f64,
    pub gamma: f64,
    pub vanna: f64,
    pub volga: f64,
    /// Additional first-order sensitivities such as `(RR, V_RR)`.
    pub extra: Vec<(String, f64)>,
    /// Set when expiry has passed and only intrinsic value is reported.
    pub degenerate: bool,
    pub vol_unit: VolUnit,
}

impl GreekBundle {
    pub fn zero(vol_unit: VolUnit) -> Self {
        Self {
            price: 0.0,
            delta: 0.0,
            vega: 0.0,
            gamma: 0.0,
            vanna: 0.0,
            volga: 0.0,
            extra: Vec::new(),
            degenerate: false,
            vol_unit,
        }
    }

    pub fn add(&self, other: &GreekBundle) -> GreekBundle {
        GreekBundle {
            price: self.price + other.price,
            delta: self.delta + other.delta,
            vega: self.vega + other.vega,
            gamma: self.gamma + other.gamma,
            vanna: self.vanna + other.vanna,
            volga: self.volga + other.volga,
            extra: Vec::new(),
            degenerate: self.degenerate || other.degenerate,
            vol_unit: self.vol_unit,
        }
    }

    pub fn scaled(&self, w: f64) -> GreekBundle {
        GreekBundle {
            price: w * self.price,
            delta: w * self.delta,
            vega: w * self.vega,
            gamma: w * self.gamma,
            vanna: w * self.vanna,
            volga: w * self.volga,
            extra: self.extra.iter().map(|(k, v)| (k.clone(), w * v)).collect(),
            degenerate: self.degenerate,
            vol_unit: self.vol_unit,
        }
    }

    /// `(Δ, Vega)` on a two-dimensional spot/vol chart.
    pub fn gradient(&self, chart: &Chart) -> Result<Gradient> {
        check_dim("spot/vol chart", 2, chart.dim())?;
        Gradient::new(chart, &[self.delta, self.vega])
    }

    /// `[[Γ, Vanna], [Vanna, Volga]]` on a two-dimensional spot/vol chart.
    pub fn hessian(&self, chart: &Chart) -> Result<QuadraticForm> {
        check_dim("spot/vol chart", 2, chart.dim())?;
        QuadraticForm::hessian(
            chart,
            Matrix::from_row_slice(2, 2, &[self.gamma, self.vanna, self.vanna, self.volga]),
        )
    }
}

/// Central finite-difference Greeks of `price(S, σ_decimal)`.
pub(crate) fn fd_greeks(
    price: impl Fn(f64, f64) -> f64,
    mkt: &MarketSnapshot,
    unit: VolUnit,
    bumps: &FdBumps,
) -> Result<GreekBundle> {
    bumps.validate()?;
    let (s, v) = (mkt.spot, mkt.vol);
    let hs = bumps.spot_rel * s;
    let hv = bumps.vol_decimal();
    let p0 = price(s, v);
    let pu = price(s + hs, v);
    let pd = price(s - hs, v);
    let vu = price(s, v + hv);
    let vd = price(s, v - hv);
    let uu = price(s + hs, v + hv);
    let ud = price(s + hs, v - hv);
    let du = price(s - hs, v + hv);
    let dd = price(s - hs, v - hv);
    let k = unit.per_decimal();
    let g = GreekBundle {
        price: p0,
        delta: (pu - pd) / (2.0 * hs),
        vega: (vu - vd) / (2.0 * hv) / k,
        gamma: (pu - 2.0 * p0 + pd) / (hs * hs),
        vanna: (uu - ud - du + dd) / (4.0 * hs * hv) / k,
        volga: (vu - 2.0 * p0 + vd) / (hv * hv) / (k * k),
        extra: Vec::new(),
        degenerate: false,
        vol_unit: unit,
    };
    let all = [g.price, g.delta, g.vega, g.gamma, g.vanna, g.volga];
    if all.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(Error::NonFinite("finite-difference Greeks"))
    }
}
