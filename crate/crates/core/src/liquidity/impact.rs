use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::check_dim;
use crate::linalg::{self, Matrix, Vector};

/// Price half-spread per unit from a vol half-width and the quote-vega per unit.
pub fn half_spread_from_vol_width(s_vol: f64, quote_vega: f64) -> Result<f64> {
    if !(s_vol >= 0.0) || !(quote_vega >= 0.0) || !s_vol.is_finite() || !quote_vega.is_finite() {
        return Err(Error::invalid("vol width and quote vega must be finite and nonnegative"));
    }
    Ok(s_vol * quote_vega)
}

/// `λ = 2s/Q` for a per-unit half-spread `s` at clip `Q`.
pub fn lambda_from_width_clip(s_price: f64, clip: f64) -> Result<f64> {
    check_clip(clip)?;
    if !(s_price >= 0.0) || !s_price.is_finite() {
        return Err(Error::invalid("half-spread must be finite and nonnegative"));
    }
    Ok(2.0 * s_price / clip)
}

/// `λ = 2 s_clip / Q²` for a half-spread quoted per clip.
pub fn lambda_from_clip_spread(s_clip: f64, clip: f64) -> Result<f64> {
    check_clip(clip)?;
    if !(s_clip >= 0.0) || !s_clip.is_finite() {
        return Err(Error::invalid("half-spread must be finite and nonnegative"));
    }
    Ok(2.0 * s_clip / (clip * clip))
}

fn check_clip(clip: f64) -> Result<()> {
    if clip > 0.0 && clip.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("clip size must be positive, got {clip}")))
    }
}

/// Size-dependent impact coefficient with logistic blends between plateaus.
#[derive(Debug, Clone, PartialEq)]
pub struct TierSpec {
    plateaus: Vec<f64>,
    transitions: Vec<f64>,
    smoothing: Vec<f64>,
}

impl TierSpec {
    pub fn new(plateaus: Vec<f64>, transitions: Vec<f64>, smoothing: Vec<f64>) -> Result<Self> {
        if plateaus.is_empty() {
            return Err(Error::invalid("a tier specification needs at least one plateau"));
        }
        check_dim("tier transitions", plateaus.len() - 1, transitions.len())?;
        check_dim("tier smoothing widths", transitions.len(), smoothing.len())?;
        if plateaus.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("tier plateaus must be positive"));
        }
        if transitions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tier transitions must be strictly increasing"));
        }
        if smoothing.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("tier smoothing widths must be positive"));
        }
        Ok(Self {
            plateaus,
            transitions,
            smoothing,
        })
    }

    pub fn plateaus(&self) -> &[f64] {
        &self.plateaus
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn smoothing(&self) -> &[f64] {
        &self.smoothing
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::new(
            self.plateaus.iter().map(|p| p * a).collect(),
            self.transitions.clone(),
            self.smoothing.clone(),
        )
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `λ(q) = λ⁽¹⁾ + Σ_j (λ⁽ʲ⁾ − λ⁽ʲ⁻¹⁾)·logistic((|q| − c_j)/ω_j)`.
pub fn tiered_lambda(q: f64, tiers: &TierSpec) -> f64 {
    let a = q.abs();
    let mut l = tiers.plateaus[0];
    for j in 0..tiers.transitions.len() {
        let step = tiers.plateaus[j + 1] - tiers.plateaus[j];
        l += step * logistic((a - tiers.transitions[j]) / tiers.smoothing[j]);
    }
    l
}

/// `½ λ(q) q²`.
pub fn tiered_cost(q: f64, tiers: &TierSpec) -> f64 {
    0.5 * tiered_lambda(q, tiers) * q * q
}

/// How an instrument's half-spread is quoted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthQuote {
    /// Half-spread in premium per trade unit.
    Price { half_spread: f64 },
    /// Half-width in vol units; converted with the quote-vega per unit. When
    /// `quote_vega` is absent the caller supplies the model vega.
    Vol { half_width: f64, quote_vega: Option<f64> },
}

/// One row of a tiered quote table. `breakpoint` is the upper end of the
/// tier in trade units (infinite for the last tier); `width` is in the same
/// convention as the instrument's [`WidthQuote`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierRow {
    pub breakpoint: f64,
    pub clip: f64,
    pub width: f64,
    pub smoothing: f64,
}

/// A hedge instrument's liquidity description.
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeInstrumentSpec {
    pub name: String,
    pub unit: String,
    pub width: WidthQuote,
    pub clip: f64,
    pub tiers: Option<Vec<TierRow>>,
}

impl HedgeInstrumentSpec {
    pub fn new(name: &str, unit: &str, width: WidthQuote, clip: f64) -> Result<Self> {
        check_clip(clip)?;
        let w = match width {
            WidthQuote::Price { half_spread } => half_spread,
            WidthQuote::Vol { half_width, .. } => half_width,
        };
        if !(w >= 0.0) {
            return Err(Error::invalid("widths must be nonnegative"));
        }
        Ok(Self {
            name: name.to_string(),
            unit: unit.to_string(),
            width,
            clip,
            tiers: None,
        })
    }

    pub fn with_tiers(mut self, rows: Vec<TierRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("tier table is empty"));
        }
        for r in &rows {
            check_clip(r.clip)?;
            if !(r.width >= 0.0) {
                return Err(Error::invalid("tier widths must be nonnegative"));
            }
        }
        self.tiers = Some(rows);
        Ok(self)
    }

    fn quote_vega(&self, model_vega: Option<f64>) -> Result<f64> {
        match self.width {
            WidthQuote::Price { .. } => Ok(1.0),
            WidthQuote::Vol { quote_vega: Some(v), .. } => Ok(v),
            WidthQuote::Vol { quote_vega: None, .. } => model_vega
                .map(f64::abs)
                .ok_or_else(|| Error::invalid(format!("instrument `{}` needs a quote vega", self.name))),
        }
    }

    fn to_price(&self, width: f64, model_vega: Option<f64>) -> Result<f64> {
        match self.width {
            WidthQuote::Price { .. } => Ok(width),
            WidthQuote::Vol { .. } => half_spread_from_vol_width(width, self.quote_vega(model_vega)?),
        }
    }

    /// Per-unit price half-spread.
    pub fn half_spread(&self, model_vega: Option<f64>) -> Result<f64> {
        let w = match self.width {
            WidthQuote::Price { half_spread } => half_spread,
            WidthQuote::Vol { half_width, .. } => half_width,
        };
        self.to_price(w, model_vega)
    }

    /// Flat impact coefficient `2s/Q`.
    pub fn lambda(&self, model_vega: Option<f64>) -> Result<f64> {
        lambda_from_width_clip(self.half_spread(model_vega)?, self.clip)
    }

    /// Tier plateaus `2 s_j/Q_j` with transitions at the tier breakpoints.
    pub fn tier_spec(&self, model_vega: Option<f64>) -> Result<Option<TierSpec>> {
        let Some(rows) = &self.tiers else {
            return Ok(None);
        };
        let mut plateaus = Vec::with_capacity(rows.len());
        for r in rows {
            plateaus.push(lambda_from_width_clip(self.to_price(r.width, model_vega)?, r.clip)?);
        }
        let transitions = rows[..rows.len() - 1].iter().map(|r| r.breakpoint).collect();
        let smoothing = rows[..rows.len() - 1].iter().map(|r| r.smoothing).collect();
        TierSpec::new(plateaus, transitions, smoothing).map(Some)
    }

    /// Impact coefficient frozen at a reference trade size (the instrument
    /// clip unless given), for uses that need a state metric.
    pub fn frozen_lambda(&self, model_vega: Option<f64>, reference: Option<f64>) -> Result<f64> {
        match self.tier_spec(model_vega)? {
            Some(t) => Ok(tiered_lambda(reference.unwrap_or(self.clip), &t)),
            None => self.lambda(model_vega),
        }
    }

    /// Cost of a trade `q`: tiered when tiers are present, flat otherwise.
    pub fn cost(&self, q: f64, model_vega: Option<f64>) -> Result<f64> {
        match self.tier_spec(model_vega)? {
            Some(t) => Ok(tiered_cost(q, &t)),
            None => Ok(0.5 * self.lambda(model_vega)? * q * q),
        }
    }
}

/// Quadratic trade-cost matrix `Λ` (premium per trade unit squared).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactMatrix {
    matrix: Matrix,
    units: Vec<String>,
    bucket: Option<String>,
}

impl ImpactMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if !linalg::all_finite(&matrix) {
            return Err(Error::NonFinite("impact matrix"));
        }
        let matrix = linalg::symmetrize(&matrix, 1e-8)?;
        let ev = linalg::sym_eigenvalues(&matrix);
        let norm = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if let Some(&min) = ev.first() {
            if min < -1e-10 * norm {
                return Err(Error::NotPsd {
                    what: "impact matrix",
                    min_eigenvalue: min,
                });
            }
        }
        let m = matrix.nrows();
        Ok(Self {
            matrix,
            units: alloc::vec![String::new(); m],
            bucket: None,
        })
    }

    pub fn diagonal(lambdas: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_diagonal(&Vector::from_column_slice(lambdas)))
    }

    pub fn with_units(mut self, units: &[&str]) -> Result<Self> {
        check_dim("impact matrix units", self.dim(), units.len())?;
        self.units = units.iter().map(|u| u.to_string()).collect();
        Ok(self)
    }

    pub fn with_bucket(mut self, bucket: &str) -> Self {
        self.bucket = Some(bucket.to_string());
        self
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn bucket(&self) -> Option<&str> {
        self.bucket.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `½ δqᵀ Λ δq`.
    pub fn cost(&self, dq: &Vector) -> Result<f64> {
        check_dim("trade vector", self.dim(), dq.len())?;
        Ok(0.5 * dq.dot(&(&self.matrix * dq)))
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::invalid("impact matrices scale by nonnegative factors only"));
        }
        Ok(Self {
            matrix: &self.matrix * a,
            units: self.units.clone(),
            bucket: self.bucket.clone(),
        })
    }

    /// Re-expresses `Λ` for trades counted in blocks of `block[r]` units,
    /// `Λ' = D Λ D` with `D = diag(block)`; costs are unchanged.
    pub fn in_blocks(&self, block: &[f64]) -> Result<Self> {
        check_dim("block sizes", self.dim(), block.len())?;
        if block.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::invalid("block sizes must be positive"));
        }
        let d = Vector::from_column_slice(block);
        let m = Matrix::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * d[i] * d[j]);
        Ok(Self {
            matrix: m,
            units: self.units.clone(),
            bucket: self.bucket.clone(),
        })
    }

    pub(crate) fn is_zero(&self) -> bool {
        self.matrix.iter().all(|v| *v == 0.0)
    }
}
