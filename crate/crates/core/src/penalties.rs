//! Non-execution penalties on factor moves: shrunk covariance (Mahalanobis),
//! stress-scenario gap penalties, sensitivity penalties, and their weighted
//! combination into an effective metric.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, Chart, FormKind, QuadraticForm, TangentMove, Tolerances};
use crate::liquidity::{require_pd, FactorPenalty, PD_THRESHOLD};
use crate::linalg::{self, Matrix};

/// Inverse of the shrunk covariance
/// `(1−δ)Ξ + δ·tr(Ξ)/d·I`, with eigenvalues floored at `ε·λ_max`.
pub fn covariance_penalty(xi: &QuadraticForm, shrinkage: f64, floor: f64) -> Result<FactorPenalty> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::invalid(format!("shrinkage must lie in [0, 1], got {shrinkage}")));
    }
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::invalid(format!("eigenvalue floor must be non-negative, got {floor}")));
    }
    let d = xi.dim();
    let m = xi.matrix();
    let target = m.trace() / d as f64;
    let shrunk = m * (1.0 - shrinkage) + Matrix::identity(d, d) * (shrinkage * target);
    let eig = linalg::symmetrize(&shrunk, Tolerances::default().symmetry_repair)?.symmetric_eigen();
    let max = eig.eigenvalues.max();
    if !(max > 0.0) {
        return Err(Error::NotPd {
            what: "covariance",
            min_eigenvalue: eig.eigenvalues.min(),
        });
    }
    let lo = floor * max;
    let mut inv = eig.eigenvalues.clone();
    for v in inv.iter_mut() {
        let c = v.max(lo);
        if !(c > PD_THRESHOLD * max) {
            return Err(Error::NotPd {
                what: "covariance",
                min_eigenvalue: *v,
            });
        }
        *v = 1.0 / c;
    }
    let q = &eig.eigenvectors;
    let g = q * Matrix::from_diagonal(&inv) * q.transpose();
    FactorPenalty::from_matrix(xi.chart(), (&g + g.transpose()) * 0.5)
}

/// A stress direction `δx^(s)` with weight `w_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct StressMove {
    pub label: String,
    pub direction: TangentMove,
    pub weight: f64,
    /// Normalize `ℓ^(s)` by the reference norm of the direction.
    pub normalize: bool,
}

impl StressMove {
    pub fn new(label: &str, direction: TangentMove, weight: f64, normalize: bool) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("stress weight must be finite and non-negative, got {weight}")));
        }
        Ok(Self {
            label: label.to_string(),
            direction,
            weight,
            normalize,
        })
    }
}

/// `g_gap = Σ w_s ℓ^(s)ℓ^(s)ᵀ` with `ℓ^(s) = g0·δx^(s)`, optionally divided by
/// `‖δx^(s)‖_{g0}`. A zero direction contributes nothing.
pub fn gap_penalty(stresses: &[StressMove], g0: &QuadraticForm) -> Result<FactorPenalty> {
    require_pd(g0.matrix(), "reference metric")?;
    let d = g0.dim();
    let mut g = Matrix::zeros(d, d);
    for s in stresses {
        check_chart("stress move", g0.chart(), s.direction.chart())?;
        check_dim("stress move", d, s.direction.dim())?;
        let mut l = g0.matrix() * s.direction.delta();
        if s.normalize {
            let n2 = s.direction.delta().dot(&l);
            if n2 <= 0.0 {
                continue;
            }
            l /= libm::sqrt(n2);
        }
        g += &l * l.transpose() * s.weight;
    }
    FactorPenalty::from_matrix(g0.chart(), g)
}

/// Jacobian `J_Y` of controlled quantities with PSD weights `W_Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityBlock {
    chart: String,
    jacobian: Matrix,
    weights: Matrix,
}

impl SensitivityBlock {
    pub fn new(chart: &Chart, jacobian: Matrix, weights: Matrix) -> Result<Self> {
        check_dim("sensitivity columns", chart.dim(), jacobian.ncols())?;
        check_dim("sensitivity weight rows", jacobian.nrows(), weights.nrows())?;
        check_dim("sensitivity weight columns", jacobian.nrows(), weights.ncols())?;
        if !linalg::all_finite(&jacobian) {
            return Err(Error::NonFinite("sensitivity jacobian"));
        }
        let w = QuadraticForm::from_matrix("sensitivity-weights", weights, FormKind::Penalty, &Tolerances::default())?;
        Ok(Self {
            chart: chart.id().to_string(),
            jacobian,
            weights: w.matrix().clone(),
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn jacobian(&self) -> &Matrix {
        &self.jacobian
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }
}

/// `g_Y = J_Yᵀ W_Y J_Y`.
pub fn sensitivity_penalty(block: &SensitivityBlock) -> Result<FactorPenalty> {
    let g = block.jacobian.transpose() * &block.weights * &block.jacobian;
    FactorPenalty::from_matrix(&block.chart, (&g + g.transpose()) * 0.5)
}

/// `Σ η_a g_a`. The bucket tag survives only if all terms share it.
pub fn combine_penalties(terms: &[(f64, &FactorPenalty)]) -> Result<FactorPenalty> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::invalid("no penalty terms to combine"))?;
    let d = first.dim();
    let mut g = Matrix::zeros(d, d);
    for (eta, p) in terms {
        if !(*eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid(format!("penalty weight must be finite and non-negative, got {eta}")));
        }
        check_chart("penalty term", first.chart(), p.chart())?;
        check_dim("penalty term", d, p.dim())?;
        g += p.matrix() * *eta;
    }
    let out = FactorPenalty::from_matrix(first.chart(), g)?;
    Ok(match first.bucket() {
        Some(b) if terms.iter().all(|(_, p)| p.bucket() == Some(b)) => out.with_bucket(b),
        _ => out,
    })
}

/// The weight `α` with `α·δxᵀg_bδx = δxᵀg_aδx` on a reference move. Reported
/// only; callers decide whether to apply it.
pub fn penalty_matching_ratio(a: &FactorPenalty, b: &FactorPenalty, reference: &TangentMove) -> Result<f64> {
    let na = a.eval(reference)?;
    let nb = b.eval(reference)?;
    if !(nb > 0.0) {
        return Err(Error::Undefined("matching ratio: reference move has zero penalty under the second form"));
    }
    Ok(na / nb)
}

/// Convenience for time-bucketed effective metrics: the term list whose
/// bucket tag matches `bucket`, or untagged terms.
pub fn terms_for_bucket<'a>(terms: &[(f64, &'a FactorPenalty)], bucket: &str) -> Vec<(f64, &'a FactorPenalty)> {
    terms
        .iter()
        .filter(|(_, p)| p.bucket().is_none_or(|b| b == bucket))
        .copied()
        .collect()
}
