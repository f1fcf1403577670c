use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{FactorPenalty, ImpactMatrix};
use crate::error::{Error, Result};
use crate::geometry::{check_dim, Chart};
use crate::linalg::{self, Matrix, Vector};

/// Largest accepted condition number of `BΛ⁻¹Bᵀ`.
pub const MAX_EXPOSURE_CONDITION: f64 = 1e12;

/// Controlled exposures: `B` (exposure per trade unit, p×m) and `J_E`
/// (exposure drift per factor move, p×d).
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSpec {
    chart: String,
    pub b: Matrix,
    pub j_e: Matrix,
}

impl ExposureSpec {
    pub fn new(chart: &Chart, b: Matrix, j_e: Matrix) -> Result<Self> {
        check_dim("exposure drift rows", b.nrows(), j_e.nrows())?;
        check_dim("exposure drift columns", chart.dim(), j_e.ncols())?;
        if !linalg::all_finite(&b) || !linalg::all_finite(&j_e) {
            return Err(Error::NonFinite("exposure matrices"));
        }
        Ok(Self {
            chart: chart.id().to_string(),
            b,
            j_e,
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }
}

/// Linear hedge rule `δq = M δx` (m×d).
#[derive(Debug, Clone, PartialEq)]
pub struct HedgeResponse {
    chart: String,
    pub m: Matrix,
}

impl HedgeResponse {
    pub fn new(chart: &Chart, m: Matrix) -> Result<Self> {
        check_dim("hedge response columns", chart.dim(), m.ncols())?;
        if !linalg::all_finite(&m) {
            return Err(Error::NonFinite("hedge response"));
        }
        Ok(Self {
            chart: chart.id().to_string(),
            m,
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }
}

/// `Λ'⁻¹Bᵀ` and `BΛ'⁻¹Bᵀ` for `Λ' = cΛ`, with `c` the power of two that
/// brings `max|Λ|` into `[0.5, 1)`. Returns `c` as well. Trades and hedge
/// responses are invariant under `c`, and an exact power of two keeps them
/// bit-identical when `Λ` is doubled.
fn kkt_blocks(lambda: &ImpactMatrix, b: &Matrix) -> Result<(Matrix, Matrix, f64)> {
    check_dim("exposure matrix columns", lambda.dim(), b.ncols())?;
    let big = linalg::max_abs(lambda.matrix());
    let c = if big > 0.0 { libm::ldexp(1.0, -libm::frexp(big).1) } else { 1.0 };
    let normalized = lambda.matrix() * c;
    let chol = normalized.clone().cholesky().ok_or_else(|| Error::NotPd {
        what: "impact matrix",
        min_eigenvalue: linalg::sym_eigenvalues(lambda.matrix()).first().copied().unwrap_or(0.0),
    })?;
    let x = chol.solve(&b.transpose());
    let s = b * &x;
    let s = (&s + s.transpose()) * 0.5;
    Ok((x, s, c))
}

fn checked_schur_inverse(s: &Matrix) -> Result<Matrix> {
    linalg::checked_inverse(s, "B Λ^-1 B^T", MAX_EXPOSURE_CONDITION)
}

/// Minimum-cost trade satisfying `B δq = c`: `δq = Λ⁻¹Bᵀ(BΛ⁻¹Bᵀ)⁻¹c`.
pub fn least_cost_trade(lambda: &ImpactMatrix, b: &Matrix, c: &Vector) -> Result<Vector> {
    check_dim("exposure target", b.nrows(), c.len())?;
    let (x, s, _) = kkt_blocks(lambda, b)?;
    Ok(x * (checked_schur_inverse(&s)? * c))
}

/// Variant of [`least_cost_trade`] for rank-deficient `B`, using the
/// pseudoinverse of `BΛ⁻¹Bᵀ`. Returns the least-cost trade among those
/// minimizing `‖Bδq − c‖` in the `(BΛ⁻¹Bᵀ)⁺` sense.
pub fn least_cost_trade_pinv(lambda: &ImpactMatrix, b: &Matrix, c: &Vector) -> Result<Vector> {
    check_dim("exposure target", b.nrows(), c.len())?;
    let (x, s, _) = kkt_blocks(lambda, b)?;
    Ok(x * linalg::min_norm_solve(&s, c, 1e-12))
}

/// `M = −Λ⁻¹Bᵀ(BΛ⁻¹Bᵀ)⁻¹J_E`, the least-cost response to factor moves.
pub fn build_hedge_response(lambda: &ImpactMatrix, exposure: &ExposureSpec) -> Result<HedgeResponse> {
    let (x, s, _) = kkt_blocks(lambda, &exposure.b)?;
    let m = -(x * (checked_schur_inverse(&s)? * &exposure.j_e));
    Ok(HedgeResponse {
        chart: exposure.chart.clone(),
        m,
    })
}

/// `g_ℓ = MᵀΛM`.
pub fn pullback_penalty(resp: &HedgeResponse, lambda: &ImpactMatrix) -> Result<FactorPenalty> {
    check_dim("hedge response rows", lambda.dim(), resp.m.nrows())?;
    let g = resp.m.transpose() * lambda.matrix() * &resp.m;
    let p = FactorPenalty::from_matrix(&resp.chart, g)?;
    Ok(match lambda.bucket() {
        Some(b) => p.with_bucket(b),
        None => p,
    })
}

/// `J_Eᵀ(BΛ⁻¹Bᵀ)⁻¹J_E`, equal to the pullback penalty of the least-cost rule.
pub fn closed_form_penalty(lambda: &ImpactMatrix, exposure: &ExposureSpec) -> Result<FactorPenalty> {
    let (_, s, c) = kkt_blocks(lambda, &exposure.b)?;
    let g = exposure.j_e.transpose() * checked_schur_inverse(&s)? * &exposure.j_e / c;
    FactorPenalty::from_matrix(&exposure.chart, g)
}

/// `∂_i g_ℓ = (∂_iM)ᵀΛM + Mᵀ(∂_iΛ)M + MᵀΛ(∂_iM)`.
pub fn g_ell_derivatives_analytic(
    resp: &HedgeResponse,
    dm: &[Matrix],
    lambda: &ImpactMatrix,
    dlambda: Option<&[Matrix]>,
) -> Result<Vec<Matrix>> {
    let d = resp.m.ncols();
    check_dim("hedge response derivatives", d, dm.len())?;
    if let Some(dl) = dlambda {
        check_dim("impact matrix derivatives", d, dl.len())?;
    }
    let m = &resp.m;
    let l = lambda.matrix();
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        check_dim("hedge response derivative rows", m.nrows(), dm[i].nrows())?;
        check_dim("hedge response derivative columns", d, dm[i].ncols())?;
        let lm = l * m;
        let mut g = dm[i].transpose() * &lm;
        g += g.transpose();
        if let Some(dl) = dlambda {
            check_dim("impact matrix derivative", l.nrows(), dl[i].nrows())?;
            g += m.transpose() * &dl[i] * m;
        }
        out.push(g);
    }
    Ok(out)
}

/// Central finite differences of a penalty field `x ↦ g(x)` at `x`.
pub fn g_ell_derivatives_fd(
    field: &dyn Fn(&[f64]) -> Result<Matrix>,
    x: &[f64],
    steps: &[f64],
) -> Result<Vec<Matrix>> {
    check_dim("finite-difference steps", x.len(), steps.len())?;
    let mut out = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = steps[i];
        if !(h > 0.0) {
            return Err(Error::invalid(format!("finite-difference step {i} must be positive, got {h}")));
        }
        p[i] = x[i] + h;
        let up = field(&p)?;
        p[i] = x[i] - h;
        let dn = field(&p)?;
        p[i] = x[i];
        out.push((up - dn) / (2.0 * h));
    }
    Ok(out)
}
