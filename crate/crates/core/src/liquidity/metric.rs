use alloc::vec::Vec;

use super::FactorPenalty;
use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, Connection, QuadraticForm};
use crate::linalg::{self, Matrix, Vector};

/// Relative eigenvalue threshold below which a metric counts as singular.
pub const PD_THRESHOLD: f64 = 1e-12;

/// Fails unless `min eig(g) > PD_THRESHOLD·‖g‖`.
pub fn require_pd(g: &Matrix, what: &'static str) -> Result<()> {
    let ev = linalg::sym_eigenvalues(g);
    let norm = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = ev.first().copied().unwrap_or(0.0);
    if norm > 0.0 && min > PD_THRESHOLD * norm {
        Ok(())
    } else {
        Err(Error::NotPd {
            what,
            min_eigenvalue: min,
        })
    }
}

/// Levi–Civita coefficients
/// `C^k_{ij} = ½ g^{kl}(∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})`
/// from a metric and its coordinate derivatives.
pub fn levi_civita(g: &QuadraticForm, dg: &[Matrix]) -> Result<Connection> {
    let d = g.dim();
    check_dim("metric derivatives", d, dg.len())?;
    for m in dg {
        check_dim("metric derivative", d, m.nrows())?;
        check_dim("metric derivative", d, m.ncols())?;
    }
    require_pd(g.matrix(), "metric")?;
    let ginv = linalg::spd_inverse(g.matrix(), "metric")?;
    let mut conn = Connection::zeros_raw(g.chart(), d);
    // first-kind symbols Γ_{l,ij}
    let mut first: Vec<f64> = alloc::vec![0.0; d * d * d];
    for l in 0..d {
        for i in 0..d {
            for j in i..d {
                first[(l * d + i) * d + j] = 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]);
            }
        }
    }
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let v: f64 = (0..d).map(|l| ginv[(k, l)] * first[(l * d + i) * d + j]).sum();
                conn.set(k, i, j, v);
            }
        }
    }
    Ok(conn)
}

/// `g + ε_g g₀` with a positive definite baseline `g₀`.
pub fn regularize_penalty(g: &FactorPenalty, eps: f64, g0: &QuadraticForm) -> Result<FactorPenalty> {
    check_chart("baseline penalty", g.chart(), g0.chart())?;
    check_dim("baseline penalty", g.dim(), g0.dim())?;
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("regularization weight must be positive"));
    }
    require_pd(g0.matrix(), "baseline penalty")?;
    let p = FactorPenalty::from_matrix(g.chart(), g.matrix() + g0.matrix() * eps)?;
    Ok(match g.bucket() {
        Some(b) => p.with_bucket(b),
        None => p,
    })
}

/// Default regularization baseline `diag(scale⁻²)`.
pub fn default_baseline(chart: &crate::geometry::Chart, scales: &[f64]) -> Result<QuadraticForm> {
    check_dim("coordinate scales", chart.dim(), scales.len())?;
    if scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("coordinate scales must be positive"));
    }
    let diag = Vector::from_iterator(scales.len(), scales.iter().map(|s| 1.0 / (s * s)));
    QuadraticForm::penalty(chart, Matrix::from_diagonal(&diag))
}
