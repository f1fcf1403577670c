//! Book-level aggregation: netting of deal hedges under a shared quadratic
//! cost, portfolio covariant Hessians, incremental liquidity charges and the
//! self-financing wealth recursion with execution costs.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, covariant_hessian, Connection, FormKind, Gradient, QuadraticForm};
use crate::liquidity::ImpactMatrix;
use crate::linalg::{Matrix, Vector};

/// One deal's hedge trade and its weight in the book.
#[derive(Debug, Clone, PartialEq)]
pub struct DealHedge {
    pub id: String,
    pub weight: f64,
    pub trade: Vector,
}

impl DealHedge {
    pub fn new(id: &str, weight: f64, trade: &[f64]) -> Result<Self> {
        if !weight.is_finite() || trade.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("deal hedge"));
        }
        Ok(Self {
            id: id.to_string(),
            weight,
            trade: Vector::from_column_slice(trade),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioCostReport {
    pub net_trade: Vector,
    pub total: f64,
    /// `½w_ν²δq_νᵀΛδq_ν` per deal.
    pub own: Vec<(String, f64)>,
    /// `w_νw_μδq_νᵀΛδq_μ` for ν < μ.
    pub cross: Vec<(String, String, f64)>,
}

/// Cost of the netted book trade with its own/cross decomposition.
pub fn portfolio_cost(deals: &[DealHedge], lambda: &ImpactMatrix) -> Result<PortfolioCostReport> {
    let m = lambda.dim();
    for d in deals {
        check_dim("deal trade", m, d.trade.len())?;
    }
    let l = lambda.matrix();
    let scaled: Vec<Vector> = deals.iter().map(|d| &d.trade * d.weight).collect();
    let images: Vec<Vector> = scaled.iter().map(|q| l * q).collect();
    let mut net = Vector::zeros(m);
    for q in &scaled {
        net += q;
    }
    let total = 0.5 * net.dot(&(l * &net));
    let own = deals
        .iter()
        .zip(scaled.iter().zip(&images))
        .map(|(d, (q, lq))| (d.id.clone(), 0.5 * q.dot(lq)))
        .collect();
    let mut cross = Vec::new();
    for a in 0..deals.len() {
        for b in a + 1..deals.len() {
            cross.push((deals[a].id.clone(), deals[b].id.clone(), scaled[a].dot(&images[b])));
        }
    }
    Ok(PortfolioCostReport {
        net_trade: net,
        total,
        own,
        cross,
    })
}

/// `Σ w_ν (H_ν − C(V_ν))` under one book-level connection.
pub fn portfolio_covariant_hessian(
    deals: &[(f64, &Gradient, &QuadraticForm)],
    conn: &Connection,
) -> Result<QuadraticForm> {
    let d = conn.dim();
    let mut acc = Matrix::zeros(d, d);
    for (w, grad, hess) in deals {
        check_chart("deal gradient", conn.chart(), grad.chart())?;
        check_chart("deal Hessian", conn.chart(), hess.chart())?;
        acc += covariant_hessian(hess, conn, grad)?.matrix() * *w;
    }
    QuadraticForm::from_matrix(conn.chart(), acc, FormKind::HessianTarget, &Default::default())
}

/// `δq_d0ᵀΛδq_π + ½δq_d0ᵀΛδq_d0`, the cost change from adding a deal's
/// trade to the book trade.
pub fn incremental_liquidity_charge(book: &Vector, deal: &Vector, lambda: &ImpactMatrix) -> Result<f64> {
    check_dim("book trade", lambda.dim(), book.len())?;
    check_dim("deal trade", lambda.dim(), deal.len())?;
    let ld = lambda.matrix() * deal;
    Ok(ld.dot(book) + 0.5 * ld.dot(deal))
}

/// Excess execution cost `κ(δq) = ½δqᵀΛδq` over marginal (mid) execution.
pub fn excess_cost(dq: &Vector, lambda: &ImpactMatrix) -> Result<f64> {
    lambda.cost(dq)
}

/// `Y_{n+1} = Y_n + q_n·(P_{n+1} − P_n) − κ(q_{n+1} − q_n)` under `Λ_{n+1}`.
pub fn wealth_step(
    wealth: f64,
    q_now: &Vector,
    p_now: &Vector,
    p_next: &Vector,
    q_next: &Vector,
    lambda_next: &ImpactMatrix,
) -> Result<f64> {
    let m = q_now.len();
    check_dim("prices", m, p_now.len())?;
    check_dim("next prices", m, p_next.len())?;
    check_dim("next holdings", m, q_next.len())?;
    let gain = q_now.dot(&(p_next - p_now));
    let kappa = excess_cost(&(q_next - q_now), lambda_next)?;
    let y = wealth + gain - kappa;
    if !y.is_finite() {
        return Err(Error::NonFinite("wealth"));
    }
    Ok(y)
}

/// `max |total − Σown − Σcross|`, relative to the largest term.
pub fn decomposition_residual(r: &PortfolioCostReport) -> f64 {
    let own: f64 = r.own.iter().map(|(_, v)| v).sum();
    let cross: f64 = r.cross.iter().map(|(_, _, v)| v).sum();
    let scale = r
        .own
        .iter()
        .map(|(_, v)| v.abs())
        .chain(r.cross.iter().map(|(_, _, v)| v.abs()))
        .fold(r.total.abs(), f64::max);
    if scale == 0.0 {
        0.0
    } else {
        (r.total - own - cross).abs() / scale
    }
}
