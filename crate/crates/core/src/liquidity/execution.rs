use alloc::vec::Vec;

use super::metric::require_pd;
use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, QuadraticForm, StatePoint, TangentMove};
use crate::linalg::{Matrix, Vector};

/// Discrete execution energy `½ Σ (x_{n+1}−x_n)ᵀ g(x_n) (x_{n+1}−x_n)`.
///
/// `metrics[n]` is the penalty at `path[n]`; extra trailing metrics are ignored.
pub fn execution_energy(path: &[StatePoint], metrics: &[QuadraticForm]) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::invalid("an execution path needs at least two points"));
    }
    if metrics.len() < path.len() - 1 {
        return Err(Error::DimensionMismatch {
            context: "metrics along path",
            expected: path.len() - 1,
            found: metrics.len(),
        });
    }
    let mut e = 0.0;
    for n in 0..path.len() - 1 {
        let step = path[n].displacement_to(&path[n + 1])?;
        e += 0.5 * metrics[n].eval(&step)?;
    }
    Ok(e)
}

/// Splits `Δx` into `n` equal steps; under a frozen penalty this schedule
/// attains the minimal energy `‖Δx‖²_g / (2n)`.
pub fn equal_cost_split(dx: &TangentMove, g: &QuadraticForm, n: usize) -> Result<(Vec<TangentMove>, f64)> {
    if n < 1 {
        return Err(Error::invalid("the number of execution steps must be at least one"));
    }
    let energy = g.eval(dx)? / (2.0 * n as f64);
    let step = dx.scaled(1.0 / n as f64);
    Ok((alloc::vec![step; n], energy))
}

/// `½ (x − x_last)ᵀ g (x − x_last)`.
pub fn trigger_distance(x: &StatePoint, x_last: &StatePoint, g: &QuadraticForm) -> Result<f64> {
    let mv = x_last.displacement_to(x)?;
    Ok(0.5 * g.eval(&mv)?)
}

/// Fires when the liquidity distance since the last rebalance reaches `l_trig`.
pub fn rebalance_trigger(x: &StatePoint, x_last: &StatePoint, g: &QuadraticForm, l_trig: f64) -> Result<bool> {
    if !(l_trig > 0.0) {
        return Err(Error::invalid("trigger level must be positive"));
    }
    Ok(trigger_distance(x, x_last, g)? >= l_trig)
}

/// Triangular factor `R` with `g = RᵀR`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    chart: alloc::string::String,
    r: Matrix,
}

impl Whitening {
    pub fn new(g: &QuadraticForm) -> Result<Self> {
        require_pd(g.matrix(), "penalty")?;
        let chol = g.matrix().clone().cholesky().ok_or(Error::NotPd {
            what: "penalty",
            min_eigenvalue: 0.0,
        })?;
        Ok(Self {
            chart: g.chart().into(),
            r: chol.l().transpose(),
        })
    }

    pub fn factor(&self) -> &Matrix {
        &self.r
    }

    /// `u = R δx`.
    pub fn whiten(&self, mv: &TangentMove) -> Result<Vector> {
        check_chart("tangent move", &self.chart, mv.chart())?;
        check_dim("tangent move", self.r.nrows(), mv.dim())?;
        Ok(&self.r * mv.delta())
    }

    /// `δx = R⁻¹ u`.
    pub fn unwhiten(&self, u: &Vector) -> Result<TangentMove> {
        check_dim("whitened move", self.r.nrows(), u.len())?;
        let dx = self
            .r
            .solve_upper_triangular(u)
            .ok_or_else(|| Error::Singular {
                what: "whitening factor",
                detail: "zero pivot".into(),
            })?;
        Ok(TangentMove::raw(&self.chart, dx))
    }
}

/// Whitened displacements `u = R δx` for each move, with `g = RᵀR`.
pub fn whiten_displacement(g: &QuadraticForm, moves: &[TangentMove]) -> Result<Vec<Vector>> {
    let w = Whitening::new(g)?;
    moves.iter().map(|m| w.whiten(m)).collect()
}
