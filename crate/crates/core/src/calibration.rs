//! Identification of connection coefficients from instrument Greeks and
//! quadratic targets, and direct fitting of empirical quadratic targets.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{
    check_chart, check_dim, covariant_hessian, Connection, FormKind, Gradient, QuadraticForm, TangentMove, Tolerances,
};
use crate::linalg::{Matrix, Vector};

/// Relative singular-value cutoff for the minimum-norm convention.
pub const MIN_NORM_CUTOFF: f64 = 1e-12;

/// One calibration instrument at the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInstrument {
    pub gradient: Gradient,
    pub baseline: QuadraticForm,
    pub target: QuadraticForm,
    pub weight: f64,
}

impl CalibrationInstrument {
    pub fn new(gradient: Gradient, baseline: QuadraticForm, target: QuadraticForm, weight: f64) -> Result<Self> {
        check_chart("baseline hessian", gradient.chart(), baseline.chart())?;
        check_chart("target hessian", gradient.chart(), target.chart())?;
        check_dim("baseline hessian", gradient.dim(), baseline.dim())?;
        check_dim("target hessian", gradient.dim(), target.dim())?;
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::invalid("instrument weights must be finite and nonnegative"));
        }
        Ok(Self {
            gradient,
            baseline,
            target,
            weight,
        })
    }
}

/// Stacked design `𝒢` (rows are gradients) and right-hand side
/// `b_r = V_{ij,r} - H★_{ij,r}` for one index pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSystem {
    pub design: Matrix,
    pub rhs: Vector,
}

fn design_matrix(instruments: &[CalibrationInstrument]) -> Result<Matrix> {
    let first = instruments
        .first()
        .ok_or_else(|| Error::invalid("at least one calibration instrument is required"))?;
    let d = first.gradient.dim();
    let mut g = Matrix::zeros(instruments.len(), d);
    for (r, inst) in instruments.iter().enumerate() {
        check_chart("calibration instrument", first.gradient.chart(), inst.gradient.chart())?;
        check_dim("calibration instrument", d, inst.gradient.dim())?;
        g.row_mut(r).copy_from(&inst.gradient.values().transpose());
    }
    Ok(g)
}

fn rhs_vector(instruments: &[CalibrationInstrument], i: usize, j: usize) -> Vector {
    Vector::from_iterator(
        instruments.len(),
        instruments
            .iter()
            .map(|inst| inst.baseline.matrix()[(i, j)] - inst.target.matrix()[(i, j)]),
    )
}

pub fn build_calibration_system(instruments: &[CalibrationInstrument], i: usize, j: usize) -> Result<CalibrationSystem> {
    let design = design_matrix(instruments)?;
    let d = design.ncols();
    if i >= d || j >= d {
        return Err(Error::invalid(format!("index pair ({i},{j}) outside dimension {d}")));
    }
    Ok(CalibrationSystem {
        design,
        rhs: rhs_vector(instruments, i, j),
    })
}

/// Closed-form solve of a 2×2 design `[[Δ₁, Vega₁], [Δ₂, Vega₂]]`.
///
/// Fails when `|D| ≤ tol·‖𝒢‖²_F` with `D = Δ₁Vega₂ − Δ₂Vega₁`.
pub fn solve_two_instrument(design: &Matrix, rhs: &Vector, tol: f64) -> Result<[f64; 2]> {
    check_dim("two-instrument design rows", 2, design.nrows())?;
    check_dim("two-instrument design columns", 2, design.ncols())?;
    check_dim("two-instrument right-hand side", 2, rhs.len())?;
    let (d1, v1, d2, v2) = (design[(0, 0)], design[(0, 1)], design[(1, 0)], design[(1, 1)]);
    let det = d1 * v2 - d2 * v1;
    let scale = design.norm_squared();
    if !(det.abs() > tol * scale) {
        return Err(Error::Singular {
            what: "two-instrument design",
            detail: format!("determinant {det:.3e}"),
        });
    }
    let (b1, b2) = (rhs[0], rhs[1]);
    Ok([(b1 * v2 - b2 * v1) / det, (d1 * b2 - d2 * b1) / det])
}

/// Solution of one weighted ridge problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub u: Vector,
    /// `‖𝒢u − b‖_W`.
    pub residual: f64,
    /// `min_u ‖𝒢u − b‖_W`.
    pub min_residual: f64,
}

/// Factorization of `W^{1/2}𝒢` shared by every right-hand side.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    sqrt_w: Vector,
    design: Matrix,
    u: Matrix,
    v_t: Matrix,
    sv: Vector,
    eta: f64,
    rank: usize,
}

impl RidgeSolver {
    pub fn new(design: &Matrix, weights: &[f64], eta: f64) -> Result<Self> {
        check_dim("weights", design.nrows(), weights.len())?;
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if weights.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("all calibration weights are zero"));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid("ridge parameter must be finite and nonnegative"));
        }
        let sqrt_w = Vector::from_iterator(weights.len(), weights.iter().map(|w| libm::sqrt(*w)));
        let mut a = design.clone();
        for r in 0..a.nrows() {
            a.row_mut(r).scale_mut(sqrt_w[r]);
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
        let rank = svd
            .singular_values
            .iter()
            .filter(|&&s| s > MIN_NORM_CUTOFF * smax && s > 0.0)
            .count();
        Ok(Self {
            sqrt_w,
            design: design.clone(),
            u: svd.u.expect("u requested"),
            v_t: svd.v_t.expect("v_t requested"),
            sv: svd.singular_values,
            eta,
            rank,
        })
    }

    /// Condition number of `𝒢ᵀW𝒢 + ηI` (infinite when singular).
    pub fn condition(&self) -> f64 {
        let d = self.design.ncols();
        let mut ev: Vec<f64> = self.sv.iter().map(|s| s * s + self.eta).collect();
        while ev.len() < d {
            ev.push(self.eta);
        }
        let max = ev.iter().fold(0.0_f64, |m, v| m.max(*v));
        let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    pub fn solve(&self, rhs: &Vector) -> Result<RidgeSolution> {
        check_dim("right-hand side", self.design.nrows(), rhs.len())?;
        let c = rhs.component_mul(&self.sqrt_w);
        let smax = self.sv.iter().fold(0.0_f64, |m, v| m.max(*v));
        let mut u = Vector::zeros(self.design.ncols());
        let mut projected = Vector::zeros(c.len());
        for (k, &s) in self.sv.iter().enumerate() {
            let coef = self.u.column(k).dot(&c);
            let significant = s > MIN_NORM_CUTOFF * smax && s > 0.0;
            if significant {
                projected += self.u.column(k) * coef;
            }
            let factor = if self.eta > 0.0 {
                s / (s * s + self.eta)
            } else if significant {
                1.0 / s
            } else {
                0.0
            };
            if factor != 0.0 {
                u += self.v_t.row(k).transpose() * (coef * factor);
            }
        }
        let fitted = (&self.design * &u - rhs).component_mul(&self.sqrt_w);
        Ok(RidgeSolution {
            residual: fitted.norm(),
            min_residual: (c - projected).norm(),
            u,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }
}

/// `u = (𝒢ᵀW𝒢 + ηI)⁻¹𝒢ᵀWb`, or the minimum-norm least-squares solution when `η = 0`.
pub fn solve_ridge(design: &Matrix, rhs: &Vector, weights: &[f64], eta: f64) -> Result<RidgeSolution> {
    RidgeSolver::new(design, weights, eta)?.solve(rhs)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibrationOptions {
    /// Ridge parameter; 0 selects the minimum-norm convention.
    pub eta: f64,
    /// Overrides the per-instrument weights.
    pub weights: Option<Vec<f64>>,
    /// Index pairs to calibrate; all `i ≤ j` when absent. Other slots stay zero.
    pub pairs: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairResidual {
    pub i: usize,
    pub j: usize,
    pub residual: f64,
    pub min_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub connection: Connection,
    pub residuals: Vec<PairResidual>,
    /// Condition number of `𝒢ᵀW𝒢 + ηI`.
    pub condition: f64,
    pub rank: usize,
}

/// Fits the connection so that covariant Hessians match the instruments'
/// targets in weighted least squares, one index pair at a time.
pub fn calibrate_connection(instruments: &[CalibrationInstrument], options: &CalibrationOptions) -> Result<CalibrationResult> {
    let design = design_matrix(instruments)?;
    let d = design.ncols();
    let weights: Vec<f64> = match &options.weights {
        Some(w) => w.clone(),
        None => instruments.iter().map(|i| i.weight).collect(),
    };
    let solver = RidgeSolver::new(&design, &weights, options.eta)?;
    let pairs: Vec<(usize, usize)> = match &options.pairs {
        Some(p) => p.clone(),
        None => (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect(),
    };
    let mut conn = Connection::zeros_raw(instruments[0].gradient.chart(), d);
    let mut residuals = Vec::with_capacity(pairs.len());
    for (i, j) in pairs {
        if i >= d || j >= d {
            return Err(Error::invalid(format!("index pair ({i},{j}) outside dimension {d}")));
        }
        let sol = solver.solve(&rhs_vector(instruments, i, j))?;
        for k in 0..d {
            conn.set(k, i, j, sol.u[k]);
        }
        residuals.push(PairResidual {
            i,
            j,
            residual: sol.residual,
            min_residual: sol.min_residual,
        });
    }
    Ok(CalibrationResult {
        connection: conn,
        residuals,
        condition: solver.condition(),
        rank: solver.rank(),
    })
}

/// Covariant Hessians of every instrument under a fitted connection.
pub fn adjusted_hessians(instruments: &[CalibrationInstrument], conn: &Connection) -> Result<Vec<QuadraticForm>> {
    instruments
        .iter()
        .map(|i| covariant_hessian(&i.baseline, conn, &i.gradient))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalFit {
    pub hessian: QuadraticForm,
    pub intercept: f64,
    /// Condition number of the column-equilibrated design.
    pub condition: f64,
}

/// Least-squares fit of `c + ½ H_{ij} δx^i δx^j` to observed second-order
/// residuals `δV − V_i δx^i`.
pub fn fit_empirical_target(moves: &[TangentMove], residuals: &[f64]) -> Result<EmpiricalFit> {
    check_dim("residuals", moves.len(), residuals.len())?;
    let first = moves
        .first()
        .ok_or_else(|| Error::invalid("no moves supplied for the empirical fit"))?;
    let d = first.dim();
    let p = d * (d + 1) / 2;
    let n = moves.len();
    if n < p + 1 {
        return Err(Error::invalid(format!(
            "empirical fit needs at least {} samples, got {n}",
            p + 1
        )));
    }
    let mut x = Matrix::zeros(n, p + 1);
    for (r, mv) in moves.iter().enumerate() {
        check_chart("tangent move", first.chart(), mv.chart())?;
        check_dim("tangent move", d, mv.dim())?;
        let dx = mv.delta();
        let mut c = 0;
        for i in 0..d {
            for j in i..d {
                x[(r, c)] = if i == j { 0.5 * dx[i] * dx[i] } else { dx[i] * dx[j] };
                c += 1;
            }
        }
        x[(r, p)] = 1.0;
    }
    let mut scales = Vec::with_capacity(p + 1);
    for c in 0..=p {
        let s = x.column(c).norm();
        let s = if s > 0.0 { s } else { 1.0 };
        x.column_mut(c).scale_mut(1.0 / s);
        scales.push(s);
    }
    let svd = x.svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let smin = svd.singular_values.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= 1e12) {
        return Err(Error::IllConditioned {
            what: "empirical quadratic design",
            condition,
        });
    }
    let y = Vector::from_column_slice(residuals);
    let coef = svd.solve(&y, 0.0).map_err(|e| Error::Singular {
        what: "empirical quadratic design",
        detail: e.into(),
    })?;
    let mut h = Matrix::zeros(d, d);
    let mut c = 0;
    for i in 0..d {
        for j in i..d {
            let v = coef[c] / scales[c];
            h[(i, j)] = v;
            h[(j, i)] = v;
            c += 1;
        }
    }
    Ok(EmpiricalFit {
        hessian: QuadraticForm::from_matrix(first.chart(), h, FormKind::HessianTarget, &Tolerances::default())?,
        intercept: coef[p] / scales[p],
        condition,
    })
}
