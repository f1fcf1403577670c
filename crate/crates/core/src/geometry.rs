//! Charts, states, first- and second-order objects, affine connections and
//! the point-local coordinate-change machinery.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Numerical tolerances shared by the geometric objects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative asymmetry silently repaired when building a quadratic form.
    pub symmetry_repair: f64,
    /// Penalty forms may have eigenvalues down to `-psd·‖matrix‖`.
    pub psd: f64,
    /// Largest accepted condition number of a chart Jacobian.
    pub max_jacobian_condition: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry_repair: 1e-8,
            psd: 1e-10,
            max_jacobian_condition: 1e14,
        }
    }
}

/// A coordinate convention for the local market state.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    id: String,
    coords: Vec<String>,
    units: Vec<String>,
    tradable: Vec<bool>,
    positive: Vec<bool>,
}

impl Chart {
    pub fn new(id: &str, coords: &[&str], units: &[&str]) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("a chart needs at least one coordinate"));
        }
        if units.len() != coords.len() {
            return Err(Error::DimensionMismatch {
                context: "chart units",
                expected: coords.len(),
                found: units.len(),
            });
        }
        for (i, c) in coords.iter().enumerate() {
            if coords[..i].contains(c) {
                return Err(Error::invalid(format!("duplicate coordinate label `{c}`")));
            }
        }
        let d = coords.len();
        Ok(Self {
            id: id.to_string(),
            coords: coords.iter().map(|s| s.to_string()).collect(),
            units: units.iter().map(|s| s.to_string()).collect(),
            tradable: vec![false; d],
            positive: vec![false; d],
        })
    }

    /// Marks a coordinate as the price of a traded asset. Used by the FX
    /// drift diagnostic.
    pub fn with_tradable(mut self, label: &str) -> Result<Self> {
        let i = self.require(label)?;
        self.tradable[i] = true;
        Ok(self)
    }

    /// Marks a coordinate as strictly positive (spot, forward).
    pub fn with_positive(mut self, label: &str) -> Result<Self> {
        let i = self.require(label)?;
        self.positive[i] = true;
        Ok(self)
    }

    fn require(&self, label: &str) -> Result<usize> {
        self.index_of(label)
            .ok_or_else(|| Error::invalid(format!("chart `{}` has no coordinate `{label}`", self.id)))
    }

    /// Spot/ATM-vol chart with spot tradable and positive.
    pub fn spot_vol(vol_unit: &str) -> Self {
        Self::new("spot-vol", &["S", "sigma"], &["price", vol_unit])
            .and_then(|c| c.with_tradable("S"))
            .and_then(|c| c.with_positive("S"))
            .expect("static chart definition")
    }

    /// Forward/ATM-vol chart.
    pub fn forward_vol(vol_unit: &str) -> Self {
        Self::new("forward-vol", &["F", "sigma"], &["price", vol_unit])
            .and_then(|c| c.with_positive("F"))
            .expect("static chart definition")
    }

    /// Log-forward/ATM-vol chart, `z = log F`.
    pub fn log_forward_vol(vol_unit: &str) -> Self {
        Self::new("logforward-vol", &["z", "sigma"], &["dimensionless", vol_unit])
            .expect("static chart definition")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == label)
    }

    pub fn is_tradable(&self, i: usize) -> bool {
        self.tradable[i]
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.positive[i]
    }
}

pub(crate) fn check_chart(object: &'static str, expected: &str, found: &str) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::ChartMismatch {
            object,
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A point of the state manifold expressed in a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePoint {
    chart: String,
    values: Vector,
}

impl StatePoint {
    pub fn new(chart: &Chart, values: &[f64]) -> Result<Self> {
        check_dim("state point", chart.dim(), values.len())?;
        check_finite("state point", values)?;
        for (i, &v) in values.iter().enumerate() {
            if chart.is_positive(i) && v <= 0.0 {
                return Err(Error::invalid(format!(
                    "coordinate `{}` must be positive, got {v}",
                    chart.coords[i]
                )));
            }
        }
        Ok(Self {
            chart: chart.id.clone(),
            values: Vector::from_column_slice(values),
        })
    }

    pub(crate) fn raw(chart: &str, values: Vector) -> Self {
        Self {
            chart: chart.to_string(),
            values,
        }
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Displacement `other - self`.
    pub fn displacement_to(&self, other: &StatePoint) -> Result<TangentMove> {
        check_chart("state point", &self.chart, &other.chart)?;
        Ok(TangentMove {
            chart: self.chart.clone(),
            delta: &other.values - &self.values,
        })
    }
}

/// A displacement `δx` (also used for contravariant vectors such as drifts).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentMove {
    chart: String,
    delta: Vector,
}

impl TangentMove {
    pub fn new(chart: &Chart, delta: &[f64]) -> Result<Self> {
        check_dim("tangent move", chart.dim(), delta.len())?;
        check_finite("tangent move", delta)?;
        Ok(Self::raw(&chart.id, Vector::from_column_slice(delta)))
    }

    pub(crate) fn raw(chart: &str, delta: Vector) -> Self {
        Self {
            chart: chart.to_string(),
            delta,
        }
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn delta(&self) -> &Vector {
        &self.delta
    }

    pub fn dim(&self) -> usize {
        self.delta.len()
    }

    pub fn scaled(&self, a: f64) -> TangentMove {
        Self::raw(&self.chart, &self.delta * a)
    }
}

/// First derivatives `V_i` of a value function.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    chart: String,
    values: Vector,
}

impl Gradient {
    pub fn new(chart: &Chart, values: &[f64]) -> Result<Self> {
        check_dim("gradient", chart.dim(), values.len())?;
        Self::from_vector(&chart.id, Vector::from_column_slice(values))
    }

    pub(crate) fn from_vector(chart: &str, values: Vector) -> Result<Self> {
        check_finite("gradient", values.as_slice())?;
        Ok(Self {
            chart: chart.to_string(),
            values,
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    /// Hessians and quadratic P&L targets; any symmetric matrix.
    HessianTarget,
    /// Penalties and metrics; positive semidefinite.
    Penalty,
}

/// A symmetric bilinear form bound to a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    chart: String,
    matrix: Matrix,
    kind: FormKind,
}

impl QuadraticForm {
    pub fn new(chart: &Chart, matrix: Matrix, kind: FormKind) -> Result<Self> {
        check_dim("quadratic form", chart.dim(), matrix.nrows())?;
        Self::from_matrix(&chart.id, matrix, kind, &Tolerances::default())
    }

    pub fn hessian(chart: &Chart, matrix: Matrix) -> Result<Self> {
        Self::new(chart, matrix, FormKind::HessianTarget)
    }

    pub fn penalty(chart: &Chart, matrix: Matrix) -> Result<Self> {
        Self::new(chart, matrix, FormKind::Penalty)
    }

    pub fn zeros(chart: &Chart, kind: FormKind) -> Self {
        let d = chart.dim();
        Self {
            chart: chart.id.clone(),
            matrix: Matrix::zeros(d, d),
            kind,
        }
    }

    /// Builds a form from a raw matrix: symmetrizes small asymmetries and
    /// checks positivity for penalties.
    pub fn from_matrix(chart: &str, matrix: Matrix, kind: FormKind, tol: &Tolerances) -> Result<Self> {
        if !linalg::all_finite(&matrix) {
            return Err(Error::NonFinite("quadratic form"));
        }
        let matrix = linalg::symmetrize(&matrix, tol.symmetry_repair)?;
        if kind == FormKind::Penalty {
            let ev = linalg::sym_eigenvalues(&matrix);
            let norm = ev.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            let min = ev.first().copied().unwrap_or(0.0);
            if min < -tol.psd * norm {
                return Err(Error::NotPsd {
                    what: "penalty form",
                    min_eigenvalue: min,
                });
            }
        }
        Ok(Self {
            chart: chart.to_string(),
            matrix,
            kind,
        })
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn kind(&self) -> FormKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `δxᵀ A δx`.
    pub fn eval(&self, mv: &TangentMove) -> Result<f64> {
        check_chart("tangent move", &self.chart, &mv.chart)?;
        check_dim("tangent move", self.dim(), mv.dim())?;
        Ok(mv.delta.dot(&(&self.matrix * &mv.delta)))
    }

    /// Multiplies the matrix by `a`; penalties require `a ≥ 0`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        if self.kind == FormKind::Penalty && a < 0.0 {
            return Err(Error::invalid("penalties can only be scaled by a nonnegative factor"));
        }
        Ok(Self {
            chart: self.chart.clone(),
            matrix: &self.matrix * a,
            kind: self.kind,
        })
    }

    /// Same matrix, reinterpreted with a different kind.
    pub fn with_kind(&self, kind: FormKind) -> Result<Self> {
        Self::from_matrix(&self.chart, self.matrix.clone(), kind, &Tolerances::default())
    }
}

#[inline]
pub(crate) fn pair_index(d: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * d - i - 1) / 2 + j
}

/// Torsion-free affine connection coefficients `C^k_{ij}`.
///
/// Only the `i ≤ j` half is stored, so lower-index symmetry holds by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Connection {
    chart: String,
    dim: usize,
    coeffs: Vec<f64>,
}

impl Connection {
    pub fn zeros(chart: &Chart) -> Self {
        Self::zeros_raw(&chart.id, chart.dim())
    }

    pub(crate) fn zeros_raw(chart: &str, dim: usize) -> Self {
        let p = dim * (dim + 1) / 2;
        Self {
            chart: chart.to_string(),
            dim,
            coeffs: vec![0.0; dim * p],
        }
    }

    /// Builds a connection from `f(k, i, j)`, evaluated for `i ≤ j` only.
    pub fn from_fn(chart: &Chart, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut c = Self::zeros(chart);
        c.fill(f);
        if c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("connection"));
        }
        Ok(c)
    }

    pub(crate) fn fill(&mut self, f: impl Fn(usize, usize, usize) -> f64) {
        let d = self.dim;
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    self.set(k, i, j, f(k, i, j));
                }
            }
        }
    }

    pub fn chart(&self) -> &str {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn slot(&self, k: usize, i: usize, j: usize) -> usize {
        let p = self.dim * (self.dim + 1) / 2;
        k * p + pair_index(self.dim, i, j)
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.coeffs[self.slot(k, i, j)]
    }

    /// Sets `C^k_{ij}` (and therefore `C^k_{ji}`).
    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let s = self.slot(k, i, j);
        self.coeffs[s] = v;
    }

    /// `Σ_k C^k_{ij} V_k` as a symmetric matrix.
    pub fn contract(&self, grad: &Gradient) -> Result<Matrix> {
        check_chart("gradient", &self.chart, &grad.chart)?;
        check_dim("gradient", self.dim, grad.dim())?;
        let d = self.dim;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let s: f64 = (0..d).map(|k| self.get(k, i, j) * grad.values[k]).sum();
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Ok(m)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Largest absolute coefficient difference to another connection.
    pub fn max_abs_diff(&self, other: &Connection) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// First and second derivatives of a chart change at one point.
///
/// With `x` the source coordinates and `y` the target coordinates, the map
/// stores `∂x/∂y` (`jacobian[(i, α)] = ∂x^i/∂y^α`), its inverse `∂y/∂x`, and
/// `second[m][(α, β)] = ∂²x^m/∂y^α∂y^β`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartMapAtPoint {
    source: String,
    target: String,
    jacobian: Matrix,
    inverse: Matrix,
    second: Vec<Matrix>,
}

impl ChartMapAtPoint {
    pub fn new(source: &Chart, target: &Chart, jacobian: Matrix, second: Vec<Matrix>) -> Result<Self> {
        let d = source.dim();
        check_dim("target chart", d, target.dim())?;
        Self::build(&source.id, &target.id, d, jacobian, second)
    }

    fn build(source: &str, target: &str, d: usize, jacobian: Matrix, second: Vec<Matrix>) -> Result<Self> {
        check_dim("chart jacobian rows", d, jacobian.nrows())?;
        check_dim("chart jacobian columns", d, jacobian.ncols())?;
        check_dim("chart second derivatives", d, second.len())?;
        let tol = Tolerances::default();
        let inverse = linalg::checked_inverse(&jacobian, "chart jacobian", tol.max_jacobian_condition)?;
        let second = second
            .into_iter()
            .map(|m| {
                check_dim("chart second derivatives", d, m.nrows())?;
                linalg::symmetrize(&m, tol.symmetry_repair)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source: source.to_string(),
            target: target.to_string(),
            jacobian,
            inverse,
            second,
        })
    }

    /// A linear chart change (no second-derivative term).
    pub fn linear(source: &Chart, target: &Chart, jacobian: Matrix) -> Result<Self> {
        let d = source.dim();
        Self::new(source, target, jacobian, vec![Matrix::zeros(d, d); d])
    }

    pub fn identity(chart: &Chart) -> Self {
        let d = chart.dim();
        Self::linear(chart, chart, Matrix::identity(d, d)).expect("identity is invertible")
    }

    /// Spot to forward with frozen carry, `S = F / growth` where
    /// `growth = exp((r_d - r_f) T)`.
    pub fn spot_to_forward(source: &Chart, target: &Chart, spot_index: usize, growth: f64) -> Result<Self> {
        if !(growth > 0.0) || !growth.is_finite() {
            return Err(Error::invalid("carry growth factor must be positive"));
        }
        let d = source.dim();
        let mut j = Matrix::identity(d, d);
        j[(spot_index, spot_index)] = 1.0 / growth;
        Self::linear(source, target, j)
    }

    /// Forward to log-forward, `F = exp(z)`, evaluated at forward level `forward`.
    pub fn forward_to_log_forward(source: &Chart, target: &Chart, index: usize, forward: f64) -> Result<Self> {
        if !(forward > 0.0) {
            return Err(Error::invalid("forward must be positive"));
        }
        let d = source.dim();
        let mut j = Matrix::identity(d, d);
        j[(index, index)] = forward;
        let mut second = vec![Matrix::zeros(d, d); d];
        second[index][(index, index)] = forward;
        Self::new(source, target, j, second)
    }

    /// Log-forward to forward, `z = log F`, evaluated at forward level `forward`.
    pub fn log_forward_to_forward(source: &Chart, target: &Chart, index: usize, forward: f64) -> Result<Self> {
        if !(forward > 0.0) {
            return Err(Error::invalid("forward must be positive"));
        }
        let d = source.dim();
        let mut j = Matrix::identity(d, d);
        j[(index, index)] = 1.0 / forward;
        let mut second = vec![Matrix::zeros(d, d); d];
        second[index][(index, index)] = -1.0 / (forward * forward);
        Self::new(source, target, j, second)
    }

    /// The reverse map `y → x` at the same point.
    pub fn inverse(&self) -> Self {
        let d = self.jacobian.nrows();
        // ∂²y^a/∂x^i∂x^j = -(∂y^a/∂x^m) ∂²x^m/∂y^b∂y^c (∂y^b/∂x^i)(∂y^c/∂x^j)
        let k = &self.inverse;
        let mut second = vec![Matrix::zeros(d, d); d];
        for (a, out) in second.iter_mut().enumerate() {
            let mut acc = Matrix::zeros(d, d);
            for m in 0..d {
                let w = k[(a, m)];
                if w != 0.0 {
                    acc += &self.second[m] * w;
                }
            }
            *out = -(k.transpose() * acc * k);
        }
        Self::build(&self.target, &self.source, d, self.inverse.clone(), second)
            .expect("inverse of a valid chart map is valid")
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    /// `∂x/∂y`.
    pub fn jacobian(&self) -> &Matrix {
        &self.jacobian
    }

    /// `∂y/∂x`.
    pub fn inverse_jacobian(&self) -> &Matrix {
        &self.inverse
    }

    /// `∂²x^m/∂y∂y` for each source coordinate `m`.
    pub fn second(&self) -> &[Matrix] {
        &self.second
    }
}

fn check_source(object: &'static str, chart: &str, map: &ChartMapAtPoint, dim: usize) -> Result<()> {
    check_chart(object, &map.source, chart)?;
    check_dim(object, map.dim(), dim)
}

/// `H̃_{ij} = V_{ij} - Σ_k C^k_{ij} V_k`.
pub fn covariant_hessian(hess: &QuadraticForm, conn: &Connection, grad: &Gradient) -> Result<QuadraticForm> {
    check_chart("connection", &hess.chart, &conn.chart)?;
    check_chart("gradient", &hess.chart, &grad.chart)?;
    check_dim("connection", hess.dim(), conn.dim)?;
    let corr = conn.contract(grad)?;
    Ok(QuadraticForm {
        chart: hess.chart.clone(),
        matrix: &hess.matrix - corr,
        kind: FormKind::HessianTarget,
    })
}

/// `V_i δx^i + ½ H_{ij} δx^i δx^j`, minus `½ δxᵀ g δx` when a penalty is given.
pub fn quadratic_predictor(
    grad: &Gradient,
    quad: &QuadraticForm,
    mv: &TangentMove,
    penalty: Option<&QuadraticForm>,
) -> Result<f64> {
    check_chart("quadratic form", &grad.chart, &quad.chart)?;
    check_chart("tangent move", &grad.chart, &mv.chart)?;
    check_dim("tangent move", grad.dim(), mv.dim())?;
    let mut p = grad.values.dot(&mv.delta) + 0.5 * quad.eval(mv)?;
    if let Some(g) = penalty {
        check_chart("penalty", &grad.chart, &g.chart)?;
        if g.kind != FormKind::Penalty {
            return Err(Error::invalid("the penalty argument must be a penalty form"));
        }
        p -= 0.5 * g.eval(mv)?;
    }
    Ok(p)
}

/// `V_α = (∂x^i/∂y^α) V_i`.
pub fn transform_gradient(grad: &Gradient, map: &ChartMapAtPoint) -> Result<Gradient> {
    check_source("gradient", &grad.chart, map, grad.dim())?;
    Gradient::from_vector(&map.target, map.jacobian.transpose() * &grad.values)
}

/// `δy = (∂y/∂x) δx`.
pub fn transform_move(mv: &TangentMove, map: &ChartMapAtPoint) -> Result<TangentMove> {
    check_source("tangent move", &mv.chart, map, mv.dim())?;
    Ok(TangentMove::raw(&map.target, &map.inverse * &mv.delta))
}

/// Tensorial transport `Jᵀ H J` of a quadratic form (no second-derivative term).
pub fn transform_quadratic_form(q: &QuadraticForm, map: &ChartMapAtPoint) -> Result<QuadraticForm> {
    check_source("quadratic form", &q.chart, map, q.dim())?;
    let m = map.jacobian.transpose() * &q.matrix * &map.jacobian;
    QuadraticForm::from_matrix(&map.target, m, q.kind, &Tolerances::default())
}

/// Ordinary (non-tensorial) Hessian transport:
/// `V_{αβ} = J^i_α J^j_β V_{ij} + (∂²x^k/∂y^α∂y^β) V_k`.
pub fn transform_ordinary_hessian(hess: &QuadraticForm, grad: &Gradient, map: &ChartMapAtPoint) -> Result<QuadraticForm> {
    check_source("hessian", &hess.chart, map, hess.dim())?;
    check_source("gradient", &grad.chart, map, grad.dim())?;
    let mut m = map.jacobian.transpose() * &hess.matrix * &map.jacobian;
    for (k, s) in map.second.iter().enumerate() {
        m += s * grad.values[k];
    }
    QuadraticForm::from_matrix(&map.target, m, FormKind::HessianTarget, &Tolerances::default())
}

/// `Ĉ^α_{βγ} = (∂y^α/∂x^m) J^i_β J^j_γ C^m_{ij} + (∂y^α/∂x^m) ∂²x^m/∂y^β∂y^γ`.
pub fn transform_connection(conn: &Connection, map: &ChartMapAtPoint) -> Result<Connection> {
    check_source("connection", &conn.chart, map, conn.dim)?;
    let d = conn.dim;
    let j = &map.jacobian;
    let mut pulled = Vec::with_capacity(d);
    for m in 0..d {
        let mut cm = Matrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                cm[(a, b)] = conn.get(m, a, b);
            }
        }
        pulled.push(j.transpose() * cm * j + &map.second[m]);
    }
    let mut out = Connection::zeros_raw(&map.target, d);
    for a in 0..d {
        for b in 0..d {
            for c in b..d {
                let v: f64 = (0..d).map(|m| map.inverse[(a, m)] * pulled[m][(b, c)]).sum();
                out.set(a, b, c, v);
            }
        }
    }
    Ok(out)
}

/// Absolute difference between the curved quadratic predictor evaluated in
/// the source chart and in the target chart of `map`.
pub fn predictor_invariance_residual(
    grad: &Gradient,
    hess: &QuadraticForm,
    conn: &Connection,
    mv: &TangentMove,
    map: &ChartMapAtPoint,
) -> Result<f64> {
    let adj = covariant_hessian(hess, conn, grad)?;
    let p_src = quadratic_predictor(grad, &adj, mv, None)?;

    let grad_y = transform_gradient(grad, map)?;
    let hess_y = transform_ordinary_hessian(hess, grad, map)?;
    let conn_y = transform_connection(conn, map)?;
    let adj_y = covariant_hessian(&hess_y, &conn_y, &grad_y)?;
    let mv_y = transform_move(mv, map)?;
    let p_tgt = quadratic_predictor(&grad_y, &adj_y, &mv_y, None)?;
    Ok((p_src - p_tgt).abs())
}

/// Drift of the local generator after the connection adjustment:
/// `b̃^k = b^k - ½ Σ_{ij} a^{ij} C^k_{ij}`.
pub fn generator_drift_adjustment(b: &TangentMove, a: &QuadraticForm, conn: &Connection) -> Result<TangentMove> {
    check_chart("covariance", &b.chart, &a.chart)?;
    check_chart("connection", &b.chart, &conn.chart)?;
    check_dim("covariance", b.dim(), a.dim())?;
    check_dim("connection", b.dim(), conn.dim)?;
    if a.kind != FormKind::Penalty {
        // re-check positivity for covariances handed over as generic forms
        a.with_kind(FormKind::Penalty)?;
    }
    let d = b.dim();
    let mut out = b.delta.clone();
    for k in 0..d {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += a.matrix[(i, j)] * conn.get(k, i, j);
            }
        }
        out[k] -= 0.5 * s;
    }
    Ok(TangentMove::raw(&b.chart, out))
}

/// Residual `b̃^k - (r_d - r_f) x^k` for every tradable coordinate `k` of the
/// chart. Zero residuals mean the adjusted generator keeps discounted
/// tradables drifting at the carry rate.
pub fn fx_martingale_residuals(
    chart: &Chart,
    state: &StatePoint,
    adjusted_drift: &TangentMove,
    r_d: f64,
    r_f: f64,
) -> Result<Vec<(String, f64)>> {
    check_chart("state point", &chart.id, &state.chart)?;
    check_chart("drift", &chart.id, &adjusted_drift.chart)?;
    Ok((0..chart.dim())
        .filter(|&k| chart.tradable[k])
        .map(|k| {
            (
                chart.coords[k].clone(),
                adjusted_drift.delta[k] - (r_d - r_f) * state.values[k],
            )
        })
        .collect())
}
