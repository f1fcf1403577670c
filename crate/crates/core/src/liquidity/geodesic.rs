use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::metric::levi_civita;
use crate::error::{Error, Result};
use crate::geometry::{check_chart, check_dim, Chart, FormKind, QuadraticForm, StatePoint, TangentMove, Tolerances};
use crate::linalg::{Matrix, Vector};

/// A metric defined at every state of a chart.
pub trait MetricField {
    fn chart(&self) -> &str;
    fn dim(&self) -> usize;
    fn metric(&self, x: &[f64]) -> Result<Matrix>;
}

/// Adapts a closure `x ↦ g(x)` into a [`MetricField`].
pub struct FnMetricField<F> {
    chart: String,
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Matrix> FnMetricField<F> {
    pub fn new(chart: &Chart, f: F) -> Self {
        Self {
            chart: chart.id().to_string(),
            dim: chart.dim(),
            f,
        }
    }
}

impl<F: Fn(&[f64]) -> Matrix> MetricField for FnMetricField<F> {
    fn chart(&self) -> &str {
        &self.chart
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn metric(&self, x: &[f64]) -> Result<Matrix> {
        Ok((self.f)(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicOptions {
    /// Number of RK4 steps over `t ∈ [0, 1]`.
    pub steps: usize,
    /// Central-difference step per coordinate for metric derivatives.
    pub fd_steps: Vec<f64>,
}

fn acceleration(field: &dyn MetricField, x: &Vector, v: &Vector, fd: &[f64]) -> Result<Vector> {
    let d = x.len();
    let g = field.metric(x.as_slice())?;
    let mut dg = Vec::with_capacity(d);
    let mut p = x.clone();
    for i in 0..d {
        p[i] = x[i] + fd[i];
        let up = field.metric(p.as_slice())?;
        p[i] = x[i] - fd[i];
        let dn = field.metric(p.as_slice())?;
        p[i] = x[i];
        dg.push((up - dn) / (2.0 * fd[i]));
    }
    let form = QuadraticForm::from_matrix(field.chart(), g, FormKind::Penalty, &Tolerances::default())?;
    let conn = levi_civita(&form, &dg)?;
    let mut a = Vector::zeros(d);
    for k in 0..d {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += conn.get(k, i, j) * v[i] * v[j];
            }
        }
        a[k] = -s;
    }
    Ok(a)
}

/// Integrates `γ̈ + C(γ)(γ̇, γ̇) = 0` from `x0` with initial velocity `v0`
/// over `t ∈ [0, 1]` with fixed-step RK4, returning `steps + 1` points.
pub fn geodesic_integrate(
    field: &dyn MetricField,
    x0: &StatePoint,
    v0: &TangentMove,
    opts: &GeodesicOptions,
) -> Result<Vec<StatePoint>> {
    check_chart("initial state", field.chart(), x0.chart())?;
    check_chart("initial velocity", field.chart(), v0.chart())?;
    let d = field.dim();
    check_dim("initial state", d, x0.dim())?;
    check_dim("initial velocity", d, v0.dim())?;
    check_dim("finite-difference steps", d, opts.fd_steps.len())?;
    if opts.steps == 0 {
        return Err(Error::invalid("geodesic integration needs at least one step"));
    }
    if opts.fd_steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::invalid("finite-difference steps must be positive"));
    }
    let h = 1.0 / opts.steps as f64;
    let mut x = x0.values().clone();
    let mut v = v0.delta().clone();
    let mut path = Vec::with_capacity(opts.steps + 1);
    path.push(x0.clone());
    for n in 0..opts.steps {
        let fail = |e: Error| Error::Geodesic {
            step: n,
            t: n as f64 * h,
            reason: alloc::format!("{e}"),
        };
        let acc = |x: &Vector, v: &Vector| acceleration(field, x, v, &opts.fd_steps).map_err(fail);
        let k1x = v.clone();
        let k1v = acc(&x, &v)?;
        let x2 = &x + &k1x * (0.5 * h);
        let v2 = &v + &k1v * (0.5 * h);
        let k2x = v2.clone();
        let k2v = acc(&x2, &v2)?;
        let x3 = &x + &k2x * (0.5 * h);
        let v3 = &v + &k2v * (0.5 * h);
        let k3x = v3.clone();
        let k3v = acc(&x3, &v3)?;
        let x4 = &x + &k3x * h;
        let v4 = &v + &k3v * h;
        let k4x = v4.clone();
        let k4v = acc(&x4, &v4)?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
        if x.iter().any(|c| !c.is_finite()) {
            return Err(fail(Error::NonFinite("geodesic state")));
        }
        path.push(StatePoint::raw(field.chart(), x.clone()));
    }
    Ok(path)
}
