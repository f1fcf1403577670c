//! Execution-cost geometry: impact matrices from widths and clips, least-cost
//! hedge responses, pulled-back penalties and their Levi–Civita connections,
//! execution energies, triggers, whitening and geodesics.

mod execution;
mod geodesic;
mod hedge;
mod impact;
mod metric;

use alloc::string::{String, ToString};

pub use execution::{
    equal_cost_split, execution_energy, rebalance_trigger, trigger_distance, whiten_displacement, Whitening,
};
pub use geodesic::{geodesic_integrate, FnMetricField, GeodesicOptions, MetricField};
pub use hedge::{
    build_hedge_response, closed_form_penalty, g_ell_derivatives_analytic, g_ell_derivatives_fd, least_cost_trade,
    least_cost_trade_pinv, pullback_penalty, ExposureSpec, HedgeResponse,
};
pub use impact::{
    half_spread_from_vol_width, lambda_from_clip_spread, lambda_from_width_clip, tiered_cost, tiered_lambda,
    HedgeInstrumentSpec, ImpactMatrix, TierRow, TierSpec, WidthQuote,
};
pub use metric::{default_baseline, levi_civita, regularize_penalty, require_pd, PD_THRESHOLD};

use crate::error::Result;
use crate::geometry::{FormKind, QuadraticForm, TangentMove};
use crate::linalg::Matrix;

/// A penalty form on factor moves, tagged with the liquidity bucket it was
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPenalty {
    form: QuadraticForm,
    bucket: Option<String>,
}

impl FactorPenalty {
    /// Wraps a form, checking that it is positive semidefinite.
    pub fn new(form: QuadraticForm) -> Result<Self> {
        let form = if form.kind() == FormKind::Penalty {
            form
        } else {
            form.with_kind(FormKind::Penalty)?
        };
        Ok(Self { form, bucket: None })
    }

    pub(crate) fn from_matrix(chart: &str, m: Matrix) -> Result<Self> {
        Self::new(QuadraticForm::from_matrix(
            chart,
            m,
            FormKind::Penalty,
            &crate::geometry::Tolerances::default(),
        )?)
    }

    pub fn with_bucket(mut self, bucket: &str) -> Self {
        self.bucket = Some(bucket.to_string());
        self
    }

    pub fn form(&self) -> &QuadraticForm {
        &self.form
    }

    pub fn matrix(&self) -> &Matrix {
        self.form.matrix()
    }

    pub fn chart(&self) -> &str {
        self.form.chart()
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn bucket(&self) -> Option<&str> {
        self.bucket.as_deref()
    }

    pub fn scaled(&self, a: f64) -> Result<Self> {
        Ok(Self {
            form: self.form.scaled(a)?,
            bucket: self.bucket.clone(),
        })
    }

    /// `δxᵀ g δx`.
    pub fn eval(&self, mv: &TangentMove) -> Result<f64> {
        self.form.eval(mv)
    }
}
