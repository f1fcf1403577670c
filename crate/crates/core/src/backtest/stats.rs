use crate::error::{Error, Result};
use crate::geometry::check_dim;

/// Accuracy of a predicted series against a benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mae: f64,
    pub rmse: f64,
    pub pearson: f64,
}

/// Mean absolute and root-mean-square error.
pub fn mae_rmse(pred: &[f64], actual: &[f64]) -> Result<(f64, f64)> {
    check_dim("predicted series", actual.len(), pred.len())?;
    if actual.len() < 2 {
        return Err(Error::invalid("error statistics need at least two observations"));
    }
    let n = actual.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, libm::sqrt(sq / n)))
}

/// Pearson correlation; undefined when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_dim("correlated series", x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::invalid("correlation needs at least two observations"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::Undefined("Pearson correlation of a constant series"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

pub fn error_stats(pred: &[f64], actual: &[f64]) -> Result<ErrorStats> {
    let (mae, rmse) = mae_rmse(pred, actual)?;
    Ok(ErrorStats {
        mae,
        rmse,
        pearson: pearson(pred, actual)?,
    })
}
