//! Tracking error and jerk.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::pose::Pose3;

/// RMSE and standard deviation of per-sample errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub std: f64,
}

impl ErrorStats {
    pub fn from_samples(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self::default();
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let ms = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        Self { rmse: ms.sqrt(), std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingError {
    /// Position error, meters.
    pub position: ErrorStats,
    /// Geodesic orientation error, radians.
    pub rotation: ErrorStats,
}

/// Per-sample position and rotation errors over both hands, in tick order.
pub fn error_samples(reference: &[(Pose3, Pose3)], actual: &[(Pose3, Pose3)]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    if reference.len() != actual.len() {
        return Err(EvalError::LengthMismatch(reference.len(), actual.len()));
    }
    let mut p = Vec::with_capacity(2 * reference.len());
    let mut r = Vec::with_capacity(2 * reference.len());
    for (a, b) in reference.iter().zip(actual) {
        for (x, y) in [(&a.0, &b.0), (&a.1, &b.1)] {
            p.push((x.position - y.position).norm());
            r.push(x.rotation_distance(y));
        }
    }
    Ok((p, r))
}

/// RMSE of the Euclidean position error and of the geodesic rotation angle,
/// pooled over ticks and both hands.
pub fn tracking_error(reference: &[(Pose3, Pose3)], actual: &[(Pose3, Pose3)]) -> Result<TrackingError, EvalError> {
    let (p, r) = error_samples(reference, actual)?;
    Ok(TrackingError { position: ErrorStats::from_samples(&p), rotation: ErrorStats::from_samples(&r) })
}

/// Squared backward-difference jerk `(p_t - 3p_{t-1} + 3p_{t-2} - p_{t-3}) / dt³`
/// for every sample of every series.
pub fn jerk_squares(series: &[&[Vector3<f64>]], dt: f64) -> Result<Vec<f64>, EvalError> {
    if dt <= 0.0 || dt.is_nan() {
        return Err(EvalError::BadTimestep(dt));
    }
    let mut out = Vec::new();
    for s in series {
        if s.len() < 4 {
            return Err(EvalError::TooFewSamples(s.len()));
        }
        let dt3 = dt * dt * dt;
        out.extend(s.windows(4).map(|w| ((w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]) / dt3).norm_squared()));
    }
    Ok(out)
}

/// Root mean square of the jerk magnitude over time and over every series (hands).
pub fn rms_jerk(series: &[&[Vector3<f64>]], dt: f64) -> Result<f64, EvalError> {
    let sq = jerk_squares(series, dt)?;
    if sq.is_empty() {
        return Err(EvalError::TooFewSamples(0));
    }
    Ok((sq.iter().sum::<f64>() / sq.len() as f64).sqrt())
}
