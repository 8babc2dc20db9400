//! Tracking metrics and the experiment harnesses.

mod contact;
mod metrics;
mod system;
mod tracking;

pub use contact::wall_contact;
pub use metrics::{error_samples, jerk_squares, rms_jerk, tracking_error, ErrorStats, TrackingError};
pub use system::{
    run_system_suite, run_trial, trials, BackendKind, Category, SystemReport, Trial, TrialRecord, VariantSummary,
    LEFT_OF_SHIFT,
};
pub use tracking::{
    force_pulses, reference_trajectory, rollout, run_tracking_suite, Rollout, TrackingOptions, TrackingReport,
    TrajectoryReport,
};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("trajectories differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("timestep must be positive, got {0}")]
    BadTimestep(f64),
}
