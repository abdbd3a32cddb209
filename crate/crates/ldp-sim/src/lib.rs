//! Experiment harness for locally private distribution testing: trial
//! orchestration, error-rate and sample-complexity experiments, calibration
//! sweeps, and report emission.

pub mod calibrate;
pub mod config;
pub mod experiment;
pub mod instance;
pub mod report;
pub mod seed;
pub mod trial;

pub use config::{CalibrationConstants, ExperimentConfig, InstanceSpec, TestKind, ThetaSpec};
pub use experiment::{error_rates, log_log_slope, sample_complexity_curve};
pub use report::{ExperimentReport, RateInterval};
pub use trial::run_trial;
