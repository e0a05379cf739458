//! Prevalence estimation from voluntarily tested individuals.
//!
//! The population is stratified by symptom class and infection status.
//! Testing probabilities that grow with symptoms bias the raw positive rate
//! upwards; the size of that bias is measured as active information
//! `ln(p / p0)`. Depending on the missingness mechanism (MCAR, MAR, or a
//! maximum-entropy prior on unknown class shares), the bias can be removed
//! fully or partly. The crate computes the estimates, their asymptotic
//! standard errors and intervals, and checks all of it by Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod maxent;
pub mod model;
pub mod sampler;

pub use asymptotics::{CiTarget, ConfidenceInterval, IntervalReport};
pub use config::{CountTableInput, ScenarioConfig};
pub use error::{Error, Result};
pub use estimators::EstimateBundle;
pub use experiments::{CiRecord, ExperimentReport, ReportRow};
pub use maxent::SimplexSlab;
pub use model::{AsymptoticQuantities, MaxEntPrior, Mechanism, PopulationSpec, VarianceComponents};
pub use sampler::{RngStream, TestingOutcome};
