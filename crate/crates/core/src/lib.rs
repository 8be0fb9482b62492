//! Risk-model ROC regression with standardized markers.
//!
//! Marker values are standardized against stratum-specific control
//! reference distributions (placement values), then a logistic model in
//! the standardized marker is fit under the constraint that the implied
//! common ROC curve passes through (1,1). The crate provides three
//! estimators (empirical maximum likelihood, constrained maximum
//! likelihood, and pseudo-likelihood), ROC and risk-distribution
//! derivation from fitted models, bootstrap inference, hypothesis tests,
//! and a simulation/experiment harness.

pub mod basis;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod glm;
pub mod hypotests;
pub mod inference;
pub mod optim;
pub mod quad;
pub mod simgen;
pub mod standardize;

pub use basis::BasisSpec;
pub use dataset::{CsvSchema, DesignKind, StudyDesign, StudySample, SubjectRecord};
pub use error::{Error, Result};
pub use estimators::{
    fit_cml, fit_eml, fit_nonparametric_aroc, fit_psl, ConcaveRoc, ConcavityPolicy, EmlFit,
    Method, RiskModelFit, StepRoc,
};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, FitMode};
pub use glm::{compute_offsets, fit_logistic_offset, GlmFit, OffsetVector};
pub use hypotests::{test_roc_equality, wald_test_covariate_effect, RocEqualityMethod, TestResult};
pub use inference::{
    bootstrap_percentile_ci, evaluate_roc, risk_at, risk_cdf, risk_cdf_eml, CiResult,
};
pub use simgen::{generate_sample, scenario_truth, ControlDist, PopulationSpec, Scenario};
pub use standardize::{
    fit_reference, placement_value, standardize_sample, ReferenceSet, StandardizedSample, TieRule,
};
