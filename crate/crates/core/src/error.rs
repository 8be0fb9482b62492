use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: invalid disease label `{value}` (expected 0 or 1)")]
    InvalidDiseaseLabel { row: usize, value: String },
    #[error("row {row}: non-numeric marker value `{value}`")]
    NonNumericMarker { row: usize, value: String },
    #[error("input file is empty")]
    EmptyFile,
    #[error("stratum `{0}` has no controls")]
    NoControls(String),
    #[error("stratum `{0}` has no cases")]
    NoCases(String),
    #[error("unknown stratum `{0}`")]
    UnknownStratum(String),
    #[error("stratum `{0}`: empirical disease prevalence is {1}, logit undefined")]
    DegeneratePrevalence(String, f64),
    #[error("prevalence {0} outside the open interval (0,1)")]
    InvalidPrevalence(f64),
    #[error("stratum weights sum to {0}, expected 1")]
    WeightsNotNormalized(f64),
    #[error("response is constant; logistic regression is undefined")]
    ConstantResponse,
    #[error("complete separation detected (|beta| exceeded {0})")]
    Separation(f64),
    #[error("IRLS failed to converge after {0} iterations")]
    GlmNonConvergence(usize),
    #[error("optimizer failed to converge (gradient norm {0:.3e})")]
    OptimNonConvergence(f64),
    #[error("quadrature did not reach requested tolerance")]
    QuadratureFailure,
    #[error("sample contains no cases")]
    NoCasesInSample,
    #[error("fitted G(u) is not monotone decreasing; the risk-CDF root solve is ill-posed (see risk_cdf_eml)")]
    NonMonotoneRiskModel,
    #[error("expected exactly two populations, found {0}")]
    NotTwoPopulations(usize),
    #[error("empty coefficient index set")]
    EmptyIndexSet,
    #[error("covariance submatrix is singular")]
    SingularCovariance,
    #[error("true ROC curve is not invertible")]
    RocInversionFailure,
    #[error("scenario error: {0}")]
    Scenario(String),
    #[error("{dropped} of {total} bootstrap replicates failed")]
    BootstrapFailure { dropped: usize, total: usize },
    #[error("experiment replicate failure rate {0:.1}% exceeds 5%")]
    ExperimentFailureRate(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
