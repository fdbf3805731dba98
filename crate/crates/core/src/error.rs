use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("target outside the closed domain at {0}")]
    TargetOutside(C64),
    #[error(
        "|tau| = {} exceeds the oscillation budget tau_max = {tau_max:.3} for this grid; \
         needs angular_nodes >= {needed_angular} and radial_nodes >= {needed_radial}",
        tau.abs()
    )]
    OscillationBudget { tau: f64, tau_max: f64, needed_angular: usize, needed_radial: usize },
    #[error("constraints unsatisfiable at this degree (achieved residual {achieved:.3e})")]
    RankDeficient { achieved: f64 },
    #[error("normalization infeasible: fitted amplitude vanishes at the normalization point; raise the degree")]
    InfeasibleNormalization,
    #[error("phase validation failed: {0}")]
    PhaseValidation(String),
    #[error("degenerate critical point at {z} (|Phi''| = {second:.3e})")]
    DegenerateCritical { z: C64, second: f64 },
    #[error("confluent interpolation points: {0}")]
    Confluent(String),
    #[error("overlapping partition regions: {0}")]
    PartitionOverlap(String),
    #[error("linear solver did not converge (relative residual {0:.3e}); the operator may be near-singular, perturb q")]
    SolverStalled(f64),
    #[error("fit residual {residual:.3e} above tolerance {tol:.3e}; increase the degree")]
    FitResidual { residual: f64, tol: f64 },
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("ill-conditioned fit (condition number {0:.3e}); widen the tau sweep")]
    IllConditioned(f64),
    #[error("layer {layer} failed: {source}")]
    Layer { layer: &'static str, source: Box<Error> },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_layer(self, layer: &'static str) -> Error {
        Error::Layer { layer, source: Box::new(self) }
    }
}
