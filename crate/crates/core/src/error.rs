use thiserror::Error;

/// Errors raised by the toolkit. Failed verification checks are reported as
/// data (verdicts), not as errors; these variants mean a computation could not
/// be carried out.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-real or repeated spectrum: {0}")]
    NonRealSpectrum(String),
    #[error("zero characteristic speed {speed:e} violates strict hyperbolicity at the endstate")]
    ZeroCharacteristic { speed: f64 },
    #[error("manifold dimension ell={ell} exceeds i-n={excess} for an overcompressive candidate")]
    InconsistentEll { ell: usize, excess: i64 },
    #[error("viscosity matrix is singular at u={0:?}")]
    SingularViscosity(Vec<f64>),
    #[error("no connecting profile found (best boundary mismatch {mismatch:e})")]
    NoConnection { mismatch: f64 },
    #[error("connection is not transverse: intersection dimension {found}, expected {expected}")]
    NonTransverse { found: usize, expected: usize },
    #[error("profile continuation failed: {0}")]
    ContinuationFailed(String),
    #[error("lambda={re}{im:+}i lies on or left of the essential spectrum ({reason})")]
    EssentialSpectrum { re: f64, im: f64, reason: String },
    #[error("step size underflow while integrating at x={x}")]
    StiffIntegration { x: f64 },
    #[error("phase increment stayed above pi/2 after {samples} contour samples")]
    PhaseJump { samples: usize },
    #[error("argument outside the valid domain: {0}")]
    DomainError(String),
    #[error("tabulated function is not nonincreasing on [0, inf) near y={y}")]
    NotMonotone { y: f64 },
    #[error("adaptive quadrature did not converge (estimated error {error:e})")]
    QuadratureFailure { error: f64 },
    #[error("solution blew up at t={t}: sup norm {norm:e}")]
    BlowUp { t: f64, norm: f64 },
    #[error("time step underflow at t={t}")]
    StepUnderflow { t: f64 },
    #[error("phase fixed-point iteration diverged after {iterations} iterations (last change {change:e})")]
    FixedPointDivergence { iterations: usize, change: f64 },
    #[error("mass-distribution system is rank deficient (rank {rank} < {expected})")]
    RankDeficient { rank: usize, expected: usize },
    #[error("orthogonality residual {residual:e} exceeds tolerance {tol:e}")]
    OrthogonalityViolation { residual: f64, tol: f64 },
    #[error("operation requires a different shock kind: {0}")]
    WrongKind(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
