use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("adaptive quadrature on [{a}, {b}] did not reach tolerance {tol:e} (estimate {estimate:e})")]
    QuadratureFailure {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("frame undefined at the origin")]
    OriginFrame,

    #[error("no sign change of phi' on [{lo}, {hi}]")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("curve samples are not injective: {0}")]
    InjectivityFailure(String),

    #[error("coefficient cannot be written as a function of the state: {0}")]
    FactorizationFailure(String),

    #[error("tube around the curve overlaps itself: {0}")]
    TubeOverlap(String),

    #[error("time t = {0} outside (-inf, 0)")]
    TimeDomain(f64),

    #[error("step rejected at t = {t}: {reason}")]
    StepRejection { t: f64, reason: String },

    #[error("solver diverged at t = {t}: norm {norm:e} exceeds bound {bound:e}")]
    Divergence { t: f64, norm: f64, bound: f64 },

    #[error("trajectory spans {decades:.2} decades of -t; need at least {needed}")]
    InsufficientSpan { decades: f64, needed: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
