use thiserror::Error;

/// Errors surfaced by geometry, constitutive evaluation and the solver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate geometry at (zeta1={zeta1:.4}, zeta2={zeta2:.4}, xi1={xi1:.4}): {what}")]
    Degenerate {
        what: String,
        zeta1: f64,
        zeta2: f64,
        xi1: f64,
    },

    #[error("inverted element at (zeta1={zeta1:.4}, zeta2={zeta2:.4}, xi1={xi1:.4}): det(g) = {det:.4e}")]
    InvertedElement {
        det: f64,
        zeta1: f64,
        zeta2: f64,
        xi1: f64,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("contact state error: {0}")]
    Contact(String),

    #[error("load step {step} did not converge: {reason}")]
    StepRejected { step: usize, reason: String },

    #[error("scenario error at `{location}`: {message}")]
    Scenario { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn scenario(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            location: location.into(),
            message: message.into(),
        }
    }
}
