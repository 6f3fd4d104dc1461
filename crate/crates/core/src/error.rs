use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of domain: {0}")]
    Domain(String),

    /// The arcsin argument of the closed-form offset inversion left [-1, 1].
    #[error("chi inversion saturated: arcsin argument {argument} outside [-1, 1]")]
    Saturated { argument: f64 },

    #[error("dimension mismatch: {0}")]
    Shape(String),

    /// Fisher information matrix too ill-conditioned to invert.
    #[error("singular Fisher information (condition number {condition:.3e}); weakest directions involve {subspace:?}")]
    SingularFim {
        condition: f64,
        subspace: Vec<String>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown estimation method `{0}`")]
    UnknownMethod(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("malformed PADP file: {0}")]
    PadpFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
