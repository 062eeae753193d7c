use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("range error: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("numerical consistency check failed: {0}")]
    NumericalConsistency(String),

    #[error("propagation became unstable at t = {t}: non-finite amplitudes (time step too large?)")]
    Instability { t: f64 },

    #[error("trajectory {trajectory} (x(0) = {x_init}) left the grid at t = {t}")]
    Escape { trajectory: usize, x_init: f64, t: f64 },

    #[error(
        "trajectories {first} and {second} crossed at t = {t}; tighten integration \
         (more sub-steps or a smaller snapshot stride)"
    )]
    OrderingViolation { first: usize, second: usize, t: f64 },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("non-monotone final labels inside bracket ({0}); run branching detection instead")]
    BranchingSuspected(String),

    #[error("classification error: {0}")]
    Classification(String),

    #[error("segmentation error: {0}")]
    Segmentation(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the run configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Argument(_) | Error::Range(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
