use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid gamma sequence: {0}")]
    Gamma(String),

    #[error("invalid conflict topology: {0}")]
    Topology(String),

    #[error("test index {index} is outside the topology (length {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("invalid engine parameter: {0}")]
    Parameter(String),

    /// The driver reported outcomes out of order or skipped a mandatory report.
    #[error("sequencing violation: {0}")]
    Sequencing(String),

    #[error("p-value {0} is outside [0, 1]")]
    PValueRange(f64),

    #[error("simulation setup: {0}")]
    Simulation(String),

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error("input data: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
