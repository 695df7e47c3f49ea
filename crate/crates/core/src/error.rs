use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("kernel synthesis produced non-finite values in term {term}")]
    SynthesisFailure { term: usize },

    #[error("inverse transform did not converge in {iterations} iterations (last sup norm {last_sup:e})")]
    NonConvergence { iterations: usize, last_sup: f64 },

    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),

    #[error("shape mismatch: {0}")]
    Mismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
