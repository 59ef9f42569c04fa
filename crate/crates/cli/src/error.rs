use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },

    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("cannot serialize configuration: {0}")]
    Serialize(String),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("cannot write {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Simulation(#[from] cpafdm::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;
