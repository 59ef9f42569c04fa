use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("permutation rank {rank} out of range for n = {n} (must be < n!)")]
    RankOutOfRange { n: usize, rank: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("channel is not delay-Doppler orthogonal: {0}")]
    NonOrthogonal(String),

    #[error("system is rank deficient")]
    RankDeficient,

    #[error("search space of {size} candidates exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: f64, cap: u64 },

    #[error(
        "codebook capacity exceeded: requested {requested} index bits, at most {max} available"
    )]
    CapacityExceeded { requested: usize, max: usize },

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("degenerate mainlobe: {0}")]
    DegenerateMainlobe(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
