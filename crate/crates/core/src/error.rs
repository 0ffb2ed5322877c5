use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input sample {0}")]
    NonFinite(f64),

    #[error("bit width {0} outside the supported range 1..=16")]
    BitWidth(u32),

    #[error("step-size search for {alpha} bits ended on the bracket edge (delta = {delta})")]
    NoInteriorOptimum { alpha: u32, delta: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("zero-forcing needs full column rank (singular value ratio {ratio:e} <= 1e-10)")]
    RankDeficient { ratio: f64 },

    #[error("MMSE system matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("noise covariance diagonal entry {index} is not positive ({value})")]
    NonPositiveCovariance { index: usize, value: f64 },

    #[error("detector vector for user {0} is zero")]
    ZeroDetector(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("drop {drop}{}: {source}", realization.map(|r| format!(", realization {r}")).unwrap_or_default())]
    AtRealization {
        drop: usize,
        realization: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, drop: usize, realization: Option<usize>) -> Error {
        Error::AtRealization {
            drop,
            realization,
            source: Box::new(self),
        }
    }
}
