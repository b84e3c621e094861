use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "Fock truncation overflow at t = {t}: top {tail_levels} levels hold {tail_population:.3e} \
         (limit {tol:.1e}); increase fock_dim"
    )]
    TruncationOverflow { t: f64, tail_levels: usize, tail_population: f64, tol: f64 },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("integration became unstable at t = {t}; reduce dt (now {dt})")]
    Unstable { t: f64, dt: f64 },

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("drive has no period; a stroboscopic section needs a modulated drive")]
    NoPeriod,

    #[error("no grid point has a maximum excitation inside [{min}, {max}]")]
    EmptySelection { min: f64, max: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
