use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("renewal sampler produced more than {cap} points; the inter-arrival law is degenerate")]
    Runaway { cap: usize },

    #[error("a pattern point coincides with the origin")]
    DegeneratePoint,

    #[error("the origin does not lie on the street system")]
    OriginOffStreet,

    #[error("r = {r} is outside the range [0, {limit}) of the lattice formula")]
    OutOfRange { r: f64, limit: f64 },

    #[error(
        "certificate rejection rate {rate:.4} exceeds {limit}; \
         rerun with window_half_width >= {suggested_window}"
    )]
    RejectionRate {
        rate: f64,
        limit: f64,
        suggested_window: f64,
    },

    #[error("unknown validation suite `{0}`")]
    UnknownSuite(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
