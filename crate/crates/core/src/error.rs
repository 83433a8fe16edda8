use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid event sequence: {0}")]
    InvalidEvents(String),

    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid hazard specification: {0}")]
    InvalidHazard(String),

    #[error("window has {n} events, enumeration is limited to {max}")]
    TooManyEvents { n: usize, max: usize },

    #[error("no events in any sub-window")]
    NoEvents,

    #[error("ascent check failed at iteration {iteration}: log-likelihood fell from {previous} to {current}")]
    AscentViolation {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("all {starts} starts failed: {last}")]
    AllStartsFailed { starts: usize, last: Box<Error> },

    #[error("hazard majorant is not finite")]
    MajorantOverflow,

    #[error("{0}")]
    Degenerate(String),

    #[error("{failed} of {total} replicate fits failed")]
    TooManyFailures { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
