use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a type invariant (e.g. non-positive range).
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// Two vectors that must be combined element-wise differ in length.
    #[error("length mismatch: channel has {channel} entries, weights have {weights}")]
    LengthMismatch { channel: usize, weights: usize },

    /// A closed form was evaluated outside its domain.
    #[error("domain error in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    /// An inversion target lies outside the trajectory it is inverted on.
    #[error("target {target} outside trajectory span [{lo}, {hi}]")]
    OutOfTrajectory { target: f64, lo: f64, hi: f64 },

    /// A search grid contains no admissible point.
    #[error("empty search grid")]
    EmptyGrid,
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
