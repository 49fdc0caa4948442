use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A protocol configuration field violates its invariant.
    #[error("invalid configuration: field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },

    /// The configuration is valid but describes a system this crate does not model.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A computed quantity was NaN or infinite.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The step fit found no transmission region in the record.
    #[error("coarse estimation failed: {0}")]
    CoarseEstimationFailed(String),

    /// Fewer than two batches synchronized, so no drift line can be fitted.
    #[error("drift fit unavailable: {usable} usable batch(es)")]
    DriftFitUnavailable { usable: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
