use thiserror::Error;

/// Errors raised by the analytic, sampling and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain on which the formula is defined.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A bin or sample holds too few observations for the requested estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Per-bin, per-time storage would exceed the configured byte cap.
    #[error(
        "memory cap exceeded: {bins} bins x {times} time points needs {needed} bytes, cap is {cap} bytes \
         (reduce --bins or --steps, or raise the cap)"
    )]
    MemoryCap {
        bins: usize,
        times: usize,
        needed: usize,
        cap: usize,
    },

    /// A simulation or binning configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        op,
        detail: detail.into(),
    }
}
