use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Parameters outside the admissible domain of the scheme.
    #[error("parameter domain error: {0}")]
    Domain(String),

    /// σ² = 0, so nothing can be standardized by σ.
    #[error("degenerate variance constant: sigma^2 = 0 for {0}")]
    DegenerateSigma(String),

    /// A configurable size cap was exceeded.
    #[error("resource cap exceeded: {what} = {value} (cap {cap})")]
    Resource { what: &'static str, value: String, cap: String },

    #[error("quadrature tolerance {requested:e} not reached (last change {achieved:e}, estimate {estimate})")]
    ToleranceNotReached { requested: f64, achieved: f64, estimate: String },

    /// Root isolation or the reconstruction check failed; the generating
    /// function does not factor into real Bernoulli factors numerically.
    #[error("root validation failed: {0}")]
    RootValidation(String),

    #[error("unsupported Hermite order {0} (supported: 2, 3, 4, 6)")]
    UnsupportedOrder(u32),

    #[error("dimension cap exceeded: s = {s}, at most {cap} supported")]
    DimensionCap { s: usize, cap: usize },

    #[error("degenerate Bernoulli decomposition: sum of a(1-a) is zero")]
    DegenerateVariance,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

impl Error {
    /// Process exit code used by the command line tools: 2 for domain
    /// problems, 3 for resource or tolerance problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::DegenerateSigma(_)
            | Error::UnsupportedOrder(_)
            | Error::DimensionCap { .. }
            | Error::DegenerateVariance
            | Error::DegenerateInput(_) => 2,
            Error::Resource { .. } | Error::ToleranceNotReached { .. } | Error::RootValidation(_) => 3,
        }
    }
}
