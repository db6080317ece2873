use thiserror::Error;

/// Coarse classification used by the experiment runner to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: malformed kernel, invalid parameters, out-of-domain requests.
    Input,
    /// A numerical procedure failed to converge or produced an inconsistent result.
    Numerical,
    /// The request exceeds a hard size limit (enumeration, dense factorization, windows).
    Resource,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("kernel support is not symmetric under negation at {0:?} (enable symmetrize)")]
    NotSymmetric(Vec<i32>),

    #[error("kernel support does not generate Z^{0}")]
    NotIrreducible(usize),

    #[error("kernel is periodic; {0} requires an aperiodic (lazified) kernel")]
    Periodic(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{op} is only defined for d = {required}")]
    UnsupportedDimension { op: &'static str, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("site {0:?} is dead in this region")]
    DeadSite(Vec<i32>),

    #[error("velocity {xi:?} is outside the rate-function domain ({reason})")]
    OutOfDomain { xi: Vec<f64>, reason: String },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("solver did not converge: {what} (residual {residual:e} after {iterations} iterations)")]
    NoConvergence {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("conditioning event has probability zero: {0}")]
    ZeroProbability(String),

    #[error("windowed conditional variance audit failed: max relative error {max_rel_err:e} > {tolerance:e}")]
    AuditFailed { max_rel_err: f64, tolerance: f64 },

    #[error("resource limit: {0}")]
    TooLarge(String),

    #[error("window of radius {radius} captured mass {captured} only")]
    WindowTooSmall { radius: usize, captured: f64 },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidKernel(_)
            | Error::NotSymmetric(_)
            | Error::NotIrreducible(_)
            | Error::Periodic(_)
            | Error::Dimension { .. }
            | Error::UnsupportedDimension { .. }
            | Error::InvalidArgument(_)
            | Error::DeadSite(_)
            | Error::OutOfDomain { .. }
            | Error::ZeroProbability(_) => ErrorClass::Input,
            Error::Singular(_)
            | Error::NoConvergence { .. }
            | Error::AuditFailed { .. } => ErrorClass::Numerical,
            Error::TooLarge(_) | Error::WindowTooSmall { .. } => ErrorClass::Resource,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
