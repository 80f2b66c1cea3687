use thiserror::Error;

/// Errors raised by the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("stability condition 1 - rho - q > 0 violated: rho = {rho}, q = {q}")]
    StabilityViolation { rho: f64, q: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument w = {w} lies outside the analytic branch of theta (radius {radius})")]
    Radius { w: f64, radius: f64 },

    #[error("pole: {0}")]
    Pole(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("quadrature tolerance not met: value {value}, error estimate {err_est}")]
    ToleranceNotMet { value: f64, err_est: f64 },

    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },

    #[error("zero diagonal in the triangular system at row b = {b}")]
    SingularDiagonal { b: usize },

    #[error("Laplace inversion unstable at t = {t}: consecutive orders differ by {gap}")]
    InversionUnstable { t: f64, gap: f64 },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn convergence(msg: impl Into<String>) -> Self {
        Error::Convergence(msg.into())
    }

    /// True for errors caused by the caller's input rather than by a numerical
    /// failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::StabilityViolation { .. } | Error::Domain(_) | Error::Radius { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
