//! Library error type.

use thiserror::Error;

/// Errors surfaced by the analysis routines.
///
/// Numerical *verdicts* (blow-up vs smooth vs inconclusive) are not errors;
/// they are ordinary enum results. `Error` is reserved for conditions under
/// which a routine cannot produce a meaningful verdict at all.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix exponential argument too large to scale safely.
    #[error("matrix exponential overflow: norm {norm:.3e} exceeds limit")]
    ExpmOverflow { norm: f64 },

    /// Quartic eigenvalue iteration failed its residual check.
    #[error("eigenvalue solve did not converge: residual {residual:.3e}")]
    EigNonConvergence { residual: f64 },

    /// A radius left the validity interval of a radial profile.
    #[error("radius {r:.6e} outside the profile's valid range (0, {r_max:.6e}]")]
    RadiusOutOfRange { r: f64, r_max: f64 },

    /// Adaptive quadrature failed to reach the requested tolerance.
    #[error("quadrature did not converge on [{a:.6e}, {b:.6e}]")]
    Quadrature { a: f64, b: f64 },

    /// Singular linear system where an inverse was required.
    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    /// Parameter outside its mathematical domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The ODE integrator could not complete a step.
    #[error("integration failure at t = {t:.6e}: {reason}")]
    Integration { t: f64, reason: String },

    /// A Poincare return search failed to close an orbit.
    #[error("orbit closure not found: {0}")]
    OrbitClosure(String),

    /// Least-squares fit residual exceeded the acceptance threshold.
    #[error("trigonometric fit residual {residual:.3e} exceeds {limit:.3e}")]
    FitResidual { residual: f64, limit: f64 },

    /// Malformed sweep configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem failure while writing sweep outputs.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
