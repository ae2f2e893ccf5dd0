//! Smoothness and blow-up analysis for plane flows of a cold plasma in a
//! constant transverse magnetic field.
//!
//! The model is the characteristic reduction of the cold-plasma Cauchy problem:
//! along a trajectory x(t) the velocity obeys
//!
//! ```text
//! dv/dt = -B0 L v - E0(x),      dx/dt = v,      L = [[0, 1], [-1, 0]],
//! ```
//!
//! and the derivative matrix W(t), with entries W[i][j] = dV_i/dx_j, obeys the
//! matrix Riccati equation W' = -W^2 - B0 L W - S0(x) where S0 is the Jacobian
//! of E0. The classical solution stays C^1 precisely while W stays finite; the
//! Radon linearization W = P Q^{-1} with (Q', P') = (P, -S0 Q - B0 L P),
//! Q(0) = I, P(0) = W(0) converts the finite-time singularity into the first
//! zero of det Q(t), which is what everything in this crate ultimately locates
//! or excludes.
//!
//! Module map:
//! - [`smallmat`]: fixed-size 2/3/4 matrix kernels, quartic eigensolver, expm.
//! - [`ode`]: Dormand-Prince 5(4) with dense output and event monitors.
//! - [`fields`]: affine and axisymmetric electric-field models.
//! - [`characteristics`]: trajectory + Riccati integration, blow-up detection.
//! - [`affine`]: closed-form spectral criteria for affine fields.
//! - [`axisym`]: the (U, V) reduction, envelope bounds, Floquet analysis.
//! - [`sweep`]: parallel parameter sweeps with deterministic CSV/JSON output.
//! - [`svg`]: small deterministic SVG plots of orbits and envelopes.

pub mod affine;
pub mod axisym;
pub mod characteristics;
mod error;
pub mod fields;
pub mod ode;
pub mod smallmat;
pub mod svg;
pub mod sweep;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
