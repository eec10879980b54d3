//! Numerical solvers for the coupled non-Abelian BPS vortex system
//!
//! ```text
//! Δu₁ = α(e^{2u₁} − 1) + β(e^{2u₂} − 1) + 4πn₁δ
//! Δu₂ = (α − ½)(e^{2u₁} − 1) + (β + ½)(e^{2u₂} − 1) + 4πn₂δ
//! ```
//!
//! with `α = 3/2 − 1/(2N)`, `β = N − 3/2 + 1/(2N)` and `u → 0` at infinity.
//!
//! The crate is organized as:
//!
//! * [`model`]: parameters, coupling matrices, spectral constants and the
//!   smooth background fields carrying the vortex sources.
//! * [`functional`]: the convex action functional on a planar grid with its
//!   exact gradient and Hessian-vector product.
//! * [`radial`]: radially symmetric boundary-value solvers and profile
//!   reconstruction.
//! * [`planar`]: the full two-dimensional Newton-CG minimizer.
//! * [`verify`]: flux quantization, decay-rate fits, residuals and
//!   cross-validation, collected in a [`verify::VerificationReport`].
//! * [`io`]: CSV and report formats shared with the command-line tool.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too, and index
// loops mirror the stencils they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod error;
pub mod functional;
pub mod io;
pub mod mat2;
pub mod model;
pub mod planar;
pub mod radial;
pub mod verify;

pub use error::{Error, Result};
pub use model::{BackgroundField, CouplingData, FunctionalCoefficients, ModelParams, SpectralConstants};
