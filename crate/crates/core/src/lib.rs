//! One-step surrogates for time dependent PDEs built around exponential time
//! differencing in a truncated Fourier basis.
//!
//! The crate is organized in layers that mirror how a surrogate is produced
//! and then audited:
//!
//! * [`spectral`] holds the grid/spectrum bookkeeping shared by everything
//!   else: Parseval-normalized real FFTs, mode truncation, smooth spectral
//!   masks, and the phi functions used by exponential integrators.
//! * [`model`] implements the surrogate itself: a residual time stepper whose
//!   blocks advance a latent field with a learned, stability-constrained
//!   diagonal generator plus a masked spectral forcing path and a pointwise
//!   correction. Hand-written reverse-mode gradients live next to the
//!   forward pass.
//! * [`solver`] provides the reference data generators: an ETDRK4
//!   pseudo-spectral integrator with dealiasing, exact propagators for the
//!   linear scenarios, and the desk-scale scenario registry.
//! * [`data`] reads and writes trajectory sets (raw little-endian f32 plus a
//!   JSON sidecar).
//! * [`train`] is a deterministic Adam loop with warmup-cosine scheduling on
//!   one-step teacher-forced pairs.
//! * [`eval`] computes rollout metrics: normalized RMSE curves, horizon
//!   geometric means, stability horizons, seed aggregation, and spectral
//!   resolution shifts.
//! * [`verify`] estimates Lipschitz constants and checks the one-step gain,
//!   error-recursion, and propagator bounds that the architecture is designed
//!   to satisfy.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod solver;
pub mod spectral;
pub mod train;
pub(crate) mod util;
pub mod verify;

pub use error::{Result, SgnoError};
