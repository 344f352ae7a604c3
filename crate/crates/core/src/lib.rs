//! Classification of a radar reference window into homogeneous,
//! partially-homogeneous and clutter-edge scenarios.
//!
//! The crate is organised bottom-up:
//!
//! - [`numkit`]: complex Hermitian eigendecomposition, steering vectors,
//!   unitary completion and circular complex Gaussian sampling.
//! - [`scenario`]: clutter covariances for both variation models, segment
//!   layouts per hypothesis and synthetic [`scenario::DataWindow`]s.
//! - [`estimate`]: noise-floor and clutter-eigenvalue estimates, the
//!   normalized-snapshot subspace estimate, the cyclic power-ratio fit and
//!   the closed-form per-segment estimates of the arbitrary-variation model.
//! - [`classify`]: compressed log-likelihoods, AIC/GIC/BIC penalties, edge
//!   grid searches, final decisions and rank estimation.
//! - [`montecarlo`]: seeded, parallel experiment runner and metrics.
//! - [`cli`]: the `clutterscope` command-line surface.

pub mod classify;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod montecarlo;
pub mod numkit;
pub mod scenario;

pub use error::{Error, Result};
