//! Fisher information, Cramér–Rao and position error bounds for wideband
//! near-field-free sensing with a dynamic metasurface antenna (DMA) receiver.
//!
//! The crate is organised bottom-up: [`scenario`] holds the configuration,
//! [`geometry`] maps positions to path parameters, [`frontend`] builds the
//! DMA combiners, [`signal`] the effective manifolds and observation model,
//! [`fisher`] the exact bounds, [`approx`] their interpretable
//! approximations and [`tuner`] a bound-driven configuration search.

pub mod approx;
pub mod error;
pub mod experiments;
pub mod fisher;
pub mod frontend;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod scenario;
pub mod signal;
pub mod tuner;

pub use error::{Error, Result};
pub use fisher::{BoundReport, FimBundle};
pub use frontend::{CombinerBank, DmaConfiguration, Normalization};
pub use geometry::PathSet;
pub use scenario::Scenario;
pub use signal::Manifolds;
