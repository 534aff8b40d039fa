//! Simulation of shaper-assisted discretization of energy-time entangled
//! photon pairs.
//!
//! The pipeline follows the physical experiment: a joint spectral amplitude
//! is prepared by down-conversion ([`field`]), manipulated by a spectral
//! shaper ([`shaper`]) and detected in coincidence by sum-frequency
//! generation ([`measurement`]). Discrete qudit bases live in [`bases`] and
//! entanglement is quantified in [`metrics`] and [`fit`]. [`scenario`] binds
//! everything into a declarative, reproducible experiment runner.

pub mod bases;
pub mod error;
pub mod field;
pub mod fit;
pub mod grid;
pub mod measurement;
pub mod metrics;
pub mod scenario;
pub mod shaper;

mod convolve;
mod linalg;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792_458;
