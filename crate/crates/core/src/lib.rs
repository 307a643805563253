//! Frequency-domain model of a signal-recycled interferometer with a
//! double-pumped gain medium ("white light cavity") in the signal
//! recycling cavity.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`]: 2×2 complex algebra, quadratic roots, adaptive
//!   quadrature and winding numbers.
//! * [`medium`]: closed-form response of the gain medium.
//! * [`interferometer`]: quadrature transfer blocks and the shot-noise
//!   limited strain PSD.
//! * [`stability`]: Nyquist classification with an argument-principle
//!   root counting cross-check.
//! * [`survey`]: (η, ξ) parameter sweeps and the integrated sensitivity
//!   improvement factor.
//! * [`cli`]: scenario files in, CSV tables out.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod interferometer;
pub mod medium;
pub mod numerics;
pub mod stability;
pub mod survey;

pub use error::{Error, Result};
pub use interferometer::{IfoParams, LoopBlocks};
pub use medium::{MediumClass, MediumParams, NoiseModel};
pub use numerics::{Complex2x2, QuadratureResult};
pub use stability::{StabilityClass, StabilityOptions, StabilityReport};
pub use survey::{RootChoice, SweepCell, SweepGrid, SweepSpec};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
