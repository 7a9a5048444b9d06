//! Frequency-domain modelling and inversion for acoustic nonlinearity
//! parameter tomography with the Jordan–Moore–Gibson–Thompson equation.
//!
//! The crate is organised bottom-up: [`physics`] holds the scalar symbols,
//! [`spectral`] the sine eigenbasis, [`harmonics`] the multiharmonic state
//! algebra, [`poles`] the dispersion analysis, [`forward`] the harmonic
//! balance solver and [`inversion`] both reconstruction paths.

pub mod error;
pub mod forward;
pub mod harmonics;
pub mod inversion;
pub mod io;
pub mod physics;
pub mod poles;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
