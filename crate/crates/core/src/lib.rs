//! Simulation and analysis toolkit for coherent manipulation of atomic qubit
//! ensembles held in optical dipole traps and 2-D microlens trap registers.
//!
//! The crate is organised bottom-up:
//!
//! - [`bloch`]: damped optical Bloch equations, pulse sequences and closed-form
//!   Rabi transfer.
//! - [`trap`]: dipole-trap derived frequency shifts and the photon scattering rate.
//! - [`dephasing`]: thermal-ensemble Ramsey and spin-echo models, both the
//!   analytic fringe model and a Monte-Carlo over sampled atoms.
//! - [`register`]: geometry, depth profile and loading of a trap array.
//! - [`detection`]: push-out state selection, EMCCD-style frame synthesis and
//!   site-integration readout.
//! - [`fit`]: Levenberg-Marquardt recovery of model parameters from traces.
//! - [`array_ramsey`]: the end-to-end simultaneous Ramsey pipeline over a register.

pub mod array_ramsey;
pub mod bloch;
pub mod dephasing;
pub mod detection;
mod error;
pub mod fit;
pub mod io;
pub mod register;
pub mod rng;
pub mod trace;
pub mod trap;

pub use error::{Error, Result};
pub use trace::{Axis, PopulationTrace};

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant in J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant in J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub(crate) fn ensure_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be finite, got {value}")))
    }
}
