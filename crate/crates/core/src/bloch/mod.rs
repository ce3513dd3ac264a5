//! Two-level Bloch dynamics.
//!
//! The Bloch vector `(u, v, w)` follows
//!
//! ```text
//! du/dt = Ω sinφ · w − δ · v − u / T2
//! dv/dt = δ · u − Ω cosφ · w − v / T2
//! dw/dt = Ω cosφ · v − Ω sinφ · u − (w − w_eq) / T1
//! ```
//!
//! which is the usual damped optical Bloch system with the drive's rotation
//! axis placed at azimuth `φ` in the uv-plane. The inversion convention is
//! `w = P1 − P0`, so the prepared upper qubit state is `w = +1` and the
//! detected lower-state population is `P0 = (1 − w) / 2`.

mod integrate;
mod propagator;
mod sequence;
mod transfer;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result};

pub use integrate::{default_step, evolve_segment, STEPS_PER_PERIOD};
pub use propagator::{segment_propagator, AffineMap};
pub(crate) use propagator::free_precession as propagator_free;
pub use sequence::{ramsey_sequence, echo_sequence, run_sequence, sequence_duration};
pub use transfer::{lineshape_scan, lineshape_zeros, rabi_transfer};

/// Coherence/inversion vector of a qubit ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl BlochState {
    /// All population in the upper qubit state |1⟩.
    pub const UPPER: BlochState = BlochState { u: 0.0, v: 0.0, w: 1.0 };
    /// All population in the lower qubit state |0⟩.
    pub const LOWER: BlochState = BlochState { u: 0.0, v: 0.0, w: -1.0 };

    pub fn new(u: f64, v: f64, w: f64) -> Self {
        Self { u, v, w }
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u * self.u + self.v * self.v + self.w * self.w
    }

    /// Population of |0⟩.
    pub fn p0(&self) -> f64 {
        0.5 * (1.0 - self.w)
    }

    /// Population of |1⟩.
    pub fn p1(&self) -> f64 {
        0.5 * (1.0 + self.w)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.w.is_finite()
    }

    pub(crate) fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.w)
    }

    pub(crate) fn from_vector(v: &Vector3<f64>) -> Self {
        Self { u: v[0], v: v[1], w: v[2] }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite Bloch state {self:?}")));
        }
        Ok(())
    }
}

/// Drive applied during a segment. `rabi_frequency == 0` encodes free precession.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Ω_R in rad/s.
    pub rabi_frequency: f64,
    /// δ = ω_atom − ω_drive in rad/s.
    pub detuning: f64,
    /// Azimuth of the rotation axis in the uv-plane, rad.
    #[serde(default)]
    pub phase: f64,
}

impl DriveParams {
    pub fn new(rabi_frequency: f64, detuning: f64, phase: f64) -> Self {
        Self { rabi_frequency, detuning, phase }
    }

    pub fn resonant(rabi_frequency: f64) -> Self {
        Self::new(rabi_frequency, 0.0, 0.0)
    }

    pub fn free(detuning: f64) -> Self {
        Self::new(0.0, detuning, 0.0)
    }

    /// W = sqrt(Ω² + δ²).
    pub fn generalized_rabi(&self) -> f64 {
        self.rabi_frequency.hypot(self.detuning)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        ensure_finite("rabi_frequency", self.rabi_frequency)?;
        ensure_finite("detuning", self.detuning)?;
        ensure_finite("phase", self.phase)?;
        if self.rabi_frequency < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rabi_frequency must be >= 0, got {}",
                self.rabi_frequency
            )));
        }
        Ok(())
    }
}

/// Longitudinal/transverse relaxation. Infinite times disable the channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationParams {
    /// Longitudinal relaxation time T1, s.
    #[serde(with = "crate::io::infinite_as_null")]
    pub t1: f64,
    /// Total transverse relaxation time T2, s.
    #[serde(with = "crate::io::infinite_as_null")]
    pub t2: f64,
    /// Homogeneous (irreversible) part T2′ of the transverse time, s.
    #[serde(with = "crate::io::infinite_as_null")]
    pub t2_homogeneous: f64,
    /// Equilibrium inversion the population relaxes to.
    pub w_eq: f64,
}

impl Default for RelaxationParams {
    fn default() -> Self {
        Self::none()
    }
}

impl RelaxationParams {
    /// No relaxation at all.
    pub fn none() -> Self {
        Self { t1: f64::INFINITY, t2: f64::INFINITY, t2_homogeneous: f64::INFINITY, w_eq: 0.0 }
    }

    pub fn new(t1: f64, t2: f64, w_eq: f64) -> Self {
        Self { t1, t2, t2_homogeneous: f64::INFINITY, w_eq }
    }

    /// Builds T2 from its homogeneous and inhomogeneous parts, 1/T2 = 1/T2′ + 1/T2*.
    pub fn from_components(t1: f64, t2_homogeneous: f64, t2_star: f64, w_eq: f64) -> Self {
        let rate = rate_of(t2_homogeneous) + rate_of(t2_star);
        let t2 = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
        Self { t1, t2, t2_homogeneous, w_eq }
    }

    /// Decoherence limited by photon scattering: population decays with T1 and
    /// the coherences with T2 = 2 T1, combined with any homogeneous T2′.
    pub fn scattering_limited(t1: f64, t2_homogeneous: f64) -> Self {
        let rate = 0.5 * rate_of(t1) + rate_of(t2_homogeneous);
        let t2 = if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
        Self { t1, t2, t2_homogeneous, w_eq: 0.0 }
    }

    pub fn gamma1(&self) -> f64 {
        rate_of(self.t1)
    }

    pub fn gamma2(&self) -> f64 {
        rate_of(self.t2)
    }

    pub fn is_disabled(&self) -> bool {
        self.gamma1() == 0.0 && self.gamma2() == 0.0
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1), ("t2", self.t2), ("t2_homogeneous", self.t2_homogeneous)] {
            if t.is_nan() || t <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {t}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.w_eq) {
            return Err(Error::InvalidArgument(format!("w_eq must lie in [-1, 1], got {}", self.w_eq)));
        }
        Ok(())
    }
}

fn rate_of(time: f64) -> f64 {
    if time.is_infinite() {
        0.0
    } else {
        1.0 / time
    }
}

/// One step of a pulse sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PulseSegment {
    /// Rectangular drive (or free precession when Ω = 0) of finite duration.
    Timed { duration: f64, drive: DriveParams },
    /// Instantaneous rotation by `area` about the uv-plane axis at `phase`.
    /// Used for ideal-pulse idealisations.
    Instant { area: f64, phase: f64 },
}

impl PulseSegment {
    pub fn timed(duration: f64, drive: DriveParams) -> Self {
        PulseSegment::Timed { duration, drive }
    }

    pub fn gap(duration: f64, detuning: f64) -> Self {
        PulseSegment::Timed { duration, drive: DriveParams::free(detuning) }
    }

    pub fn instant(area: f64, phase: f64) -> Self {
        PulseSegment::Instant { area, phase }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulseSegment::Timed { duration, .. } => *duration,
            PulseSegment::Instant { .. } => 0.0,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            PulseSegment::Timed { duration, drive } => {
                ensure_finite("duration", *duration)?;
                if *duration < 0.0 {
                    return Err(Error::InvalidArgument(format!("negative duration {duration}")));
                }
                drive.validate()
            }
            PulseSegment::Instant { area, phase } => {
                ensure_finite("area", *area)?;
                ensure_finite("phase", *phase)
            }
        }
    }
}

/// How the π/2 and π pulses of a Ramsey or echo protocol are realised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PulseSpec {
    /// Instantaneous rotations, no precession during the pulses.
    #[default]
    Ideal,
    /// Rectangular pulses at Rabi frequency `rabi_frequency`; the π/2 pulse
    /// lasts π/(2Ω). The atom's own detuning acts during the pulse.
    Rectangular { rabi_frequency: f64 },
}

impl PulseSpec {
    /// Segment rotating by `area` about the axis at `phase` for an atom with `detuning`.
    pub fn segment(&self, area: f64, phase: f64, detuning: f64) -> PulseSegment {
        match *self {
            PulseSpec::Ideal => PulseSegment::instant(area, phase),
            PulseSpec::Rectangular { rabi_frequency } => PulseSegment::timed(
                area / rabi_frequency,
                DriveParams::new(rabi_frequency, detuning, phase),
            ),
        }
    }

    /// Duration of a pulse of the given area.
    pub fn duration(&self, area: f64) -> f64 {
        match *self {
            PulseSpec::Ideal => 0.0,
            PulseSpec::Rectangular { rabi_frequency } => area / rabi_frequency,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let PulseSpec::Rectangular { rabi_frequency } = *self {
            if !(rabi_frequency.is_finite() && rabi_frequency > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "pulse rabi_frequency must be finite and > 0, got {rabi_frequency}"
                )));
            }
        }
        Ok(())
    }
}
