//! Dipole-trap derived quantities: effective detuning, photon scattering
//! rate, differential light shift of the clock transition, quadratic Zeeman
//! shift and the total resonance shift.
//!
//! Trap depths are carried as `U0 / k_B` in kelvin. All frequencies are
//! angular (rad/s) unless a name says otherwise.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::{ensure_finite, Error, Result, HBAR, K_B, SPEED_OF_LIGHT};

/// Atomic constants of ⁸⁵Rb used by the shift and scattering models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConstants {
    /// Ground-state hyperfine splitting, rad/s.
    pub omega_hfs: f64,
    /// Natural linewidth of the D2 line, rad/s.
    pub gamma_natural: f64,
    /// D1 line frequency, Hz.
    pub d1_hz: f64,
    /// D2 line frequency, Hz.
    pub d2_hz: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self {
            omega_hfs: TAU * 3.0357e9,
            gamma_natural: TAU * 6.07e6,
            d1_hz: 377.107_385_690e12,
            d2_hz: 384.230_406_373e12,
        }
    }
}

impl PhysicsConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega_hfs", self.omega_hfs),
            ("gamma_natural", self.gamma_natural),
            ("d1_hz", self.d1_hz),
            ("d2_hz", self.d2_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.d1_hz >= self.d2_hz {
            return Err(Error::InvalidArgument("D1 line must lie below the D2 line".into()));
        }
        Ok(())
    }
}

/// A single red-detuned dipole trap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapParams {
    /// Trap depth U0 / k_B, K.
    pub depth_k: f64,
    /// 1/e² waist, m.
    pub waist_m: f64,
    pub wavelength_m: f64,
    /// Effective detuning δ_eff, rad/s, negative for a red-detuned trap.
    pub effective_detuning: f64,
}

impl Default for TrapParams {
    /// An 815 nm trap 1 mK deep.
    fn default() -> Self {
        Self::at_815nm(1e-3)
    }
}

impl TrapParams {
    /// Effective detuning of the 815 nm trapping light, −2π × 13.04 THz.
    pub const EFFECTIVE_DETUNING_815NM: f64 = -TAU * 13.04e12;

    /// An 815 nm trap with 1.7 µm waist at the given depth.
    pub fn at_815nm(depth_k: f64) -> Self {
        Self { depth_k, waist_m: 1.7e-6, wavelength_m: 815e-9, effective_detuning: Self::EFFECTIVE_DETUNING_815NM }
    }

    pub fn with_depth(&self, depth_k: f64) -> Self {
        Self { depth_k, ..*self }
    }

    /// U0 in joules.
    pub fn depth_joules(&self) -> f64 {
        K_B * self.depth_k
    }

    /// Validates everything except strict positivity of the depth; an empty
    /// trap (depth 0) is a legal limit for the shift formulas.
    pub fn validate(&self) -> Result<()> {
        ensure_finite("depth_k", self.depth_k)?;
        ensure_finite("effective_detuning", self.effective_detuning)?;
        if self.depth_k < 0.0 {
            return Err(Error::InvalidArgument(format!("trap depth must be >= 0, got {}", self.depth_k)));
        }
        if !(self.waist_m > 0.0 && self.waist_m.is_finite()) {
            return Err(Error::InvalidArgument(format!("waist must be > 0, got {}", self.waist_m)));
        }
        if !(self.wavelength_m > 0.0 && self.wavelength_m.is_finite()) {
            return Err(Error::InvalidArgument(format!("wavelength must be > 0, got {}", self.wavelength_m)));
        }
        if self.effective_detuning >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "effective detuning must be negative (red detuned), got {}",
                self.effective_detuning
            )));
        }
        Ok(())
    }

    /// Common factor U0 / (ħ |δ_eff|), dimensionless time-scale ratio per rad/s.
    fn depth_over_detuning(&self) -> f64 {
        self.depth_joules() / HBAR / self.effective_detuning.abs()
    }
}

/// Magnetic bias field along the quantization axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldParams {
    pub bias_field_t: f64,
}

impl FieldParams {
    pub fn new(bias_field_t: f64) -> Self {
        Self { bias_field_t }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("bias_field_t", self.bias_field_t)?;
        if self.bias_field_t < 0.0 {
            return Err(Error::InvalidArgument(format!("bias field must be >= 0, got {}", self.bias_field_t)));
        }
        Ok(())
    }
}

impl Default for FieldParams {
    /// 50 µT offset field.
    fn default() -> Self {
        Self::new(50e-6)
    }
}

/// Parameters of the resonance-shift model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftModel {
    pub constants: PhysicsConstants,
    /// Quadratic Zeeman coefficient of the clock transition, Hz/T².
    pub zeeman_coefficient_hz_per_t2: f64,
    /// Sign (+1 or −1) applied to the differential light shift.
    pub light_shift_sign: f64,
}

impl Default for ShiftModel {
    fn default() -> Self {
        Self {
            constants: PhysicsConstants::default(),
            zeeman_coefficient_hz_per_t2: Self::ZEEMAN_COEFFICIENT_ANCHORED,
            light_shift_sign: 1.0,
        }
    }
}

impl ShiftModel {
    /// 1280 Hz/G², the value giving +320 Hz at 0.5 G.
    pub const ZEEMAN_COEFFICIENT_ANCHORED: f64 = 1.28e11;
    /// Breit-Rabi value for ⁸⁵Rb, ≈ 1293 Hz/G².
    pub const ZEEMAN_COEFFICIENT_BREIT_RABI: f64 = 1.293e11;

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if !(self.zeeman_coefficient_hz_per_t2.is_finite() && self.zeeman_coefficient_hz_per_t2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "zeeman coefficient must be > 0, got {}",
                self.zeeman_coefficient_hz_per_t2
            )));
        }
        if self.light_shift_sign != 1.0 && self.light_shift_sign != -1.0 {
            return Err(Error::InvalidArgument(format!(
                "light_shift_sign must be +1 or -1, got {}",
                self.light_shift_sign
            )));
        }
        Ok(())
    }
}

/// δ_eff with `1/δ_eff = (2/3)/δ_D2 + (1/3)/δ_D1` for light of the given wavelength.
pub fn effective_detuning(wavelength_m: f64, constants: &PhysicsConstants) -> Result<f64> {
    constants.validate()?;
    ensure_finite("wavelength_m", wavelength_m)?;
    if !(700e-9..=1100e-9).contains(&wavelength_m) {
        return Err(Error::InvalidArgument(format!(
            "wavelength {wavelength_m} m outside the 700-1100 nm model window"
        )));
    }
    let nu = SPEED_OF_LIGHT / wavelength_m;
    if (constants.d1_hz..=constants.d2_hz).contains(&nu) {
        return Err(Error::AmbiguousSign { wavelength_m });
    }
    let d2 = TAU * (nu - constants.d2_hz);
    let d1 = TAU * (nu - constants.d1_hz);
    Ok(1.0 / (2.0 / 3.0 / d2 + 1.0 / 3.0 / d1))
}

/// Photon scattering rate from the trapping light, `Γ / |δ_eff| · U0 / ħ`, 1/s.
pub fn scattering_rate(trap: &TrapParams, constants: &PhysicsConstants) -> Result<f64> {
    trap.validate()?;
    constants.validate()?;
    Ok(constants.gamma_natural * trap.depth_over_detuning())
}

/// Trap-bottom differential light shift `ω_HFS / |δ_eff| · U0 / ħ`, rad/s.
pub fn differential_light_shift(trap: &TrapParams, constants: &PhysicsConstants) -> Result<f64> {
    trap.validate()?;
    constants.validate()?;
    Ok(constants.omega_hfs * trap.depth_over_detuning())
}

/// Slope of the differential light shift with depth, Hz per kelvin of U0/k_B.
pub fn light_shift_slope_hz_per_k(effective_detuning: f64, constants: &PhysicsConstants) -> f64 {
    constants.omega_hfs / effective_detuning.abs() * K_B / HBAR / TAU
}

/// Quadratic Zeeman shift `2π K_Z B²` of the clock transition, rad/s.
pub fn quadratic_zeeman_shift(field: &FieldParams, model: &ShiftModel) -> Result<f64> {
    field.validate()?;
    model.validate()?;
    Ok(TAU * model.zeeman_coefficient_hz_per_t2 * field.bias_field_t * field.bias_field_t)
}

/// Resonance shift `sign · δ_ls + δ_qz`, rad/s. Affine in the trap depth.
pub fn total_resonance_shift(trap: &TrapParams, field: &FieldParams, model: &ShiftModel) -> Result<f64> {
    let ls = differential_light_shift(trap, &model.constants)?;
    let qz = quadratic_zeeman_shift(field, model)?;
    Ok(model.light_shift_sign * ls + qz)
}
