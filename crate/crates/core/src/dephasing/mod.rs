//! Inhomogeneous dephasing of a thermal atom ensemble.
//!
//! Every atom of a thermal ensemble sees a slightly different differential
//! light shift because it samples a different part of the trap. Averaging
//! the Ramsey fringe over the 3-D harmonic Boltzmann distribution yields an
//! envelope `α(t)` and a phase lag `κ(t)`; [`ramsey_analytic`] is that closed
//! form. The Monte-Carlo in [`monte_carlo`] samples atoms, integrates each
//! one through the pulse sequence and averages, which makes it an
//! independent check of the closed form and the only route to spin-echo
//! signals with relaxation.

pub mod monte_carlo;

use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::bloch::{PulseSpec, RelaxationParams};
use crate::rng::stream_rng;
use crate::trace::{Axis, PopulationTrace};
use crate::trap::{
    differential_light_shift, quadratic_zeeman_shift, FieldParams, PhysicsConstants, ShiftModel, TrapParams,
};
use crate::{ensure_finite, Error, Result, HBAR, K_B};

pub use monte_carlo::{mc_echo, mc_echo_visibility, mc_ramsey, visibility_csv, EchoPoint, McTrace};
pub(crate) use monte_carlo::ramsey_p0;

/// Numerical factor relating T2* to the ensemble temperature.
pub const TEMPERATURE_FACTOR: f64 = 1.94;
const ENVELOPE_FACTOR: f64 = 0.95;
const PHASE_FACTOR: f64 = 0.97;

/// Ramsey envelope `[1 + 0.95 (t/T2*)²]^(−3/2)`.
pub fn envelope_alpha(t: f64, t2_star: f64) -> Result<f64> {
    check_t2_star(t2_star)?;
    ensure_finite("t", t)?;
    let x = t / t2_star;
    Ok((1.0 + ENVELOPE_FACTOR * x * x).powf(-1.5))
}

/// Ramsey phase lag `−3 arctan(0.97 t/T2*)`, rad.
pub fn phase_kappa(t: f64, t2_star: f64) -> Result<f64> {
    check_t2_star(t2_star)?;
    ensure_finite("t", t)?;
    Ok(-3.0 * (PHASE_FACTOR * t / t2_star).atan())
}

fn check_t2_star(t2_star: f64) -> Result<()> {
    if t2_star.is_nan() || t2_star <= 0.0 {
        return Err(Error::InvalidArgument(format!("T2* must be > 0, got {t2_star}")));
    }
    Ok(())
}

/// Parameters of the thermally averaged Ramsey fringe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamseyParams {
    pub amplitude: f64,
    pub offset: f64,
    /// Precession frequency δ, rad/s.
    pub detuning: f64,
    /// Phase offset Φ, rad.
    pub phase: f64,
    /// Inhomogeneous dephasing time T2*, s. `f64::INFINITY` gives an undamped fringe.
    #[serde(with = "crate::io::infinite_as_null")]
    pub t2_star: f64,
}

impl RamseyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("offset", self.offset),
            ("detuning", self.detuning),
            ("phase", self.phase),
        ] {
            ensure_finite(name, v)?;
        }
        check_t2_star(self.t2_star)?;
        let hi = self.offset + self.amplitude.abs();
        let lo = self.offset - self.amplitude.abs();
        if lo < -1e-12 || hi > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "offset ± amplitude must lie in [0, 1], got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// `A α(t) cos(δ t + κ(t) + Φ) + C`, not clamped.
pub fn ramsey_analytic(t: f64, params: &RamseyParams) -> Result<f64> {
    params.validate()?;
    Ok(ramsey_unchecked(t, params))
}

pub(crate) fn ramsey_unchecked(t: f64, p: &RamseyParams) -> f64 {
    let x = t / p.t2_star;
    let alpha = (1.0 + ENVELOPE_FACTOR * x * x).powf(-1.5);
    let kappa = -3.0 * (PHASE_FACTOR * x).atan();
    p.amplitude * alpha * (p.detuning * t + kappa + p.phase).cos() + p.offset
}

/// [`ramsey_analytic`] over a time grid.
pub fn ramsey_trace(times: &[f64], params: &RamseyParams) -> Result<PopulationTrace> {
    params.validate()?;
    let p0 = times.iter().map(|&t| ramsey_unchecked(t, params)).collect();
    PopulationTrace::new(Axis::Time, times.to_vec(), p0)
}

/// Ensemble temperature implied by a dephasing time,
/// `T = 1.94 ħ |δ_eff| / (k_B ω_HFS T2*)`.
pub fn temperature_from_t2star(t2_star: f64, trap: &TrapParams, constants: &PhysicsConstants) -> Result<f64> {
    check_t2_star(t2_star)?;
    trap.validate()?;
    constants.validate()?;
    Ok(TEMPERATURE_FACTOR * HBAR * trap.effective_detuning.abs() / (K_B * constants.omega_hfs * t2_star))
}

/// Inverse of [`temperature_from_t2star`].
pub fn t2star_from_temperature(temperature_k: f64, trap: &TrapParams, constants: &PhysicsConstants) -> Result<f64> {
    if temperature_k.is_nan() || temperature_k <= 0.0 {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature_k}")));
    }
    trap.validate()?;
    constants.validate()?;
    Ok(TEMPERATURE_FACTOR * HBAR * trap.effective_detuning.abs() / (K_B * constants.omega_hfs * temperature_k))
}

/// A thermal ensemble of atoms in one trap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalEnsemble {
    pub n_atoms: usize,
    pub temperature_k: f64,
    pub trap: TrapParams,
    /// Fraction of atoms prepared in |1⟩; the rest sit in other Zeeman
    /// states of the upper hyperfine level and take no part in the dynamics.
    pub prepared_fraction: f64,
}

impl ThermalEnsemble {
    /// Optical-pumping efficiency reached inside the dipole trap.
    pub const DEFAULT_PREPARED_FRACTION: f64 = 0.51;

    pub fn new(n_atoms: usize, temperature_k: f64, trap: TrapParams) -> Self {
        Self { n_atoms, temperature_k, trap, prepared_fraction: Self::DEFAULT_PREPARED_FRACTION }
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        if self.n_atoms == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one atom".into()));
        }
        if self.temperature_k.is_nan() || self.temperature_k <= 0.0 {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {}", self.temperature_k)));
        }
        if !(0.0..=1.0).contains(&self.prepared_fraction) {
            return Err(Error::InvalidArgument(format!(
                "prepared_fraction must lie in [0, 1], got {}",
                self.prepared_fraction
            )));
        }
        if self.temperature_k >= self.trap.depth_k {
            return Err(Error::UnboundEnsemble { thermal_k: self.temperature_k, depth_k: self.trap.depth_k });
        }
        Ok(())
    }
}

/// Total (kinetic + potential) energy of one atom, J.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub energy_j: f64,
}

impl EnergySample {
    /// Energy in kelvin (k_B units).
    pub fn energy_k(&self) -> f64 {
        self.energy_j / K_B
    }
}

/// Draw per-atom energies from the 3-D harmonic Boltzmann density
/// `p(E) ∝ E² exp(−E / k_B T)`, restricted to bound atoms (`E < U0`).
///
/// Atom `i` uses random stream `i` of `seed`, so the sample set is
/// reproducible and a prefix of a larger ensemble with the same seed.
pub fn sample_atom_energies(ensemble: &ThermalEnsemble, seed: u64) -> Result<Vec<EnergySample>> {
    ensemble.validate()?;
    let kt = K_B * ensemble.temperature_k;
    let depth = ensemble.trap.depth_joules();
    Ok((0..ensemble.n_atoms as u64)
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            loop {
                let x: f64 = Exp1.sample(&mut rng);
                let y: f64 = Exp1.sample(&mut rng);
                let z: f64 = Exp1.sample(&mut rng);
                let e = kt * (x + y + z);
                if e < depth {
                    break EnergySample { energy_j: e };
                }
            }
        })
        .collect())
}

/// Detuning of one atom: `base + sign · (ω_HFS/|δ_eff|) (U0 − E/2) / ħ`.
///
/// The atom sees the time-averaged potential `−U0 + E/2` of a harmonic well.
pub fn atom_detuning(sample: &EnergySample, trap: &TrapParams, base: f64, model: &ShiftModel) -> Result<f64> {
    let depth = trap.depth_joules();
    if !(sample.energy_j >= 0.0) || sample.energy_j >= depth {
        return Err(Error::OutOfModel { energy_k: sample.energy_k(), depth_k: trap.depth_k });
    }
    Ok(atom_detuning_unchecked(sample.energy_j, trap, base, model))
}

pub(crate) fn atom_detuning_unchecked(energy_j: f64, trap: &TrapParams, base: f64, model: &ShiftModel) -> f64 {
    let eta = model.constants.omega_hfs / trap.effective_detuning.abs() / HBAR;
    base + model.light_shift_sign * eta * (trap.depth_joules() - 0.5 * energy_j)
}

/// Settings shared by the ensemble Ramsey and echo simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleExperiment {
    pub ensemble: ThermalEnsemble,
    pub shift: ShiftModel,
    pub field: FieldParams,
    /// δ_RL = ω_RL − ω_HFS, rad/s.
    pub raman_detuning: f64,
    pub pulse: PulseSpec,
    pub relax: RelaxationParams,
}

impl EnsembleExperiment {
    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.shift.validate()?;
        self.field.validate()?;
        ensure_finite("raman_detuning", self.raman_detuning)?;
        self.pulse.validate()?;
        self.relax.validate()
    }

    /// Detuning common to all atoms: quadratic Zeeman shift minus δ_RL.
    pub fn base_detuning(&self) -> Result<f64> {
        Ok(quadratic_zeeman_shift(&self.field, &self.shift)? - self.raman_detuning)
    }

    /// Detuning of an atom at the trap bottom (E = 0).
    pub fn trap_bottom_detuning(&self) -> Result<f64> {
        let ls = differential_light_shift(&self.ensemble.trap, &self.shift.constants)?;
        Ok(self.base_detuning()? + self.shift.light_shift_sign * ls)
    }

    /// Ensemble-mean detuning, `base + sign (ω_HFS/|δ_eff|)(U0 − 3/2 k_B T)/ħ`.
    pub fn mean_detuning(&self) -> Result<f64> {
        Ok(atom_detuning_unchecked(
            3.0 * K_B * self.ensemble.temperature_k,
            &self.ensemble.trap,
            self.base_detuning()?,
            &self.shift,
        ))
    }

    /// δ_RL that puts the trap-bottom detuning at `target`.
    pub fn raman_detuning_for(&self, target: f64) -> Result<f64> {
        let current = self.trap_bottom_detuning()?;
        Ok(self.raman_detuning + current - target)
    }

    /// Dephasing time implied by the ensemble temperature.
    pub fn predicted_t2_star(&self) -> Result<f64> {
        t2star_from_temperature(self.ensemble.temperature_k, &self.ensemble.trap, &self.shift.constants)
    }

    /// Closed-form fringe expected for ideal pulses and no relaxation.
    ///
    /// The fringe frequency is the trap-bottom detuning (times the
    /// light-shift sign); the ensemble-mean offset from it is carried by the
    /// phase lag κ. Unprepared atoms are removed by push-out, so A = C = f/2.
    pub fn predicted_ramsey(&self) -> Result<RamseyParams> {
        let half = 0.5 * self.ensemble.prepared_fraction;
        Ok(RamseyParams {
            amplitude: half,
            offset: half,
            detuning: self.shift.light_shift_sign * self.trap_bottom_detuning()?,
            phase: 0.0,
            t2_star: self.predicted_t2_star()?,
        })
    }
}

/// Which time the echo visibility decays in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoDecayVariable {
    /// `exp(−t1 / T_echo)`.
    #[default]
    PulseDelay,
    /// `exp(−2 t1 / T_echo)`.
    TotalTime,
}

/// Echo visibility `exp(−t1 / t_echo)`.
pub fn echo_visibility(t1: f64, t_echo: f64) -> Result<f64> {
    echo_visibility_with(t1, t_echo, EchoDecayVariable::PulseDelay)
}

pub fn echo_visibility_with(t1: f64, t_echo: f64, variable: EchoDecayVariable) -> Result<f64> {
    ensure_finite("t1", t1)?;
    if t1 < 0.0 {
        return Err(Error::InvalidArgument(format!("t1 must be >= 0, got {t1}")));
    }
    if t_echo.is_nan() || t_echo <= 0.0 {
        return Err(Error::InvalidArgument(format!("t_echo must be > 0, got {t_echo}")));
    }
    let x = match variable {
        EchoDecayVariable::PulseDelay => t1,
        EchoDecayVariable::TotalTime => 2.0 * t1,
    };
    Ok((-x / t_echo).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    const UK: f64 = 1e-6;

    #[test]
    fn envelope_values() {
        let t2 = 4.08e-3;
        assert_eq!(envelope_alpha(0.0, t2).unwrap(), 1.0);
        let at_t2 = envelope_alpha(t2, t2).unwrap();
        assert!((at_t2 - 0.3672).abs() < 1e-4);
        assert!((at_t2 / (-1.0f64).exp() - 1.0).abs() < 0.002);
        assert!((envelope_alpha(2.0 * t2, t2).unwrap() - 0.0951).abs() < 1e-4);
        assert!(envelope_alpha(1.0, 0.0).is_err());
        assert!(envelope_alpha(1.0, -1.0).is_err());
    }

    #[test]
    fn kappa_values() {
        let t2 = 4.08e-3;
        assert_eq!(phase_kappa(0.0, t2).unwrap(), 0.0);
        assert!((phase_kappa(t2, t2).unwrap() + 2.3105).abs() < 1e-4);
        assert!((phase_kappa(1e9, t2).unwrap() + 1.5 * PI).abs() < 1e-9);
        assert_eq!(phase_kappa(-t2, t2).unwrap(), -phase_kappa(t2, t2).unwrap());
    }

    #[test]
    fn ramsey_limits() {
        let p = RamseyParams { amplitude: 0.3, offset: 0.4, detuning: TAU * 4814.0, phase: 0.0, t2_star: 4.08e-3 };
        assert!((ramsey_analytic(0.0, &p).unwrap() - 0.7).abs() < 1e-15);
        let period = TAU / p.detuning;
        assert!((period - 207.7e-6).abs() < 0.05e-6);
        let undamped = RamseyParams { amplitude: 0.5, offset: 0.5, t2_star: f64::INFINITY, ..p };
        for k in 0..50 {
            let t = k as f64 * 37e-6;
            let expect = 0.5 * (1.0 + (p.detuning * t).cos());
            assert!((ramsey_analytic(t, &undamped).unwrap() - expect).abs() < 1e-12);
        }
        let bad = RamseyParams { offset: 0.8, ..p };
        assert!(ramsey_analytic(0.0, &bad).is_err());
    }

    #[test]
    fn temperature_relation() {
        let trap = TrapParams::at_815nm(1e-3);
        let c = PhysicsConstants::default();
        let t = temperature_from_t2star(4.08e-3, &trap, &c).unwrap();
        assert!((t / UK - 15.6).abs() < 0.05, "{}", t / UK);
        let t40 = temperature_from_t2star(1.59e-3, &trap, &c).unwrap();
        assert!((t40 / UK - 40.0).abs() < 0.1, "{}", t40 / UK);
        let double = temperature_from_t2star(8.16e-3, &trap, &c).unwrap();
        assert!((double - 0.5 * t).abs() < 1e-18);
    }

    #[test]
    fn energies_are_reproducible() {
        let e = ThermalEnsemble::new(5, 40.0 * UK, TrapParams::at_815nm(1e-3));
        let a = sample_atom_energies(&e, 9).unwrap();
        let b = sample_atom_energies(&e, 9).unwrap();
        assert_eq!(a, b);
        let one = sample_atom_energies(&ThermalEnsemble { n_atoms: 1, ..e }, 9).unwrap();
        assert_eq!(one[0], a[0]);
        assert!(a.iter().all(|s| s.energy_j >= 0.0 && s.energy_j < e.trap.depth_joules()));
    }

    #[test]
    fn unbound_ensemble_rejected() {
        let e = ThermalEnsemble::new(5, 2e-3, TrapParams::at_815nm(1e-3));
        assert!(matches!(sample_atom_energies(&e, 1), Err(Error::UnboundEnsemble { .. })));
    }

    #[test]
    fn atom_detuning_limits() {
        let trap = TrapParams::at_815nm(400.0 * UK);
        let m = ShiftModel::default();
        let coldest = atom_detuning(&EnergySample { energy_j: 0.0 }, &trap, 10.0, &m).unwrap();
        let full = differential_light_shift(&trap, &m.constants).unwrap();
        assert!((coldest - 10.0 - full).abs() < 1e-9);
        let warm = atom_detuning(&EnergySample { energy_j: K_B * 100.0 * UK }, &trap, 10.0, &m).unwrap();
        assert!(warm < coldest);
        let out = atom_detuning(&EnergySample { energy_j: trap.depth_joules() }, &trap, 0.0, &m);
        assert!(matches!(out, Err(Error::OutOfModel { .. })));
    }

    #[test]
    fn echo_visibility_values() {
        assert_eq!(echo_visibility(0.0, 68e-3).unwrap(), 1.0);
        assert!((echo_visibility(68e-3, 68e-3).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((echo_visibility(34e-3, 68e-3).unwrap() - 0.6065).abs() < 1e-4);
        let total = echo_visibility_with(34e-3, 68e-3, EchoDecayVariable::TotalTime).unwrap();
        assert!((total - (-1.0f64).exp()).abs() < 1e-15);
        assert!(echo_visibility(-1.0, 1.0).is_err());
    }
}
