use std::f64::consts::TAU;

use crate::trace::{Axis, PopulationTrace};
use crate::{ensure_finite, Error, Result};

/// Population transferred by a rectangular pulse from a pure basis state:
/// `(Ω²/W²) sin²(W t / 2)` with `W = sqrt(Ω² + δ²)`.
pub fn rabi_transfer(t: f64, omega: f64, detuning: f64) -> Result<f64> {
    ensure_finite("t", t)?;
    ensure_finite("omega", omega)?;
    ensure_finite("detuning", detuning)?;
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("pulse time must be >= 0, got {t}")));
    }
    Ok(transfer_unchecked(t, omega, detuning))
}

pub(crate) fn transfer_unchecked(t: f64, omega: f64, detuning: f64) -> f64 {
    let w2 = omega * omega + detuning * detuning;
    if w2 == 0.0 {
        return 0.0;
    }
    let s = (0.5 * w2.sqrt() * t).sin();
    omega * omega / w2 * s * s
}

/// Transfer probability of a `t_pulse` rectangular pulse versus drive detuning.
pub fn lineshape_scan(t_pulse: f64, omega: f64, detunings: &[f64]) -> Result<PopulationTrace> {
    if detunings.is_empty() {
        return Err(Error::InvalidArgument("empty detuning list".into()));
    }
    let p0 = detunings
        .iter()
        .map(|&d| rabi_transfer(t_pulse, omega, d))
        .collect::<Result<Vec<_>>>()?;
    PopulationTrace::new(Axis::Detuning, detunings.to_vec(), p0)
}

/// Positive detuning of the first lineshape zeros, where `W t = 2π`.
/// `None` when the pulse is too short for a zero to exist (`Ω t ≥ 2π`).
pub fn lineshape_zeros(t_pulse: f64, omega: f64) -> Option<f64> {
    let k = TAU / t_pulse;
    let d2 = k * k - omega * omega;
    (d2 > 0.0).then(|| d2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const OMEGA: f64 = TAU * 995.0;

    #[test]
    fn resonant_pi_pulse_is_complete() {
        assert!((rabi_transfer(PI / OMEGA, OMEGA, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn detuned_by_omega() {
        let p = rabi_transfer(PI / OMEGA, OMEGA, OMEGA).unwrap();
        assert!((p - 0.3165).abs() < 1e-4);
    }

    #[test]
    fn full_generalized_cycle_is_zero() {
        let t = 503e-6;
        let d = lineshape_zeros(t, OMEGA).unwrap();
        assert!(rabi_transfer(t, OMEGA, d).unwrap().abs() < 1e-20);
        assert!(rabi_transfer(t, OMEGA, -d).unwrap().abs() < 1e-20);
    }

    #[test]
    fn scan_peaks_at_resonance_and_is_symmetric() {
        let t = 503e-6;
        let detunings: Vec<f64> = (-200..=200).map(|k| TAU * 50.0 * k as f64).collect();
        let scan = lineshape_scan(t, OMEGA, &detunings).unwrap();
        let (imax, _) = scan
            .p0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        assert_eq!(detunings[imax], 0.0);
        let n = detunings.len();
        for k in 0..n {
            assert_eq!(scan.p0[k], scan.p0[n - 1 - k]);
        }
        assert!(lineshape_scan(t, OMEGA, &[]).is_err());
        assert!(rabi_transfer(-1.0, OMEGA, 0.0).is_err());
        assert!(rabi_transfer(1.0, f64::INFINITY, 0.0).is_err());
    }
}
