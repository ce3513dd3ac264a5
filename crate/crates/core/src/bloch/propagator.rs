//! Exact segment propagators.
//!
//! Within a segment the Bloch equations are linear with constant
//! coefficients, so the segment acts on the Bloch vector as an affine map
//! `r ↦ L r + c`. Relaxation-free segments are rotations (Rodrigues form),
//! free precession with relaxation has a closed form, and driven damped
//! segments use the matrix exponential of the augmented 4×4 generator.
//! These maps are what the ensemble Monte-Carlo uses; the RK4 integrator is
//! the independent reference they are tested against.

use nalgebra::{Matrix3, Matrix4, Vector3};

use super::integrate::generator;
use super::{BlochState, PulseSegment, RelaxationParams};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix3<f64>,
    pub offset: Vector3<f64>,
}

impl AffineMap {
    pub fn identity() -> Self {
        Self { linear: Matrix3::identity(), offset: Vector3::zeros() }
    }

    /// Proper rotation by `angle` about the unit vector `axis`.
    pub fn rotation(axis: Vector3<f64>, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let k = axis;
        #[rustfmt::skip]
        let cross = Matrix3::new(
             0.0, -k[2],  k[1],
             k[2],  0.0, -k[0],
            -k[1],  k[0],  0.0,
        );
        let linear = Matrix3::identity() * c + cross * s + (k * k.transpose()) * (1.0 - c);
        Self { linear, offset: Vector3::zeros() }
    }

    pub fn apply(&self, state: BlochState) -> BlochState {
        BlochState::from_vector(&(self.linear * state.to_vector() + self.offset))
    }

    /// The map that applies `self` first and `next` afterwards.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            linear: next.linear * self.linear,
            offset: next.linear * self.offset + next.offset,
        }
    }
}

/// Exact affine propagator of one segment.
pub fn segment_propagator(segment: &PulseSegment, relax: &RelaxationParams) -> Result<AffineMap> {
    segment.validate()?;
    relax.validate()?;
    Ok(match *segment {
        PulseSegment::Instant { area, phase } => {
            let (s, c) = phase.sin_cos();
            AffineMap::rotation(Vector3::new(c, s, 0.0), area)
        }
        PulseSegment::Timed { duration, drive } => {
            let w = drive.generalized_rabi();
            if relax.is_disabled() {
                if w == 0.0 || duration == 0.0 {
                    AffineMap::identity()
                } else {
                    let (s, c) = drive.phase.sin_cos();
                    let axis = Vector3::new(drive.rabi_frequency * c, drive.rabi_frequency * s, drive.detuning) / w;
                    AffineMap::rotation(axis, w * duration)
                }
            } else if drive.rabi_frequency == 0.0 {
                free_precession(duration, drive.detuning, relax)
            } else {
                let (m, b) = generator(&drive, relax);
                let mut aug = Matrix4::zeros();
                aug.fixed_view_mut::<3, 3>(0, 0).copy_from(&(m * duration));
                aug.fixed_view_mut::<3, 1>(0, 3).copy_from(&(b * duration));
                let e = aug.exp();
                AffineMap {
                    linear: e.fixed_view::<3, 3>(0, 0).into_owned(),
                    offset: e.fixed_view::<3, 1>(0, 3).into_owned(),
                }
            }
        }
    })
}

/// Undriven precession at `detuning` with T1/T2 relaxation.
pub(crate) fn free_precession(duration: f64, detuning: f64, relax: &RelaxationParams) -> AffineMap {
    let (s, c) = (detuning * duration).sin_cos();
    let e2 = (-relax.gamma2() * duration).exp();
    let e1 = (-relax.gamma1() * duration).exp();
    #[rustfmt::skip]
    let linear = Matrix3::new(
        e2 * c, -e2 * s, 0.0,
        e2 * s,  e2 * c, 0.0,
        0.0,     0.0,    e1,
    );
    AffineMap { linear, offset: Vector3::new(0.0, 0.0, relax.w_eq * (1.0 - e1)) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::{evolve_segment, DriveParams};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn close(a: BlochState, b: BlochState, tol: f64) -> bool {
        (a.u - b.u).abs() < tol && (a.v - b.v).abs() < tol && (a.w - b.w).abs() < tol
    }

    #[test]
    fn exact_maps_agree_with_rk4() {
        let start = BlochState::new(0.2, -0.5, 0.6);
        let cases = [
            (DriveParams::new(TAU * 995.0, TAU * 400.0, 0.3), RelaxationParams::none()),
            (DriveParams::new(TAU * 995.0, TAU * -700.0, 1.1), RelaxationParams::new(3e-3, 1.5e-3, 0.2)),
            (DriveParams::free(TAU * 4814.0), RelaxationParams::new(68e-3, 136e-3, 0.0)),
            (DriveParams::free(TAU * 4814.0), RelaxationParams::none()),
        ];
        for (drive, relax) in cases {
            let seg = PulseSegment::timed(2.3e-3, drive);
            let exact = segment_propagator(&seg, &relax).unwrap().apply(start);
            let rk4 = evolve_segment(start, &seg, &relax, 1e-3).unwrap();
            assert!(close(exact, rk4, 1e-9), "{drive:?} {relax:?}: {exact:?} vs {rk4:?}");
        }
    }

    #[test]
    fn instant_half_pi_sends_upper_to_minus_v() {
        let m = segment_propagator(&PulseSegment::instant(FRAC_PI_2, 0.0), &RelaxationParams::none()).unwrap();
        assert!(close(m.apply(BlochState::UPPER), BlochState::new(0.0, -1.0, 0.0), 1e-15));
    }

    #[test]
    fn composition_order() {
        let relax = RelaxationParams::none();
        let a = segment_propagator(&PulseSegment::instant(FRAC_PI_2, 0.0), &relax).unwrap();
        let b = segment_propagator(&PulseSegment::gap(1e-4, TAU * 1000.0), &relax).unwrap();
        let s = BlochState::UPPER;
        assert!(close(a.then(&b).apply(s), b.apply(a.apply(s)), 1e-15));
    }
}
