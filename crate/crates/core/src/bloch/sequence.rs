use std::f64::consts::{FRAC_PI_2, PI};

use super::integrate::integrate_rk4;
use super::{propagator, BlochState, PulseSegment, PulseSpec, RelaxationParams};
use crate::trace::{Axis, PopulationTrace};
use crate::{Error, Result};

/// Total duration of a sequence, s.
pub fn sequence_duration(sequence: &[PulseSegment]) -> f64 {
    sequence.iter().map(PulseSegment::duration).sum()
}

/// Run `sequence` from `initial` and record P0 at `sample_times`.
///
/// A sample at time `t` sees every instantaneous pulse scheduled at or before
/// `t`. Timed segments are integrated with RK4 (see [`super::evolve_segment`]),
/// split at the sample times.
pub fn run_sequence(
    initial: BlochState,
    sequence: &[PulseSegment],
    relax: &RelaxationParams,
    sample_times: &[f64],
    max_step: f64,
) -> Result<PopulationTrace> {
    initial.validate()?;
    relax.validate()?;
    for seg in sequence {
        seg.validate()?;
    }
    if max_step.is_nan() || max_step <= 0.0 {
        return Err(Error::InvalidArgument(format!("max_step must be > 0, got {max_step}")));
    }
    let total = sequence_duration(sequence);
    let slack = 1e-12 * total.max(1e-300);
    for (k, &t) in sample_times.iter().enumerate() {
        if !t.is_finite() || t < 0.0 || t > total + slack {
            return Err(Error::InvalidArgument(format!(
                "sample time {t} outside the sequence span [0, {total}]"
            )));
        }
        if k > 0 && t <= sample_times[k - 1] {
            return Err(Error::InvalidArgument("sample times must be strictly increasing".into()));
        }
    }

    let mut p0 = Vec::with_capacity(sample_times.len());
    let mut state = initial;
    let mut cursor = 0.0;
    let mut next = 0;
    for seg in sequence {
        match *seg {
            PulseSegment::Instant { .. } => {
                state = propagator::segment_propagator(seg, relax)?.apply(state);
            }
            PulseSegment::Timed { duration, .. } if duration == 0.0 => {}
            PulseSegment::Timed { duration, drive } => {
                while next < sample_times.len() && sample_times[next] <= cursor {
                    p0.push(state.p0());
                    next += 1;
                }
                let end = cursor + duration;
                let mut local = cursor;
                while next < sample_times.len() && sample_times[next] < end {
                    let t = sample_times[next];
                    state = integrate_rk4(state, t - local, &drive, relax, max_step);
                    local = t;
                    p0.push(state.p0());
                    next += 1;
                }
                state = integrate_rk4(state, end - local, &drive, relax, max_step);
                cursor = end;
            }
        }
    }
    while next < sample_times.len() {
        p0.push(state.p0());
        next += 1;
    }
    PopulationTrace::new(Axis::Time, sample_times.to_vec(), p0)
}

/// π/2 – free precession for `gap` – π/2, all at the atom's `detuning`.
pub fn ramsey_sequence(pulse: &PulseSpec, gap: f64, detuning: f64) -> Vec<PulseSegment> {
    vec![
        pulse.segment(FRAC_PI_2, 0.0, detuning),
        PulseSegment::gap(gap, detuning),
        pulse.segment(FRAC_PI_2, 0.0, detuning),
    ]
}

/// Spin-echo sequence evaluated at free-evolution time `t`.
///
/// For `t < t1` this is the plain Ramsey sequence. Otherwise a π pulse about
/// the axis at `echo_phase` is inserted at `t1` and the closing π/2 pulse is
/// applied about the opposite axis, so that the refocused signal at `2 t1`
/// reproduces the Ramsey value at `t = 0`.
pub fn echo_sequence(pulse: &PulseSpec, t1: f64, t: f64, detuning: f64, echo_phase: f64) -> Vec<PulseSegment> {
    if t < t1 {
        return ramsey_sequence(pulse, t, detuning);
    }
    vec![
        pulse.segment(FRAC_PI_2, 0.0, detuning),
        PulseSegment::gap(t1, detuning),
        pulse.segment(PI, echo_phase, detuning),
        PulseSegment::gap(t - t1, detuning),
        pulse.segment(FRAC_PI_2, PI, detuning),
    ]
}
