//! Monte-Carlo over a sampled thermal ensemble.
//!
//! Atoms are evaluated in fixed chunks of [`CHUNK`] in parallel; each chunk
//! accumulates its moments sequentially and the chunk results are summed in
//! chunk order, so a given seed yields bit-identical output for any thread
//! count.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{atom_detuning_unchecked, sample_atom_energies, EnsembleExperiment};
use crate::bloch::{segment_propagator, AffineMap, BlochState};
use crate::trace::{Axis, PopulationTrace};
use crate::{Error, Result};

const CHUNK: usize = 1024;

/// Ensemble-averaged trace with Monte-Carlo uncertainties.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McTrace {
    /// P0 normalised to all trapped atoms (prepared fraction included).
    pub trace: PopulationTrace,
    pub p0_stderr: Vec<f64>,
    /// Fringe modulation amplitude `f/2 · |⟨u + i v⟩|` just before the
    /// closing π/2 pulse: the amplitude the fringe would show if the
    /// readout phase were scanned.
    pub modulation: Vec<f64>,
    pub modulation_stderr: Vec<f64>,
}

#[derive(Clone, Copy, Default)]
struct Moments {
    p0: f64,
    p0_sq: f64,
    u: f64,
    v: f64,
    uu: f64,
    vv: f64,
    uv: f64,
}

impl Moments {
    fn add_sample(&mut self, before_readout: BlochState, p0: f64) {
        let (u, v) = (before_readout.u, before_readout.v);
        self.p0 += p0;
        self.p0_sq += p0 * p0;
        self.u += u;
        self.v += v;
        self.uu += u * u;
        self.vv += v * v;
        self.uv += u * v;
    }

    fn add(&mut self, o: &Moments) {
        self.p0 += o.p0;
        self.p0_sq += o.p0_sq;
        self.u += o.u;
        self.v += o.v;
        self.uu += o.uu;
        self.vv += o.vv;
        self.uv += o.uv;
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidArgument("times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Per-atom propagators that do not depend on the sample time.
struct AtomMaps {
    detuning: f64,
    after_first: BlochState,
    readout: AffineMap,
}

fn atom_maps(exp: &EnsembleExperiment, detuning: f64) -> Result<AtomMaps> {
    let half = exp.pulse.segment(FRAC_PI_2, 0.0, detuning);
    let first = segment_propagator(&half, &exp.relax)?;
    Ok(AtomMaps { detuning, after_first: first.apply(BlochState::UPPER), readout: first })
}

fn free(exp: &EnsembleExperiment, t: f64, detuning: f64) -> AffineMap {
    crate::bloch::propagator_free(t, detuning, &exp.relax)
}

/// Ramsey readout P0 of a single prepared atom with the given detuning.
pub(crate) fn ramsey_p0(exp: &EnsembleExperiment, detuning: f64, t: f64) -> Result<f64> {
    let maps = atom_maps(exp, detuning)?;
    let s = free(exp, t, detuning).apply(maps.after_first);
    Ok(maps.readout.apply(s).p0())
}

/// Drive the per-atom closure over the sampled ensemble and reduce.
fn run<F>(exp: &EnsembleExperiment, n_times: usize, seed: u64, axis: Axis, x: &[f64], atom: F) -> Result<McTrace>
where
    F: Fn(f64, &mut [Moments]) -> Result<()> + Sync,
{
    exp.validate()?;
    let energies = sample_atom_energies(&exp.ensemble, seed)?;
    let base = exp.base_detuning()?;
    let trap = exp.ensemble.trap;
    let chunks: Vec<Vec<Moments>> = energies
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![Moments::default(); n_times];
            for e in chunk {
                atom(atom_detuning_unchecked(e.energy_j, &trap, base, &exp.shift), &mut acc)?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![Moments::default(); n_times];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.add(c);
        }
    }

    let n = energies.len() as f64;
    let f = exp.ensemble.prepared_fraction;
    let mut p0 = Vec::with_capacity(n_times);
    let mut p0_se = Vec::with_capacity(n_times);
    let mut modulation = Vec::with_capacity(n_times);
    let mut modulation_se = Vec::with_capacity(n_times);
    for m in &total {
        let mean = m.p0 / n;
        let var = (m.p0_sq / n - mean * mean).max(0.0);
        p0.push(f * mean);
        p0_se.push(f * (var / n).sqrt());

        let (mu, mv) = (m.u / n, m.v / n);
        let amp = mu.hypot(mv);
        let (var_u, var_v, cov) = (
            (m.uu / n - mu * mu).max(0.0),
            (m.vv / n - mv * mv).max(0.0),
            m.uv / n - mu * mv,
        );
        let proj_var = if amp > 0.0 {
            let (eu, ev) = (mu / amp, mv / amp);
            (eu * eu * var_u + ev * ev * var_v + 2.0 * eu * ev * cov).max(0.0)
        } else {
            0.5 * (var_u + var_v)
        };
        modulation.push(0.5 * f * amp);
        modulation_se.push(0.5 * f * (proj_var / n).sqrt());
    }
    Ok(McTrace {
        trace: PopulationTrace::measured(axis, x.to_vec(), p0)?,
        p0_stderr: p0_se,
        modulation,
        modulation_stderr: modulation_se,
    })
}

/// Ramsey signal of the ensemble: π/2 – free precession for `t` – π/2.
pub fn mc_ramsey(exp: &EnsembleExperiment, times: &[f64], seed: u64) -> Result<McTrace> {
    check_times(times)?;
    run(exp, times.len(), seed, Axis::Time, times, |detuning, acc| {
        let maps = atom_maps(exp, detuning)?;
        for (slot, &t) in acc.iter_mut().zip(times) {
            let s = free(exp, t, maps.detuning).apply(maps.after_first);
            slot.add_sample(s, maps.readout.apply(s).p0());
        }
        Ok(())
    })
}

/// Spin-echo signal: π/2 at 0, π about the axis at `echo_phase` after `t1`
/// of free evolution, closing π/2 after a total free evolution `t`.
/// Samples with `t < t1` are plain Ramsey points.
pub fn mc_echo(exp: &EnsembleExperiment, t1: f64, echo_phase: f64, times: &[f64], seed: u64) -> Result<McTrace> {
    check_times(times)?;
    if !(t1.is_finite() && t1 >= 0.0) {
        return Err(Error::InvalidArgument(format!("t1 must be finite and >= 0, got {t1}")));
    }
    if times.last().is_none_or(|&last| last < 2.0 * t1) {
        return Err(Error::InvalidArgument("echo times must extend to at least 2 t1".into()));
    }
    echo_unchecked(exp, t1, echo_phase, times, seed)
}

fn echo_unchecked(exp: &EnsembleExperiment, t1: f64, echo_phase: f64, times: &[f64], seed: u64) -> Result<McTrace> {
    run(exp, times.len(), seed, Axis::Echo, times, |detuning, acc| {
        let maps = atom_maps(exp, detuning)?;
        let pi = segment_propagator(&exp.pulse.segment(PI, echo_phase, detuning), &exp.relax)?;
        let close = segment_propagator(&exp.pulse.segment(FRAC_PI_2, PI, detuning), &exp.relax)?;
        let refocused = pi.apply(free(exp, t1, detuning).apply(maps.after_first));
        for (slot, &t) in acc.iter_mut().zip(times) {
            if t < t1 {
                let s = free(exp, t, detuning).apply(maps.after_first);
                slot.add_sample(s, maps.readout.apply(s).p0());
            } else {
                let s = free(exp, t - t1, detuning).apply(refocused);
                slot.add_sample(s, close.apply(s).p0());
            }
        }
        Ok(())
    })
}

/// One point of an echo-visibility scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoPoint {
    pub t1: f64,
    /// Echo modulation at `2 t1` over the Ramsey modulation at `t = 0`.
    pub visibility: f64,
    pub stderr: f64,
}

/// Echo visibility versus `t1` from the Monte-Carlo. All points share the
/// atom sample of `seed`.
pub fn mc_echo_visibility(exp: &EnsembleExperiment, t1s: &[f64], echo_phase: f64, seed: u64) -> Result<Vec<EchoPoint>> {
    let reference = mc_ramsey(exp, &[0.0], seed)?;
    let (m0, se0) = (reference.modulation[0], reference.modulation_stderr[0]);
    if m0 <= 0.0 {
        return Err(Error::DegenerateData("no Ramsey modulation at t = 0".into()));
    }
    t1s.iter()
        .map(|&t1| {
            if !(t1.is_finite() && t1 >= 0.0) {
                return Err(Error::InvalidArgument(format!("t1 must be finite and >= 0, got {t1}")));
            }
            let echo = echo_unchecked(exp, t1, echo_phase, &[2.0 * t1], seed)?;
            let (m, se) = (echo.modulation[0], echo.modulation_stderr[0]);
            let v = m / m0;
            let rel = ((se / m.max(f64::MIN_POSITIVE)).powi(2) + (se0 / m0).powi(2)).sqrt();
            Ok(EchoPoint { t1, visibility: v, stderr: v * rel })
        })
        .collect()
}

/// CSV with header `t1_s,visibility`.
pub fn visibility_csv(points: &[EchoPoint]) -> String {
    let t1: Vec<f64> = points.iter().map(|p| p.t1).collect();
    let v: Vec<f64> = points.iter().map(|p| p.visibility).collect();
    crate::io::two_column_csv(("t1_s", "visibility"), &t1, &v)
}
