//! Simultaneous Ramsey measurement over a loaded trap register.
//!
//! For every sample time each site runs one shot: freshly sampled thermal
//! atoms go through the Ramsey sequence, each prepared atom ends in the
//! lower level with its own probability, push-out removes the rest, and one
//! fluorescence frame of the whole register is rendered and integrated.
//! Populations are normalised to an independent reference exposure of all
//! loaded atoms. Every site trace is then fitted with the Ramsey model.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bloch::{PulseSpec, RelaxationParams};
use crate::dephasing::{ramsey_p0, sample_atom_energies, EnsembleExperiment, ThermalEnsemble};
use crate::detection::{
    integrate_sites, pushout_select, render_frame, DetectionParams, Emitter, Frame, ReadoutResult, SiteLocation,
};
use crate::fit::{fit_curve, initial_guess, FitOptions, FitResult, ModelKind, ModelSpec};
use crate::register::{load_array, ArraySpec, LoadingParams, SiteState};
use crate::rng::{derive_seed, stream_rng};
use crate::trace::{Axis, PopulationTrace};
use crate::trap::{FieldParams, ShiftModel};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrayRamseyConfig {
    pub array: ArraySpec,
    pub loading: LoadingParams,
    pub detection: DetectionParams,
    pub field: FieldParams,
    pub shift: ShiftModel,
    /// δ_RL = ω_RL − ω_HFS, rad/s.
    pub raman_detuning_rad_s: f64,
    pub pulse: PulseSpec,
    pub relax: RelaxationParams,
    pub prepared_fraction: f64,
    /// Ramsey gaps, s, strictly increasing.
    pub times_s: Vec<f64>,
    /// Aperture radius for site integration; `None` means four PSF widths.
    pub aperture_radius_m: Option<f64>,
    /// Keep every rendered frame in the result.
    pub keep_frames: bool,
}

impl Default for ArrayRamseyConfig {
    fn default() -> Self {
        Self {
            array: ArraySpec::default(),
            loading: LoadingParams::default(),
            detection: DetectionParams::default(),
            field: FieldParams::default(),
            shift: ShiftModel::default(),
            raman_detuning_rad_s: TAU * 1e3,
            pulse: PulseSpec::Ideal,
            relax: RelaxationParams::none(),
            prepared_fraction: ThermalEnsemble::DEFAULT_PREPARED_FRACTION,
            times_s: (0..=120).map(|k| k as f64 * 50e-6).collect(),
            aperture_radius_m: None,
            keep_frames: false,
        }
    }
}

impl ArrayRamseyConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.loading.validate()?;
        self.detection.validate()?;
        self.field.validate()?;
        self.shift.validate()?;
        self.pulse.validate()?;
        self.relax.validate()?;
        crate::ensure_finite("raman_detuning_rad_s", self.raman_detuning_rad_s)?;
        if !(0.0..=1.0).contains(&self.prepared_fraction) {
            return Err(Error::InvalidArgument(format!(
                "prepared_fraction must lie in [0, 1], got {}",
                self.prepared_fraction
            )));
        }
        if self.times_s.is_empty() {
            return Err(Error::InvalidArgument("times_s is empty".into()));
        }
        if self.times_s.iter().any(|t| !t.is_finite() || *t < 0.0) || self.times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("times_s must be non-negative and strictly increasing".into()));
        }
        if let Some(r) = self.aperture_radius_m {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidArgument(format!("aperture radius must be > 0, got {r}")));
            }
        }
        Ok(())
    }

    pub fn aperture_radius(&self) -> f64 {
        self.aperture_radius_m.unwrap_or(4.0 * self.detection.psf_sigma_m)
    }

    /// Ensemble settings of one loaded site.
    pub fn site_experiment(&self, site: &SiteState) -> EnsembleExperiment {
        let mut ensemble = ThermalEnsemble::new(site.atom_number as usize, site.temperature_k, self.array.trap(site.depth_k));
        ensemble.prepared_fraction = self.prepared_fraction;
        EnsembleExperiment {
            ensemble,
            shift: self.shift,
            field: self.field,
            raman_detuning: self.raman_detuning_rad_s,
            pulse: self.pulse,
            relax: self.relax,
        }
    }
}

/// Fit outcome of one site.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteFit {
    pub row: usize,
    pub col: usize,
    pub depth_k: f64,
    pub atom_number: u64,
    /// Trap-bottom detuning the site should show, rad/s.
    pub expected_detuning: f64,
    /// Reference-frame counts of the loaded atoms.
    pub reference_counts: f64,
    pub fit: Option<FitResult>,
    /// Why the fit is missing.
    pub error: Option<String>,
}

impl SiteFit {
    /// Fitted fringe amplitude converted back to counts.
    pub fn amplitude_counts(&self) -> Option<f64> {
        Some(self.fit.as_ref()?.value("amplitude")? * self.reference_counts)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayRamseyResult {
    pub sites: Vec<SiteState>,
    pub times: Vec<f64>,
    /// Per-site population traces in row-major site order.
    pub traces: Vec<PopulationTrace>,
    pub reference: ReadoutResult,
    pub fits: Vec<SiteFit>,
    /// One frame per sample time when `keep_frames` is set.
    pub frames: Vec<Frame>,
    pub reference_frame: Frame,
}

/// Run the full simulated measurement.
pub fn run_array_ramsey(cfg: &ArrayRamseyConfig, seed: u64) -> Result<ArrayRamseyResult> {
    cfg.validate()?;
    let sites = load_array(&cfg.array, &cfg.loading, &cfg.field, &cfg.shift, seed)?;
    let locations: Vec<SiteLocation> =
        sites.iter().map(|s| SiteLocation { row: s.row, col: s.col, position: s.position }).collect();
    let experiments: Vec<EnsembleExperiment> = sites.iter().map(|s| cfg.site_experiment(s)).collect();
    for (s, e) in sites.iter().zip(&experiments) {
        if s.atom_number > 0 {
            e.validate()?;
        }
    }
    let radius = cfg.aperture_radius();

    let all_atoms: Vec<Emitter> =
        sites.iter().map(|s| Emitter { position: s.position, atoms: s.atom_number as f64 }).collect();
    let reference_frame = render_frame(&all_atoms, &cfg.detection, derive_seed(seed, "array-reference", 0))?;
    let reference = integrate_sites(&reference_frame, &locations, radius, None)?;
    let reference_counts = reference.counts();

    let survivors: Vec<Vec<f64>> = cfg
        .times_s
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| {
            sites
                .iter()
                .zip(&experiments)
                .enumerate()
                .map(|(k, (site, exp))| shot(exp, site, &cfg.detection, t, seed, k, ti))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut populations = vec![Vec::with_capacity(cfg.times_s.len()); sites.len()];
    let mut frames = Vec::new();
    for (ti, counts) in survivors.iter().enumerate() {
        let emitters: Vec<Emitter> =
            sites.iter().zip(counts).map(|(s, &n)| Emitter { position: s.position, atoms: n }).collect();
        let frame = render_frame(&emitters, &cfg.detection, derive_seed(seed, "array-frame", ti as u64))?;
        let readout = integrate_sites(&frame, &locations, radius, Some(&reference_counts))?;
        for (p, r) in populations.iter_mut().zip(&readout.sites) {
            p.push(r.population);
        }
        if cfg.keep_frames {
            frames.push(frame);
        }
    }
    let traces: Vec<PopulationTrace> = populations
        .into_iter()
        .map(|p| PopulationTrace::measured(Axis::Time, cfg.times_s.clone(), p))
        .collect::<Result<_>>()?;

    let fits = sites
        .par_iter()
        .zip(&traces)
        .zip(&experiments)
        .zip(&reference_counts)
        .map(|(((site, trace), exp), &reference_counts)| {
            let (fit, error) = match fit_site(trace) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(SiteFit {
                row: site.row,
                col: site.col,
                depth_k: site.depth_k,
                atom_number: site.atom_number,
                expected_detuning: exp.shift.light_shift_sign * exp.trap_bottom_detuning()?,
                reference_counts,
                fit,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ArrayRamseyResult { sites, times: cfg.times_s.clone(), traces, reference, fits, frames, reference_frame })
}

/// Atoms left in the trap after one Ramsey shot at gap `t`.
fn shot(
    exp: &EnsembleExperiment,
    site: &SiteState,
    detection: &DetectionParams,
    t: f64,
    seed: u64,
    site_index: usize,
    time_index: usize,
) -> Result<f64> {
    if site.atom_number == 0 {
        return Ok(0.0);
    }
    let shot_seed = derive_seed(seed, "array-shot", (site_index as u64) << 32 | time_index as u64);
    let energies = sample_atom_energies(&exp.ensemble, shot_seed)?;
    let base = exp.base_detuning()?;
    let mut rng = stream_rng(shot_seed, u64::MAX);
    let mut lower = 0u64;
    for e in &energies {
        if !rng.random_bool(exp.ensemble.prepared_fraction) {
            continue;
        }
        let detuning = crate::dephasing::atom_detuning(e, &exp.ensemble.trap, base, &exp.shift)?;
        let p0 = ramsey_p0(exp, detuning, t)?.clamp(0.0, 1.0);
        if rng.random_bool(p0) {
            lower += 1;
        }
    }
    Ok(pushout_select(lower, site.atom_number - lower, detection, &mut rng)? as f64)
}

fn fit_site(trace: &PopulationTrace) -> Result<FitResult> {
    let model = ModelSpec::new(ModelKind::RamseyEq4);
    let init = initial_guess(&model, &trace.x, &trace.p0)?;
    fit_curve(&model, &trace.x, &trace.p0, &init, &FitOptions::default())
}

/// `fits.json` body: one record per site.
pub fn fits_json(fits: &[SiteFit]) -> serde_json::Value {
    serde_json::json!({ "sites": fits })
}

/// Ordinary least-squares slope and intercept of `y` on `x`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("regression needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("regressor has zero spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("rank correlation needs two or more paired points".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let m = (n + 1.0) / 2.0;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - m) * (b - m)).sum();
    let vx: f64 = rx.iter().map(|a| (a - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - m).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::DegenerateData("constant ranks".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn regression_recovers_line() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (m, b) = linear_regression(&x, &y).unwrap();
        assert!((m - 3.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ArrayRamseyConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ArrayRamseyConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(serde_json::from_str::<ArrayRamseyConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn bad_times_rejected() {
        let cfg = ArrayRamseyConfig { times_s: vec![1e-3, 0.5e-3], ..ArrayRamseyConfig::default() };
        assert!(run_array_ramsey(&cfg, 0).is_err());
    }
}
