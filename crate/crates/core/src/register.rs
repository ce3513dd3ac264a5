//! Geometry, depth profile and loading of a 2-D microlens trap register.
//!
//! Sites sit on a square grid centred on the illumination axis. The
//! illuminating beam is Gaussian, so site depths fall off as
//! `exp(−2r²/w²)` with distance `r` from the axis, and so do the loaded atom
//! numbers (through a power law) and the trap-induced resonance shifts.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, stream_rng};
use crate::trap::{total_resonance_shift, FieldParams, ShiftModel, TrapParams};
use crate::{ensure_finite, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    /// Focus separation in the atom plane, m.
    pub pitch_m: f64,
    /// 1/e² waist of each site, m.
    pub site_waist_m: f64,
    /// 1/e² waist of the illuminating beam referred to the atom plane, m.
    /// Infinite for flat illumination.
    #[serde(with = "crate::io::infinite_as_null")]
    pub illumination_waist_m: f64,
    /// Depth of a trap on the beam axis, K.
    pub center_depth_k: f64,
    /// Fraction of incident light focused into the traps.
    pub diffraction_efficiency: f64,
    pub wavelength_m: f64,
    /// Effective detuning of the trap light, rad/s.
    pub effective_detuning: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            pitch_m: 54e-6,
            site_waist_m: 1.7e-6,
            illumination_waist_m: 194.6e-6,
            center_depth_k: 1.2e-3,
            diffraction_efficiency: 0.40,
            wavelength_m: 815e-9,
            effective_detuning: TrapParams::EFFECTIVE_DETUNING_815NM,
        }
    }
}

impl ArraySpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(format!("array must have at least one site, got {}x{}", self.rows, self.cols)));
        }
        ensure_finite("pitch_m", self.pitch_m)?;
        ensure_finite("center_depth_k", self.center_depth_k)?;
        if !(self.site_waist_m > 0.0) || self.pitch_m <= 2.0 * self.site_waist_m {
            return Err(Error::InvalidArgument(format!(
                "pitch {} m must exceed twice the site waist {} m",
                self.pitch_m, self.site_waist_m
            )));
        }
        if self.illumination_waist_m.is_nan() || self.illumination_waist_m <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "illumination waist must be > 0, got {}",
                self.illumination_waist_m
            )));
        }
        if !(self.diffraction_efficiency > 0.0 && self.diffraction_efficiency <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "diffraction efficiency must lie in (0, 1], got {}",
                self.diffraction_efficiency
            )));
        }
        if self.center_depth_k < 0.0 {
            return Err(Error::InvalidArgument(format!("center depth must be >= 0, got {}", self.center_depth_k)));
        }
        self.trap(self.center_depth_k).validate()
    }

    /// Trap parameters of a site with the given depth.
    pub fn trap(&self, depth_k: f64) -> TrapParams {
        TrapParams {
            depth_k,
            waist_m: self.site_waist_m,
            wavelength_m: self.wavelength_m,
            effective_detuning: self.effective_detuning,
        }
    }

    /// Position of site `(row, col)`, m, with the grid centred on the origin.
    pub fn position(&self, row: usize, col: usize) -> [f64; 2] {
        let x = (col as f64 - (self.cols as f64 - 1.0) / 2.0) * self.pitch_m;
        let y = (row as f64 - (self.rows as f64 - 1.0) / 2.0) * self.pitch_m;
        [x, y]
    }

    fn depth_at(&self, position: [f64; 2]) -> f64 {
        let r2 = position[0] * position[0] + position[1] * position[1];
        let w = self.illumination_waist_m;
        if w.is_infinite() {
            self.center_depth_k
        } else {
            self.center_depth_k * (-2.0 * r2 / (w * w)).exp()
        }
    }
}

/// Site positions in row-major order.
pub fn site_grid(spec: &ArraySpec) -> Result<Vec<[f64; 2]>> {
    spec.validate()?;
    Ok((0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| (r, c)))
        .map(|(r, c)| spec.position(r, c))
        .collect())
}

/// Site depths in row-major order, K.
pub fn site_depths(spec: &ArraySpec) -> Result<Vec<f64>> {
    Ok(site_grid(spec)?.into_iter().map(|p| spec.depth_at(p)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadingParams {
    /// Power-law exponent linking loaded atom number to relative depth.
    pub exponent: f64,
    /// Expected atom number in a trap at the centre depth.
    pub center_atoms: f64,
    /// Ensemble temperature, K.
    pub temperature_k: f64,
    /// Scale each site's temperature with its depth relative to the centre.
    pub depth_scaled_temperature: bool,
    /// Draw atom numbers from a Poisson distribution around the expectation.
    pub poisson_jitter: bool,
}

impl Default for LoadingParams {
    fn default() -> Self {
        Self {
            exponent: 3.5,
            center_atoms: 500.0,
            temperature_k: 30e-6,
            depth_scaled_temperature: false,
            poisson_jitter: true,
        }
    }
}

impl LoadingParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("exponent", self.exponent), ("center_atoms", self.center_atoms), ("temperature_k", self.temperature_k)] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteState {
    pub row: usize,
    pub col: usize,
    pub position: [f64; 2],
    pub depth_k: f64,
    /// Loading expectation before jitter.
    pub expected_atoms: f64,
    pub atom_number: u64,
    pub temperature_k: f64,
    /// Trap-induced shift of the clock resonance, rad/s.
    pub resonance_shift: f64,
}

#[derive(Serialize)]
struct SiteRecord {
    index: [usize; 2],
    position_m: [f64; 2],
    depth_k: f64,
    atoms: u64,
    shift_hz: f64,
}

/// Build the per-site state of a loaded register.
///
/// Site `k` (row-major) draws its atom number from its own random stream,
/// so loading is deterministic per seed and independent of evaluation order.
pub fn load_array(
    spec: &ArraySpec,
    loading: &LoadingParams,
    field: &FieldParams,
    shift: &ShiftModel,
    seed: u64,
) -> Result<Vec<SiteState>> {
    loading.validate()?;
    let positions = site_grid(spec)?;
    let load_seed = derive_seed(seed, "register-load", 0);
    positions
        .into_iter()
        .enumerate()
        .map(|(k, position)| {
            let (row, col) = (k / spec.cols, k % spec.cols);
            let depth_k = spec.depth_at(position);
            let ratio = if spec.center_depth_k > 0.0 { depth_k / spec.center_depth_k } else { 1.0 };
            let expected_atoms = loading.center_atoms * ratio.powf(loading.exponent);
            let mean = expected_atoms.round();
            let atom_number = if loading.poisson_jitter && mean > 0.0 {
                let mut rng = stream_rng(load_seed, k as u64);
                Poisson::new(mean).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng) as u64
            } else {
                mean as u64
            };
            let temperature_k = if loading.depth_scaled_temperature {
                loading.temperature_k * ratio
            } else {
                loading.temperature_k
            };
            let resonance_shift = total_resonance_shift(&spec.trap(depth_k), field, shift)?;
            Ok(SiteState { row, col, position, depth_k, expected_atoms, atom_number, temperature_k, resonance_shift })
        })
        .collect()
}

/// JSON description of a loaded register: per-site index, position (m),
/// depth (K), atoms and shift (Hz).
pub fn array_json(sites: &[SiteState]) -> serde_json::Value {
    let records: Vec<SiteRecord> = sites
        .iter()
        .map(|s| SiteRecord {
            index: [s.row, s.col],
            position_m: s.position,
            depth_k: s.depth_k,
            atoms: s.atom_number,
            shift_hz: s.resonance_shift / std::f64::consts::TAU,
        })
        .collect();
    serde_json::json!({ "sites": records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn spec(rows: usize, cols: usize) -> ArraySpec {
        ArraySpec { rows, cols, ..ArraySpec::default() }
    }

    #[test]
    fn corner_of_four_by_four() {
        let g = site_grid(&spec(4, 4)).unwrap();
        assert!((g[0][0] + 81e-6).abs() < 1e-18 && (g[0][1] + 81e-6).abs() < 1e-18);
        assert!((g[15][0] - 81e-6).abs() < 1e-18 && (g[15][1] - 81e-6).abs() < 1e-18);
    }

    #[test]
    fn single_site_at_origin() {
        assert_eq!(site_grid(&spec(1, 1)).unwrap(), vec![[0.0, 0.0]]);
    }

    #[test]
    fn centroid_of_two_by_three() {
        let g = site_grid(&spec(2, 3)).unwrap();
        assert_eq!(g.len(), 6);
        let cx: f64 = g.iter().map(|p| p[0]).sum::<f64>() / 6.0;
        let cy: f64 = g.iter().map(|p| p[1]).sum::<f64>() / 6.0;
        assert!(cx.abs() < 1e-15 && cy.abs() < 1e-15);
    }

    #[test]
    fn empty_array_rejected() {
        assert!(site_grid(&spec(0, 4)).is_err());
        assert!(site_grid(&ArraySpec { pitch_m: 3e-6, ..ArraySpec::default() }).is_err());
    }

    #[test]
    fn corner_depth_is_half_the_center() {
        let d = site_depths(&spec(4, 4)).unwrap();
        assert!((d[0] / 600e-6 - 1.0).abs() < 0.01, "{}", d[0]);
        let one = site_depths(&spec(1, 1)).unwrap();
        assert_eq!(one[0], 1.2e-3);
    }

    #[test]
    fn flat_illumination() {
        let s = ArraySpec { illumination_waist_m: f64::INFINITY, ..ArraySpec::default() };
        assert!(site_depths(&s).unwrap().iter().all(|d| *d == 1.2e-3));
    }

    #[test]
    fn outer_sites_load_an_order_of_magnitude_less() {
        let loading = LoadingParams { poisson_jitter: false, ..LoadingParams::default() };
        let sites = load_array(&spec(4, 4), &loading, &FieldParams::default(), &ShiftModel::default(), 1).unwrap();
        // no 4x4 site sits on the axis; the reference is the on-axis expectation
        let corner = sites[0].atom_number;
        assert!(corner <= 50, "{corner}");
        assert!(loading.center_atoms >= 10.0 * corner as f64);
        assert!(sites[5].atom_number > 350 && sites[5].atom_number < 400);
    }

    #[test]
    fn zero_exponent_loads_evenly() {
        let loading = LoadingParams { exponent: 0.0, poisson_jitter: false, ..LoadingParams::default() };
        let sites = load_array(&spec(4, 4), &loading, &FieldParams::default(), &ShiftModel::default(), 1).unwrap();
        assert!(sites.iter().all(|s| s.atom_number == 500));
    }

    #[test]
    fn shift_span_follows_depth_span() {
        let sites = load_array(&spec(4, 4), &LoadingParams::default(), &FieldParams::default(), &ShiftModel::default(), 1).unwrap();
        let (dmin, dmax) = sites.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.depth_k), hi.max(s.depth_k)));
        let (smin, smax) = sites
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.resonance_shift), hi.max(s.resonance_shift)));
        let span_hz = (smax - smin) / TAU;
        assert!((span_hz - 4.8507 * (dmax - dmin) * 1e6).abs() < 1.0, "{span_hz}");
        // 4x4 deepest site sits off axis at 1111 µK
        assert!((span_hz - 2480.0).abs() < 20.0, "{span_hz}");
    }

    #[test]
    fn loading_is_seeded() {
        let a = load_array(&spec(4, 4), &LoadingParams::default(), &FieldParams::default(), &ShiftModel::default(), 9).unwrap();
        let b = load_array(&spec(4, 4), &LoadingParams::default(), &FieldParams::default(), &ShiftModel::default(), 9).unwrap();
        let c = load_array(&spec(4, 4), &LoadingParams::default(), &FieldParams::default(), &ShiftModel::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn depth_scaled_temperature() {
        let loading = LoadingParams { depth_scaled_temperature: true, ..LoadingParams::default() };
        let sites = load_array(&spec(4, 4), &loading, &FieldParams::default(), &ShiftModel::default(), 1).unwrap();
        for s in &sites {
            assert!((s.temperature_k / 30e-6 - s.depth_k / 1.2e-3).abs() < 1e-12);
        }
    }

    #[test]
    fn json_records() {
        let sites = load_array(&spec(2, 2), &LoadingParams::default(), &FieldParams::default(), &ShiftModel::default(), 1).unwrap();
        let v = array_json(&sites);
        assert_eq!(v["sites"].as_array().unwrap().len(), 4);
        assert_eq!(v["sites"][3]["index"], serde_json::json!([1, 1]));
        assert!(v["sites"][0]["shift_hz"].as_f64().unwrap() > 320.0);
    }
}
