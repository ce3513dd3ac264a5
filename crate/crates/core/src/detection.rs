//! State-selective readout: push-out of the upper hyperfine level,
//! synthetic EMCCD fluorescence frames and site-integration photometry.
//!
//! Frames are centred on the register axis. Pixel values are stored as
//! `f64`: with noise disabled they hold the exact expectation (so photon
//! budgets can be checked to rounding), with noise enabled they hold whole
//! counts. [`Frame::to_pgm`] rounds and saturates to 16 bits.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::{fmt_sig12, sha256_hex};
use crate::rng::{derive_seed, stream_rng};
use crate::{ensure_finite, Error, Result};

/// Longest exposure for which spontaneous decay during imaging can be ignored, s.
pub const MAX_VALID_EXPOSURE: f64 = 300e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionParams {
    pub exposure_s: f64,
    /// Expected collected photons per remaining atom during one exposure.
    pub photons_per_atom: f64,
    /// Gaussian spot radius referred to the atom plane, m.
    pub psf_sigma_m: f64,
    /// Pixel size referred to the atom plane, m.
    pub pixel_pitch_m: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub em_gain: f64,
    /// Read noise, counts rms.
    pub read_noise: f64,
    /// Constant offset added to every pixel, counts.
    pub bias: f64,
    /// Fraction of upper-level atoms surviving the push-out pulse.
    pub pushout_leakage: f64,
    /// Disable to render the noise-free expectation.
    pub noise: bool,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            exposure_s: 300e-6,
            photons_per_atom: 50.0,
            psf_sigma_m: 4e-6,
            pixel_pitch_m: 2e-6,
            width_px: 128,
            height_px: 128,
            em_gain: 10.0,
            read_noise: 10.0,
            bias: 100.0,
            pushout_leakage: 0.0,
            noise: true,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("exposure_s", self.exposure_s),
            ("photons_per_atom", self.photons_per_atom),
            ("read_noise", self.read_noise),
            ("bias", self.bias),
        ] {
            ensure_finite(name, v)?;
            if v < 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("psf_sigma_m", self.psf_sigma_m), ("pixel_pitch_m", self.pixel_pitch_m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.em_gain.is_finite() && self.em_gain >= 1.0) {
            return Err(Error::InvalidArgument(format!("em_gain must be >= 1, got {}", self.em_gain)));
        }
        if !(0.0..=1.0).contains(&self.pushout_leakage) {
            return Err(Error::InvalidArgument(format!(
                "pushout_leakage must lie in [0, 1], got {}",
                self.pushout_leakage
            )));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::InvalidArgument("frame must have at least one pixel".into()));
        }
        Ok(())
    }

    /// False when the exposure is long enough for spontaneous decay to matter.
    pub fn exposure_valid(&self) -> bool {
        self.exposure_s <= MAX_VALID_EXPOSURE
    }

    /// Mean counts produced by one atom.
    pub fn counts_per_atom(&self) -> f64 {
        self.photons_per_atom * self.em_gain
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("plain struct serializes").as_bytes())
    }
}

/// Atoms left after the push-out pulse: every lower-level atom plus a
/// binomial fraction `pushout_leakage` of the upper-level atoms.
pub fn pushout_select<R: Rng + ?Sized>(n_f2: u64, n_f3: u64, params: &DetectionParams, rng: &mut R) -> Result<u64> {
    params.validate()?;
    if n_f3 == 0 || params.pushout_leakage == 0.0 {
        return Ok(n_f2);
    }
    let leaked = Binomial::new(n_f3, params.pushout_leakage)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng);
    Ok(n_f2 + leaked)
}

/// A fluorescing site: position in the atom plane and number of atoms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Emitter {
    pub position: [f64; 2],
    pub atoms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    /// Row-major pixel values, counts.
    pub counts: Vec<f64>,
    pub seed: u64,
    pub params: DetectionParams,
    pub params_digest: String,
}

impl Frame {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.counts[row * self.width + col]
    }

    /// Atom-plane coordinate of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let p = self.params.pixel_pitch_m;
        [
            (col as f64 + 0.5 - self.width as f64 / 2.0) * p,
            (row as f64 + 0.5 - self.height as f64 / 2.0) * p,
        ]
    }

    pub fn contains(&self, position: [f64; 2]) -> bool {
        let p = self.params.pixel_pitch_m;
        let hx = self.width as f64 * p / 2.0;
        let hy = self.height as f64 * p / 2.0;
        position[0].abs() <= hx && position[1].abs() <= hy
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Binary 16-bit PGM (P5, big-endian), values rounded and saturated.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        out.reserve(2 * self.counts.len());
        for &c in &self.counts {
            let v = c.round().clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    /// JSON sidecar describing how the frame was made.
    pub fn sidecar(&self, grid: &[[f64; 2]]) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "params": self.params,
            "params_digest": self.params_digest,
            "grid": {
                "width_px": self.width,
                "height_px": self.height,
                "pixel_pitch_m": self.params.pixel_pitch_m,
                "sites_m": grid,
            },
        })
    }
}

/// Fraction of a unit Gaussian of width `sigma` centred at `mu` falling in
/// each of `n` pixels of size `pitch` laid out symmetrically about 0.
fn pixel_fractions(mu: f64, sigma: f64, pitch: f64, n: usize) -> Vec<f64> {
    let s = sigma * std::f64::consts::SQRT_2;
    let edge = |k: usize| (k as f64 - n as f64 / 2.0) * pitch;
    let cdf = |x: f64| 0.5 * libm::erf((x - mu) / s);
    (0..n).map(|k| cdf(edge(k + 1)) - cdf(edge(k))).collect()
}

/// Render a frame of the given emitters.
///
/// Each emitter is a Gaussian spot of `atoms · photons_per_atom` expected
/// photons integrated exactly over every pixel. With noise on, each pixel
/// draws a Poisson photon number, amplifies it through a gamma-distributed
/// EM register (variance doubling) and adds Gaussian read noise and the
/// bias. Pixel rows draw from their own random streams.
pub fn render_frame(emitters: &[Emitter], params: &DetectionParams, seed: u64) -> Result<Frame> {
    params.validate()?;
    let mut frame = Frame {
        width: params.width_px,
        height: params.height_px,
        counts: vec![0.0; params.width_px * params.height_px],
        seed,
        params: *params,
        params_digest: params.digest(),
    };
    for e in emitters {
        ensure_finite("emitter position", e.position[0])?;
        ensure_finite("emitter position", e.position[1])?;
        if !(e.atoms.is_finite() && e.atoms >= 0.0) {
            return Err(Error::InvalidArgument(format!("atom number must be >= 0, got {}", e.atoms)));
        }
        if !frame.contains(e.position) {
            return Err(Error::InvalidArgument(format!(
                "site at ({}, {}) m lies outside the field of view",
                e.position[0], e.position[1]
            )));
        }
    }
    let spots: Vec<(f64, Vec<f64>, Vec<f64>)> = emitters
        .iter()
        .filter(|e| e.atoms > 0.0)
        .map(|e| {
            (
                e.atoms * params.photons_per_atom,
                pixel_fractions(e.position[0], params.psf_sigma_m, params.pixel_pitch_m, params.width_px),
                pixel_fractions(e.position[1], params.psf_sigma_m, params.pixel_pitch_m, params.height_px),
            )
        })
        .collect();
    let noise_seed = derive_seed(seed, "frame-noise", 0);
    let width = params.width_px;
    frame
        .counts
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(row, out)| -> Result<()> {
            let mut photons = vec![0.0; width];
            for (n, fx, fy) in &spots {
                let ry = n * fy[row];
                for (p, f) in photons.iter_mut().zip(fx) {
                    *p += ry * f;
                }
            }
            if !params.noise {
                for (o, p) in out.iter_mut().zip(&photons) {
                    *o = p * params.em_gain;
                }
                return Ok(());
            }
            let mut rng = stream_rng(noise_seed, row as u64);
            let read = Normal::new(0.0, params.read_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for (o, &lambda) in out.iter_mut().zip(&photons) {
                let n = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                let amplified = if n > 0.0 {
                    Gamma::new(n, params.em_gain).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
                } else {
                    0.0
                };
                *o = (amplified + params.bias + read.sample(&mut rng)).round().max(0.0);
            }
            Ok(())
        })?;
    Ok(frame)
}

/// Grid position of a site to be integrated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteLocation {
    pub row: usize,
    pub col: usize,
    pub position: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiteReadout {
    pub row: usize,
    pub col: usize,
    /// Background-subtracted counts inside the aperture.
    pub counts: f64,
    /// Background level per pixel from the annulus median.
    pub background: f64,
    /// Pixels inside the aperture.
    pub pixels: usize,
    /// `counts / reference`, clamped to `[0, 1 + 3σ]`.
    pub population: f64,
    /// Shot- and read-noise uncertainty of `population`.
    pub population_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReadoutResult {
    pub sites: Vec<SiteReadout>,
}

impl ReadoutResult {
    pub fn counts(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.counts).collect()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.sites.iter().map(|s| s.population).collect()
    }

    /// CSV with header `row,col,counts,population`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,col,counts,population\n");
        for s in &self.sites {
            out.push_str(&format!("{},{},{},{}\n", s.row, s.col, fmt_sig12(s.counts), fmt_sig12(s.population)));
        }
        out
    }
}

/// Background-subtracted aperture photometry around each site.
///
/// Counts are summed over pixels whose centres lie within `radius_m`; the
/// background per pixel is the median of the annulus from `radius_m` to
/// `min(2·radius_m, pitch − radius_m)` where pitch is the nearest-neighbour
/// distance. `reference` supplies per-site normalisation counts (a frame
/// taken before state preparation); without it populations are counts
/// divided by the expected counts of one atom, i.e. atom-number estimates.
pub fn integrate_sites(
    frame: &Frame,
    sites: &[SiteLocation],
    radius_m: f64,
    reference: Option<&[f64]>,
) -> Result<ReadoutResult> {
    if !(radius_m.is_finite() && radius_m > 0.0) {
        return Err(Error::InvalidArgument(format!("aperture radius must be > 0, got {radius_m}")));
    }
    if let Some(r) = reference {
        if r.len() != sites.len() {
            return Err(Error::InvalidArgument(format!("{} reference values for {} sites", r.len(), sites.len())));
        }
    }
    let mut nearest = f64::INFINITY;
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            nearest = nearest.min((a.position[0] - b.position[0]).hypot(a.position[1] - b.position[1]));
        }
    }
    if 2.0 * radius_m >= nearest {
        return Err(Error::InvalidArgument(format!(
            "apertures of radius {radius_m} m overlap (nearest sites {nearest} m apart)"
        )));
    }
    let outer = (2.0 * radius_m).min(nearest - radius_m);
    let p = frame.params.pixel_pitch_m;
    let g = frame.params.em_gain;
    let read2 = frame.params.read_noise * frame.params.read_noise;
    let mut out = Vec::with_capacity(sites.len());
    for (k, s) in sites.iter().enumerate() {
        if !frame.contains(s.position) {
            return Err(Error::InvalidArgument(format!("site ({}, {}) lies outside the frame", s.row, s.col)));
        }
        let reach = (outer / p).ceil() as isize + 1;
        let col0 = (s.position[0] / p + frame.width as f64 / 2.0 - 0.5).round() as isize;
        let row0 = (s.position[1] / p + frame.height as f64 / 2.0 - 0.5).round() as isize;
        let mut inside = Vec::new();
        let mut ring = Vec::new();
        for row in (row0 - reach).max(0)..=(row0 + reach).min(frame.height as isize - 1) {
            for col in (col0 - reach).max(0)..=(col0 + reach).min(frame.width as isize - 1) {
                let c = frame.pixel_center(row as usize, col as usize);
                let r = (c[0] - s.position[0]).hypot(c[1] - s.position[1]);
                let v = frame.get(row as usize, col as usize);
                if r <= radius_m {
                    inside.push(v);
                } else if r <= outer {
                    ring.push(v);
                }
            }
        }
        if inside.is_empty() {
            return Err(Error::InvalidArgument(format!("aperture radius {radius_m} m contains no pixel")));
        }
        let background = if ring.is_empty() { 0.0 } else { median(&mut ring) };
        let counts = inside.iter().sum::<f64>() - background * inside.len() as f64;
        let norm = match reference {
            Some(r) => r[k],
            None => frame.params.counts_per_atom(),
        };
        let var = 2.0 * g * counts.max(0.0) + inside.len() as f64 * read2;
        let (population, population_sigma) = if norm > 0.0 {
            let sigma = var.sqrt() / norm;
            let raw = counts / norm;
            let pop = if reference.is_some() { raw.clamp(0.0, 1.0 + 3.0 * sigma) } else { raw.max(0.0) };
            (pop, sigma)
        } else {
            (0.0, 0.0)
        };
        out.push(SiteReadout {
            row: s.row,
            col: s.col,
            counts,
            background,
            pixels: inside.len(),
            population,
            population_sigma,
        });
    }
    Ok(ReadoutResult { sites: out })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
