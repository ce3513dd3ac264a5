use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use trapsim_core::array_ramsey::{fits_json, run_array_ramsey};
use trapsim_core::bloch::{lineshape_scan, run_sequence, BlochState, DriveParams, PulseSegment};
use trapsim_core::dephasing::{
    echo_visibility_with, mc_echo, mc_echo_visibility, mc_ramsey, ramsey_trace, visibility_csv, EchoPoint, McTrace,
};
use trapsim_core::detection::{integrate_sites, render_frame, Emitter, SiteLocation};
use rand::Rng;
use trapsim_core::fit::{fit_curve, initial_guess, predict, FitOptions, FitResult, ModelKind, ModelSpec};
use trapsim_core::io::{parse_two_column, two_column_csv};
use trapsim_core::register::{array_json, load_array, site_grid};
use trapsim_core::rng::{derive_seed, stream_rng};

use crate::config::{time_grid, ExperimentConfig, Overrides};
use crate::error::{CliError, CliResult};
use crate::manifest::Artifacts;
use crate::SimKind;

fn load(config: Option<&Path>, overrides: &Overrides, fringe_detuning: bool) -> CliResult<(ExperimentConfig, Vec<u8>)> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.apply(overrides, fringe_detuning);
    // the output location does not change any result, so it stays out of the digest
    let digested = ExperimentConfig { output_dir: None, ..cfg.clone() };
    let canonical = serde_json::to_vec(&digested).map_err(|e| CliError::Config(e.to_string()))?;
    Ok((cfg, canonical))
}

fn linspace(lo: f64, hi: f64, n: usize) -> CliResult<Vec<f64>> {
    if n < 2 || !(hi > lo) {
        return Err(CliError::Config(format!("bad scan [{lo}, {hi}] with {n} points")));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn modulation_csv(trace: &McTrace) -> String {
    two_column_csv(("time_s", "modulation"), &trace.trace.x, &trace.modulation)
}

pub fn simulate(
    kind: SimKind,
    config: Option<&Path>,
    analytic: bool,
    visibility_scan: bool,
    overrides: &Overrides,
) -> CliResult<PathBuf> {
    let fringe = matches!(kind, SimKind::Ramsey | SimKind::Echo);
    let (cfg, canonical) = load(config, overrides, fringe)?;
    let seq = &cfg.sequence;
    let mut out = Artifacts::new(&cfg.output_dir());

    match kind {
        SimKind::Rabi => {
            let times = time_grid(seq.t_max_s.unwrap_or(4e-3), seq.points.unwrap_or(401))?;
            let drive = DriveParams::new(seq.omega_rabi_rad_s, seq.drive_detuning_rad_s, 0.0);
            let segment = PulseSegment::timed(times[times.len() - 1], drive);
            let trace = run_sequence(BlochState::UPPER, &[segment], &cfg.relax, &times, f64::INFINITY)
                .map_err(CliError::config)?;
            out.add("rabi.csv", trace.to_csv());
        }
        SimKind::Ramsey => {
            let times = time_grid(seq.t_max_s.unwrap_or(12e-3), seq.points.unwrap_or(121))?;
            let exp = cfg.ensemble_experiment()?;
            if analytic {
                let params = exp.predicted_ramsey().map_err(CliError::config)?;
                let trace = ramsey_trace(&times, &params).map_err(CliError::numeric)?;
                out.add("ramsey.csv", trace.to_csv());
                out.add_json("ramsey_params.json", &params)?;
            } else {
                let mc = mc_ramsey(&exp, &times, cfg.seed).map_err(CliError::numeric)?;
                out.add("ramsey.csv", mc.trace.to_csv());
                out.add("ramsey_modulation.csv", modulation_csv(&mc));
            }
        }
        SimKind::Echo if visibility_scan => {
            let t1s = linspace(0.0, seq.visibility_t1_max_s, seq.visibility_points)?;
            let points = if analytic {
                let variable = cfg.echo_decay_variable();
                t1s.iter()
                    .map(|&t1| {
                        let visibility = echo_visibility_with(t1, cfg.relax.t1, variable)?;
                        Ok(EchoPoint { t1, visibility, stderr: 0.0 })
                    })
                    .collect::<trapsim_core::Result<Vec<_>>>()
                    .map_err(CliError::config)?
            } else {
                let exp = cfg.ensemble_experiment()?;
                mc_echo_visibility(&exp, &t1s, seq.echo_phase_rad, cfg.seed).map_err(CliError::numeric)?
            };
            out.add("echo_visibility.csv", visibility_csv(&points));
        }
        SimKind::Echo => {
            let t_max = seq.t_max_s.unwrap_or(2.0 * seq.t1_s + 5e-3);
            let times = time_grid(t_max, seq.points.unwrap_or(201))?;
            let exp = cfg.ensemble_experiment()?;
            let echo = mc_echo(&exp, seq.t1_s, seq.echo_phase_rad, &times, cfg.seed).map_err(CliError::numeric)?;
            let ramsey = mc_ramsey(&exp, &times, cfg.seed).map_err(CliError::numeric)?;
            out.add("echo.csv", echo.trace.to_csv());
            out.add("echo_modulation.csv", modulation_csv(&echo));
            out.add("ramsey_modulation.csv", modulation_csv(&ramsey));
        }
        SimKind::Lineshape => {
            let t_pulse = seq.pulse_time_s.unwrap_or(PI / seq.omega_rabi_rad_s);
            let half = 0.5 * seq.lineshape_span_rad_s;
            let detunings = linspace(-half, half, seq.lineshape_points)?;
            let trace = lineshape_scan(t_pulse, seq.omega_rabi_rad_s, &detunings).map_err(CliError::config)?;
            out.add("lineshape.csv", trace.to_csv());
        }
    }
    out.finish(&format!("simulate {}", kind.name()), &canonical, cfg.seed)
}

pub fn array_ramsey(config: &Path, overrides: &Overrides) -> CliResult<PathBuf> {
    let (cfg, canonical) = load(Some(config), overrides, false)?;
    let run_cfg = cfg.array_ramsey()?;
    if !run_cfg.detection.exposure_valid() {
        eprintln!("trapsim: warning: exposure {} s exceeds the heating limit", run_cfg.detection.exposure_s);
    }
    let result = run_array_ramsey(&run_cfg, cfg.seed).map_err(CliError::numeric)?;
    let grid = site_grid(&run_cfg.array).map_err(CliError::config)?;

    let mut out = Artifacts::new(&cfg.output_dir());
    for (site, trace) in result.sites.iter().zip(&result.traces) {
        out.add(
            format!("site_{}_{}.csv", site.row, site.col),
            two_column_csv(("time_s", "p0"), &trace.x, &trace.p0),
        );
    }
    for (k, frame) in result.frames.iter().enumerate() {
        out.add(format!("frames/frame_{k:04}.pgm"), frame.to_pgm());
        let mut sidecar = frame.sidecar(&grid);
        sidecar["time_s"] = serde_json::json!(result.times[k]);
        out.add_json(format!("frames/frame_{k:04}.json"), &sidecar)?;
    }
    out.add("reference.pgm", result.reference_frame.to_pgm());
    out.add_json("reference.json", &result.reference_frame.sidecar(&grid))?;
    out.add("reference.csv", result.reference.to_csv());
    out.add_json("fits.json", &fits_json(&result.fits))?;
    out.add_json("array.json", &array_json(&result.sites))?;
    let manifest = out.finish("array-ramsey", &canonical, cfg.seed)?;

    let failed: Vec<String> = result
        .fits
        .iter()
        .filter(|f| !f.fit.as_ref().is_some_and(|r| r.converged))
        .map(|f| format!("site ({}, {})", f.row, f.col))
        .collect();
    if failed.is_empty() {
        Ok(manifest)
    } else {
        Err(CliError::NotConverged(failed.join(", ")))
    }
}

fn parse_assignment(s: &str) -> CliResult<(&str, f64)> {
    let (name, value) =
        s.split_once('=').ok_or_else(|| CliError::Config(format!("expected name=value, got {s:?}")))?;
    let v = value
        .trim()
        .parse::<f64>()
        .map_err(|_| CliError::Config(format!("{name}: not a number: {value:?}")))?;
    Ok((name.trim(), v))
}

/// Per-parameter spread of refits to `fitted + resampled residuals`.
fn bootstrap(spec: &ModelSpec, x: &[f64], y: &[f64], fit: &FitResult, n: usize, seed: u64) -> CliResult<serde_json::Value> {
    let curve = predict(spec, &fit.values, x).map_err(CliError::numeric)?;
    let residuals: Vec<f64> = y.iter().zip(&curve).map(|(a, b)| a - b).collect();
    let mut samples = vec![Vec::with_capacity(n); spec.params.len()];
    for b in 0..n {
        let mut rng = stream_rng(derive_seed(seed, "fit-bootstrap", 0), b as u64);
        let resampled: Vec<f64> =
            curve.iter().map(|c| c + residuals[rng.random_range(0..residuals.len())]).collect();
        let refit = fit_curve(spec, x, &resampled, &fit.values, &FitOptions::default()).map_err(CliError::numeric)?;
        for (s, v) in samples.iter_mut().zip(&refit.values) {
            s.push(*v);
        }
    }
    let mut params = serde_json::Map::new();
    for (name, s) in fit.names.iter().zip(&samples) {
        let mean = s.iter().sum::<f64>() / n as f64;
        let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0)).sqrt();
        params.insert(name.to_string(), serde_json::json!({ "mean": mean, "sd": sd }));
    }
    Ok(serde_json::json!({ "resamples": n, "seed": seed, "params": params }))
}

pub fn fit(
    model: &str,
    input: &Path,
    out_dir: &Path,
    fix: &[String],
    init: &[String],
    resamples: usize,
    seed: u64,
) -> CliResult<PathBuf> {
    let kind: ModelKind = model.parse().map_err(CliError::config)?;
    let bytes = std::fs::read(input).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
    let data = parse_two_column(&text).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;

    let mut spec = ModelSpec::new(kind);
    for a in fix {
        let (name, v) = parse_assignment(a)?;
        spec = spec.fix(name, v).map_err(CliError::config)?;
    }
    let mut start = initial_guess(&spec, &data.x, &data.y).map_err(CliError::numeric)?;
    for a in init {
        let (name, v) = parse_assignment(a)?;
        let i = spec
            .index_of(name)
            .ok_or_else(|| CliError::Config(format!("model {kind} has no parameter {name:?}")))?;
        start[i] = v;
    }
    let result = fit_curve(&spec, &data.x, &data.y, &start, &FitOptions::default()).map_err(CliError::numeric)?;

    let mut out = Artifacts::new(out_dir);
    out.add_json("fits.json", &result)?;
    if resamples > 0 {
        out.add_json("bootstrap.json", &bootstrap(&spec, &data.x, &data.y, &result, resamples, seed)?)?;
    }
    let mut digest_input = bytes;
    for a in fix.iter().chain(init) {
        digest_input.push(b'\n');
        digest_input.extend_from_slice(a.as_bytes());
    }
    let manifest = out.finish(&format!("fit {kind}"), &digest_input, seed)?;
    if result.converged {
        Ok(manifest)
    } else {
        Err(CliError::NotConverged(format!("{kind} after {} iterations", result.iterations)))
    }
}

pub fn render(config: &Path, overrides: &Overrides) -> CliResult<PathBuf> {
    let (cfg, canonical) = load(Some(config), overrides, false)?;
    let array = cfg.array.ok_or_else(|| CliError::Config("render needs an \"array\" section".into()))?;
    let detection = cfg.detection.ok_or_else(|| CliError::Config("render needs a \"detection\" section".into()))?;
    array.validate().map_err(CliError::config)?;
    detection.validate().map_err(CliError::config)?;
    let radius = cfg.sequence.aperture_radius_m.unwrap_or(4.0 * detection.psf_sigma_m);

    let sites = load_array(&array, &cfg.loading, &cfg.field, &cfg.shift, cfg.seed).map_err(CliError::config)?;
    let emitters: Vec<Emitter> =
        sites.iter().map(|s| Emitter { position: s.position, atoms: s.atom_number as f64 }).collect();
    let locations: Vec<SiteLocation> =
        sites.iter().map(|s| SiteLocation { row: s.row, col: s.col, position: s.position }).collect();
    let frame = render_frame(&emitters, &detection, cfg.seed).map_err(CliError::numeric)?;
    let readout = integrate_sites(&frame, &locations, radius, None).map_err(CliError::config)?;
    let grid: Vec<[f64; 2]> = sites.iter().map(|s| s.position).collect();

    let mut out = Artifacts::new(&cfg.output_dir());
    out.add("frame.pgm", frame.to_pgm());
    out.add_json("frame.json", &frame.sidecar(&grid))?;
    out.add("readout.csv", readout.to_csv());
    out.add_json("array.json", &array_json(&sites))?;
    out.finish("render", &canonical, cfg.seed)
}
