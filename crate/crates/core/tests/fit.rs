use std::f64::consts::TAU;

use rand_distr::{Distribution, Normal};
use trapsim_core::fit::{fit_curve, initial_guess, periodogram_peak, predict, FitOptions, ModelKind, ModelSpec};
use trapsim_core::rng::stream_rng;
use trapsim_core::Error;

const RAMSEY: [f64; 5] = [0.35, 0.35, TAU * 4814.0, 0.3, 4.08e-3];

fn grid(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|k| k as f64 * dt).collect()
}

fn noisy(clean: &[f64], sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let normal = Normal::new(0.0, sigma).unwrap();
    clean.iter().map(|v| v + normal.sample(&mut rng)).collect()
}

fn fit_auto(model: &ModelSpec, x: &[f64], y: &[f64]) -> trapsim_core::fit::FitResult {
    let init = initial_guess(model, x, y).unwrap();
    fit_curve(model, x, y, &init, &FitOptions::default()).unwrap()
}

fn ramsey_data(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let m = ModelSpec::new(ModelKind::RamseyEq4);
    let x = grid(120, 1e-4);
    let clean = predict(&m, &RAMSEY, &x).unwrap();
    let y = noisy(&clean, 0.02, seed);
    (x, y)
}

#[test]
fn ramsey_guess_lands_near_fringe_frequency() {
    let (x, y) = ramsey_data(1);
    let m = ModelSpec::new(ModelKind::RamseyEq4);
    let g = initial_guess(&m, &x, &y).unwrap();
    assert!((g[2] / RAMSEY[2] - 1.0).abs() < 0.1, "guess {}", g[2] / TAU);
}

#[test]
fn noisy_ramsey_round_trip() {
    let (x, y) = ramsey_data(2);
    let m = ModelSpec::new(ModelKind::RamseyEq4);
    let fit = fit_auto(&m, &x, &y);
    assert!(fit.converged);
    let d = fit.value("detuning").unwrap();
    let t2 = fit.value("t2_star").unwrap();
    assert!((d - RAMSEY[2]).abs() / TAU < 5.0, "δ = {} Hz", d / TAU);
    assert!((t2 - RAMSEY[4]).abs() < 0.25e-3, "T2* = {t2}");
    assert!(fit.rss_history.windows(2).all(|w| w[1] <= w[0]));
    let phi = fit.value("phase").unwrap();
    assert!(phi > -std::f64::consts::PI && phi <= std::f64::consts::PI);
}

#[test]
fn noise_free_recovery_for_every_model() {
    let cases: Vec<(ModelSpec, Vec<f64>, Vec<f64>)> = vec![
        (ModelSpec::new(ModelKind::RamseyEq4), RAMSEY.to_vec(), grid(120, 1e-4)),
        (ModelSpec::new(ModelKind::ExpDecay), vec![0.92, 68e-3], grid(40, 2.5e-3)),
        (
            ModelSpec::new(ModelKind::Lineshape).fix("pulse_time", 503e-6).unwrap(),
            vec![TAU * 995.0, 503e-6, TAU * 150.0, 0.8, 0.05],
            (0..201).map(|k| TAU * (-10e3 + 100.0 * k as f64)).collect(),
        ),
        (
            ModelSpec::new(ModelKind::RabiBloch),
            vec![TAU * 995.0, 1.0 / 3e-3, 1.0 / 68e-3, 0.0, 0.95],
            grid(101, 1e-4)[1..].to_vec(),
        ),
    ];
    for (m, truth, x) in cases {
        let y = predict(&m, &truth, &x).unwrap();
        let fit = fit_auto(&m, &x, &y);
        assert!(fit.converged, "{}", m.kind);
        for (name, (got, want)) in fit.names.iter().zip(fit.values.iter().zip(&truth)) {
            let scale = want.abs().max(1e-3);
            assert!((got - want).abs() / scale < 1e-6, "{} {name}: {got} vs {want}", m.kind);
        }
    }
}

#[test]
fn noisy_rabi_round_trip() {
    let m = ModelSpec::new(ModelKind::RabiBloch);
    let truth = [TAU * 995.0, 1.0 / 3e-3, 1.0 / 68e-3, 0.0, 1.0];
    let x = grid(201, 5e-5)[1..].to_vec();
    let y = noisy(&predict(&m, &truth, &x).unwrap(), 0.03, 5);
    let span = x[x.len() - 1] - x[0];
    let peak = periodogram_peak(&x, &y).unwrap();
    assert!((peak - truth[0]).abs() <= TAU / span, "peak {}", peak / TAU);
    let fit = fit_auto(&m, &x, &y);
    assert!(fit.converged);
    let omega = fit.value("omega").unwrap();
    assert!((omega - truth[0]).abs() < TAU * 5.0, "Ω/2π = {}", omega / TAU);
    assert!(fit.sigma("omega").unwrap() > 0.0);
}

#[test]
fn decay_guess_uses_half_life() {
    let m = ModelSpec::new(ModelKind::ExpDecay);
    let x = grid(30, 5e-3);
    let y = predict(&m, &[1.0, 68e-3], &x).unwrap();
    let g = initial_guess(&m, &x, &y).unwrap();
    assert!((g[1] / 68e-3 - 1.0).abs() < 1e-9);
}

#[test]
fn undamped_limit_recovers_cosine() {
    let m = ModelSpec::new(ModelKind::RamseyEq4).fix("t2_star", f64::INFINITY).unwrap();
    let truth = [0.4, 0.45, TAU * 2000.0, -1.1, f64::INFINITY];
    let x = grid(100, 1e-4);
    let y: Vec<f64> = x.iter().map(|t| 0.4 * (TAU * 2000.0 * t - 1.1).cos() + 0.45).collect();
    let fit = fit_auto(&m, &x, &y);
    for i in 0..4 {
        assert!((fit.values[i] - truth[i]).abs() < 1e-6 * truth[i].abs(), "{}", fit.names[i]);
    }
}

#[test]
fn constant_data_is_degenerate() {
    let m = ModelSpec::new(ModelKind::RamseyEq4);
    let x = grid(50, 1e-4);
    let y = vec![0.3; 50];
    assert!(matches!(initial_guess(&m, &x, &y), Err(Error::DegenerateData(_))));
}

#[test]
fn nan_data_rejected() {
    let m = ModelSpec::new(ModelKind::ExpDecay);
    let x = grid(10, 1.0);
    let mut y = vec![1.0; 10];
    y[3] = f64::NAN;
    assert!(matches!(fit_curve(&m, &x, &y, &[1.0, 1.0], &FitOptions::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn ramsey_estimator_is_calibrated() {
    let m = ModelSpec::new(ModelKind::RamseyEq4);
    let runs = 200;
    let (mut d_sq, mut t_sq, mut sigma_sum, mut d_sum) = (0.0, 0.0, 0.0, 0.0);
    let mut ds = Vec::with_capacity(runs);
    for seed in 0..runs as u64 {
        let (x, y) = ramsey_data(1000 + seed);
        let fit = fit_auto(&m, &x, &y);
        assert!(fit.rss_history.windows(2).all(|w| w[1] <= w[0]));
        let d = (fit.value("detuning").unwrap() - RAMSEY[2]) / TAU;
        let t = fit.value("t2_star").unwrap() - RAMSEY[4];
        d_sq += d * d;
        t_sq += t * t;
        d_sum += d;
        ds.push(d);
        sigma_sum += fit.sigma("detuning").unwrap() / TAU;
    }
    let n = runs as f64;
    let d_rms = (d_sq / n).sqrt();
    let t_rms = (t_sq / n).sqrt();
    let mean = d_sum / n;
    let sd = (ds.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let reported = sigma_sum / n;
    assert!(d_rms < 5.0, "δ RMS {d_rms} Hz");
    assert!(t_rms < 0.25e-3, "T2* RMS {t_rms}");
    assert!(sd / reported < 2.0 && reported / sd < 2.0, "sd {sd} vs σ {reported}");
}
