use std::f64::consts::TAU;
use std::time::Instant;

use trapsim_core::array_ramsey::{linear_regression, run_array_ramsey, spearman, ArrayRamseyConfig};
use trapsim_core::register::ArraySpec;

#[test]
fn default_register_shows_depth_dependent_fringes() {
    let cfg = ArrayRamseyConfig::default();
    let start = Instant::now();
    let res = run_array_ramsey(&cfg, 2024).unwrap();
    println!("array run {:?}", start.elapsed());
    assert_eq!(res.traces.len(), 16);
    let mut depth_uk = Vec::new();
    let mut delta_hz = Vec::new();
    let mut amp = Vec::new();
    let mut atoms = Vec::new();
    for f in &res.fits {
        let fit = f.fit.as_ref().expect("every site fits");
        let d = fit.value("detuning").unwrap() / TAU;
        println!(
            "site {} {}: depth {:.0} µK atoms {} δ {:.1} Hz (expected {:.1}) T2* {:.2} ms A {:.3} conv {}",
            f.row,
            f.col,
            f.depth_k * 1e6,
            f.atom_number,
            d,
            f.expected_detuning / TAU,
            fit.value("t2_star").unwrap() * 1e3,
            fit.value("amplitude").unwrap(),
            fit.converged
        );
        depth_uk.push(f.depth_k * 1e6);
        delta_hz.push(d);
        amp.push(f.amplitude_counts().unwrap());
        atoms.push(f.atom_number as f64);
    }
    let (slope, _) = linear_regression(&depth_uk, &delta_hz).unwrap();
    let rho = spearman(&amp, &atoms).unwrap();
    println!("slope {slope} Hz/µK, rank correlation {rho}");
    assert!((slope / 4.85 - 1.0).abs() < 0.05);
    assert!(rho > 0.9);
}

#[test]
fn single_site_matches_its_prediction() {
    let cfg = ArrayRamseyConfig {
        array: ArraySpec { rows: 1, cols: 1, ..ArraySpec::default() },
        ..ArrayRamseyConfig::default()
    };
    let res = run_array_ramsey(&cfg, 5).unwrap();
    let f = &res.fits[0];
    let fit = f.fit.as_ref().unwrap();
    assert!((fit.value("detuning").unwrap() - f.expected_detuning).abs() / TAU < 30.0);
}

#[test]
fn reruns_are_identical() {
    let cfg = ArrayRamseyConfig {
        array: ArraySpec { rows: 2, cols: 2, ..ArraySpec::default() },
        times_s: (0..20).map(|k| k as f64 * 100e-6).collect(),
        keep_frames: true,
        ..ArrayRamseyConfig::default()
    };
    let a = run_array_ramsey(&cfg, 1).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_array_ramsey(&cfg, 1).unwrap());
    assert_eq!(a, b);
}
