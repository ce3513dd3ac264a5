use std::f64::consts::{PI, TAU};

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use trapsim_core::bloch::{evolve_segment, rabi_transfer, BlochState, DriveParams, PulseSegment, PulseSpec, RelaxationParams};
use trapsim_core::dephasing::{
    mc_ramsey, t2star_from_temperature, temperature_from_t2star, EnsembleExperiment, ThermalEnsemble,
};
use trapsim_core::detection::{render_frame, DetectionParams, Emitter};
use trapsim_core::fit::{fit_curve, initial_guess, FitOptions, ModelKind, ModelSpec};
use trapsim_core::register::{load_array, ArraySpec, LoadingParams};
use trapsim_core::trap::{
    differential_light_shift, scattering_rate, total_resonance_shift, FieldParams, PhysicsConstants, ShiftModel,
    TrapParams,
};

fn unit_vector() -> impl Strategy<Value = BlochState> {
    (-1.0f64..1.0, 0.0..TAU).prop_map(|(z, phi)| {
        let r = (1.0 - z * z).sqrt();
        BlochState::new(r * phi.cos(), r * phi.sin(), z)
    })
}

fn drive() -> impl Strategy<Value = DriveParams> {
    (TAU * 100.0..TAU * 5000.0, -TAU * 5000.0..TAU * 5000.0, -PI..PI)
        .prop_map(|(omega, detuning, phase)| DriveParams::new(omega, detuning, phase))
}

fn relaxation() -> impl Strategy<Value = RelaxationParams> {
    (1e-4f64..1e-1, 1e-4f64..1e-1).prop_map(|(t1, t2)| RelaxationParams::new(t1, t2, 0.0))
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_conserved_without_relaxation(s in unit_vector(), d in drive(), t in 0.0f64..2e-3) {
        let out = evolve_segment(s, &PulseSegment::timed(t, d), &RelaxationParams::none(), f64::INFINITY).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn norm_never_grows_with_relaxation(s in unit_vector(), d in drive(), relax in relaxation(), t in 0.0f64..2e-3) {
        let mut state = s;
        for _ in 0..8 {
            state = evolve_segment(state, &PulseSegment::timed(t / 8.0, d), &relax, f64::INFINITY).unwrap();
            prop_assert!(state.norm() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn consecutive_segments_compose(
        s in unit_vector(),
        d in drive(),
        relax in prop_oneof![Just(RelaxationParams::none()), relaxation()],
        ta in 0.0f64..1e-3,
        tb in 0.0f64..1e-3,
    ) {
        let split = evolve_segment(s, &PulseSegment::timed(ta, d), &relax, f64::INFINITY)
            .and_then(|m| evolve_segment(m, &PulseSegment::timed(tb, d), &relax, f64::INFINITY))
            .unwrap();
        let whole = evolve_segment(s, &PulseSegment::timed(ta + tb, d), &relax, f64::INFINITY).unwrap();
        for (a, b) in [(split.u, whole.u), (split.v, whole.v), (split.w, whole.w)] {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn transfer_formula_matches_integration(d in drive(), t in 0.0f64..2e-3) {
        let out = evolve_segment(BlochState::UPPER, &PulseSegment::timed(t, d), &RelaxationParams::none(), f64::INFINITY)
            .unwrap();
        let p = rabi_transfer(t, d.rabi_frequency, d.detuning).unwrap();
        prop_assert!((out.p0() - p).abs() < 1e-6);
    }

    #[test]
    fn resonance_shift_is_affine_in_depth(
        depths in prop::array::uniform3(1e-5f64..5e-3),
        field_t in 0.0f64..2e-4,
        detuning_thz in -40.0f64..-2.0,
    ) {
        let field = FieldParams::new(field_t);
        let model = ShiftModel::default();
        let trap = TrapParams { effective_detuning: TAU * detuning_thz * 1e12, ..TrapParams::default() };
        let shift = |u: f64| total_resonance_shift(&trap.with_depth(u), &field, &model).unwrap();
        let (a, b, c) = (depths[0], depths[1], depths[2]);
        prop_assume!((b - a).abs() > 1e-6);
        let slope = (shift(b) - shift(a)) / (b - a);
        let predicted = shift(a) + slope * (c - a);
        let scale = shift(a).abs().max(shift(b).abs()).max(shift(c).abs());
        prop_assert!((shift(c) - predicted).abs() <= 1e-12 * scale);
    }

    #[test]
    fn scattering_to_shift_ratio_is_fixed(
        depth in 1e-5f64..5e-3,
        waist in 0.5e-6f64..50e-6,
        detuning_thz in -40.0f64..-2.0,
    ) {
        let c = PhysicsConstants::default();
        let trap = TrapParams { depth_k: depth, waist_m: waist, effective_detuning: TAU * detuning_thz * 1e12, ..TrapParams::default() };
        let ratio = scattering_rate(&trap, &c).unwrap() / differential_light_shift(&trap, &c).unwrap();
        assert_relative_eq!(ratio, c.gamma_natural / c.omega_hfs, max_relative = 1e-12);
    }

    #[test]
    fn temperature_round_trip(t in log_uniform(1e-6, 1e-3)) {
        let trap = TrapParams::default();
        let c = PhysicsConstants::default();
        let t2 = t2star_from_temperature(t, &trap, &c).unwrap();
        assert_relative_eq!(temperature_from_t2star(t2, &trap, &c).unwrap(), t, max_relative = 1e-12);
    }

    #[test]
    fn register_depths_are_point_symmetric(
        rows in 1usize..7,
        cols in 1usize..7,
        pitch in 20e-6f64..80e-6,
        waist in 50e-6f64..500e-6,
    ) {
        let spec = ArraySpec { rows, cols, pitch_m: pitch, illumination_waist_m: waist, ..ArraySpec::default() };
        let loading = LoadingParams { poisson_jitter: false, ..LoadingParams::default() };
        let sites = load_array(&spec, &loading, &FieldParams::default(), &ShiftModel::default(), 0).unwrap();
        for s in &sites {
            let mirror = &sites[(rows - 1 - s.row) * cols + (cols - 1 - s.col)];
            assert_relative_eq!(s.depth_k, mirror.depth_k, max_relative = 1e-12);
            if rows == cols {
                let transposed = &sites[s.col * cols + s.row];
                assert_relative_eq!(s.depth_k, transposed.depth_k, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn register_depth_falls_with_radius(
        rows in 1usize..7,
        cols in 1usize..7,
        pitch in 20e-6f64..80e-6,
        waist in 50e-6f64..500e-6,
    ) {
        let spec = ArraySpec { rows, cols, pitch_m: pitch, illumination_waist_m: waist, ..ArraySpec::default() };
        let loading = LoadingParams { poisson_jitter: false, ..LoadingParams::default() };
        let sites = load_array(&spec, &loading, &FieldParams::default(), &ShiftModel::default(), 0).unwrap();
        let r2 = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
        for a in &sites {
            for b in &sites {
                if r2(b.position) > r2(a.position) * (1.0 + 1e-9) {
                    prop_assert!(b.depth_k < a.depth_k);
                    prop_assert!(b.expected_atoms <= a.expected_atoms);
                }
            }
        }
    }

    #[test]
    fn register_shifts_lie_on_the_trap_line(
        rows in 1usize..6,
        cols in 1usize..6,
        waist in 50e-6f64..500e-6,
        field_t in 0.0f64..1e-4,
    ) {
        let spec = ArraySpec { rows, cols, illumination_waist_m: waist, ..ArraySpec::default() };
        let field = FieldParams::new(field_t);
        let model = ShiftModel::default();
        let sites = load_array(&spec, &LoadingParams::default(), &field, &model, 1).unwrap();
        let line = |u: f64| total_resonance_shift(&spec.trap(u), &field, &model).unwrap();
        let (u0, u1) = (1e-4, 2e-3);
        let slope = (line(u1) - line(u0)) / (u1 - u0);
        for s in &sites {
            let predicted = line(u0) + slope * (s.depth_k - u0);
            prop_assert!((s.resonance_shift - predicted).abs() <= 1e-12 * s.resonance_shift.abs());
        }
    }

    #[test]
    fn noise_free_frames_conserve_photons(
        emitters in prop::collection::vec((-60e-6f64..60e-6, -60e-6f64..60e-6, 0.0f64..800.0), 1..6),
    ) {
        let p = DetectionParams { noise: false, ..DetectionParams::default() };
        let emitters: Vec<Emitter> =
            emitters.into_iter().map(|(x, y, n)| Emitter { position: [x, y], atoms: n }).collect();
        let frame = render_frame(&emitters, &p, 0).unwrap();
        let half_x = 0.5 * p.width_px as f64 * p.pixel_pitch_m;
        let half_y = 0.5 * p.height_px as f64 * p.pixel_pitch_m;
        let window = |mu: f64, half: f64| {
            let s = p.psf_sigma_m * 2f64.sqrt();
            0.5 * (libm::erf((half - mu) / s) - libm::erf((-half - mu) / s))
        };
        let expected: f64 = emitters
            .iter()
            .map(|e| e.atoms * p.counts_per_atom() * window(e.position[0], half_x) * window(e.position[1], half_y))
            .sum();
        prop_assert!((frame.total() - expected).abs() <= 1e-6 * expected.max(1.0));
        prop_assert!(frame.counts.iter().all(|c| *c >= 0.0));
    }

    #[test]
    fn seeded_frames_repeat(seed in any::<u64>(), n in 1.0f64..500.0) {
        let p = DetectionParams { width_px: 32, height_px: 32, ..DetectionParams::default() };
        let e = [Emitter { position: [0.0, 0.0], atoms: n }];
        prop_assert_eq!(render_frame(&e, &p, seed).unwrap().counts, render_frame(&e, &p, seed).unwrap().counts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lm_never_raises_the_residual(
        v0 in 0.2f64..2.0,
        tau in 5e-3f64..0.2,
        sigma in 0.0f64..0.05,
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = (0..40).map(|k| k as f64 * 2.5e-3).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-12)).unwrap();
        let y: Vec<f64> = x.iter().map(|t| v0 * (-t / tau).exp() + noise.sample(&mut rng)).collect();
        let model = ModelSpec::new(ModelKind::ExpDecay);
        let r = fit_curve(&model, &x, &y, &[1.0, 0.05], &FitOptions::default()).unwrap();
        prop_assert!(r.rss_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn fitted_phase_is_wrapped(phase in -20.0f64..20.0, seed in any::<u64>()) {
        let x: Vec<f64> = (0..120).map(|k| k as f64 * 1e-4).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let y: Vec<f64> = x
            .iter()
            .map(|t| 0.25 * (TAU * 2000.0 * t + phase).cos() * (-t / 8e-3).exp() + 0.25 + noise.sample(&mut rng))
            .collect();
        let model = ModelSpec::new(ModelKind::RamseyEq4);
        let start = initial_guess(&model, &x, &y).unwrap();
        let r = fit_curve(&model, &x, &y, &start, &FitOptions::default()).unwrap();
        let phi = r.value("phase").unwrap();
        prop_assert!(phi > -PI && phi <= PI);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn monte_carlo_ignores_thread_count(seed in any::<u64>(), n in 100usize..5000) {
        let trap = TrapParams::default();
        let temperature = temperature_from_t2star(4.08e-3, &trap, &PhysicsConstants::default()).unwrap();
        let exp = EnsembleExperiment {
            ensemble: ThermalEnsemble::new(n, temperature, trap),
            shift: ShiftModel::default(),
            field: FieldParams::default(),
            raman_detuning: TAU * 1e3,
            pulse: PulseSpec::Ideal,
            relax: RelaxationParams::none(),
        };
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 2e-4).collect();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_ramsey(&exp, &times, seed).unwrap())
        };
        let one = run(1);
        let four = run(4);
        prop_assert_eq!(one.trace.p0, four.trace.p0);
        prop_assert_eq!(one.modulation, four.modulation);
    }
}
