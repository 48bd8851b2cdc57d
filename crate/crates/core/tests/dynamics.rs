use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wadc_core::dynamics::*;
use wadc_core::grid::{solve_equilibrium, ReducedModel};
use wadc_core::linalg::*;
use wadc_core::synth::random_swing_model;

fn bundled() -> (wadc_core::grid::NetworkCase, ReducedModel) {
    let case = wadc_core::cases::two_area();
    let rm = solve_equilibrium(&case).unwrap();
    (case, rm)
}

fn gain() -> RealMatrix {
    RealMatrix::from_row_slice(1, 4, &[-20.0, -10.0, 10.0, 20.0])
}

/// Largest gap between the nonlinear run and `exp(A_c t) x0` for a rotor
/// angle kick of size `eps`.
fn kick_divergence(eps: f64) -> f64 {
    let (case, rm) = bundled();
    let k1 = gain();
    let model = Linearization::of_reduced(&case, rm.clone()).unwrap().model(&DVector::zeros(4), &k1).unwrap();
    let dir = DVector::from_vec(vec![1.0, 0.5, -0.5, -1.0]);
    let mut opts = NonlinearOptions::new(4, 10.0);
    opts.delta_offset = Some(&dir * eps);
    let tr = simulate_nonlinear(&case, &rm, &k1, &opts, &[]).unwrap();
    let mut x0 = DVector::zeros(8);
    x0.rows_mut(0, 4).copy_from(&(&dir * eps));
    let step = matrix_exp(&model.ac, opts.dt).unwrap();
    let mut xl = x0;
    let mut worst: f64 = 0.0;
    for k in 0..tr.states.len() {
        let mut xn = tr.states.x.row(k).transpose();
        for i in 0..4 {
            xn[i] -= rm.equilibrium.delta[i];
        }
        worst = worst.max((xn - &xl).amax());
        xl = &step * xl;
    }
    worst
}

#[test]
fn nonlinear_run_matches_linearization_to_second_order() {
    let small = kick_divergence(1e-3);
    let large = kick_divergence(1e-2);
    assert!(small < 0.02 * 1e-3, "relative gap {}", small / 1e-3);
    let ratio = large / small;
    assert!((50.0..200.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn load_step_settles_on_the_post_event_equilibrium() {
    let (case, rm) = bundled();
    let k1 = gain();
    let opts = NonlinearOptions::new(4, 40.0);
    let events = [ScenarioEvent { time_s: 1.0, kind: EventKind::LoadStep { bus: 7, fraction: 0.05 } }];
    let tr = simulate_nonlinear(&case, &rm, &k1, &opts, &events).unwrap();
    let n = tr.states.len();
    let last = tr.states.x.row(n - 1);
    let prev = tr.states.x.row(n - 101);
    let omega = last.columns(4, 4);
    // Synchronous: one common (negative) frequency offset, constant angle differences.
    assert!(omega[0] < -1e-4);
    assert!((omega.max() - omega.min()).abs() < 1e-8);
    for i in 1..4 {
        let spread = (last[i] - last[0]) - (prev[i] - prev[0]);
        assert!(spread.abs() < 1e-7);
    }
    // Without a governor the VSC follows its droop on the settled offset.
    let pvs = case.vscs[0].pvs;
    let expected = pvs + (&k1 * omega.transpose())[(0, 0)];
    assert!((tr.pv[(n - 1, 0)] - expected).abs() < 1e-6);
}

#[test]
fn cleared_fault_returns_to_the_operating_point() {
    let (case, rm) = bundled();
    let opts = NonlinearOptions::new(4, 25.0);
    let events = [ScenarioEvent { time_s: 0.5, kind: EventKind::ThreePhaseFault { bus: 10, clearing_s: 0.05 } }];
    let tr = simulate_nonlinear(&case, &rm, &gain(), &opts, &events).unwrap();
    let n = tr.states.len();
    let during = tr.states.x.row(60);
    assert!(during.columns(4, 4).amax() > 1e-4);
    let last = tr.states.x.row(n - 1);
    let eq = &rm.equilibrium.delta;
    for i in 1..4 {
        assert!(((last[i] - last[0]) - (eq[i] - eq[0])).abs() < 1e-4);
    }
    assert!(last.columns(4, 4).amax() < 1e-4);
}

#[test]
fn noisy_nonlinear_runs_are_seed_deterministic() {
    let (case, rm) = bundled();
    let mut opts = NonlinearOptions::new(4, 3.0);
    opts.sigma = DVector::from_element(4, 0.05);
    opts.seed = 11;
    let a = simulate_nonlinear(&case, &rm, &gain(), &opts, &[]).unwrap();
    let b = simulate_nonlinear(&case, &rm, &gain(), &opts, &[]).unwrap();
    assert_eq!(a.states.x, b.states.x);
    opts.seed = 12;
    let c = simulate_nonlinear(&case, &rm, &gain(), &opts, &[]).unwrap();
    assert_ne!(a.states.x, c.states.x);
}

#[test]
fn stationary_covariance_matches_lyapunov() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let model = random_swing_model(&mut rng, 3, 1);
    let exact = solve_lyapunov(&model.ac, &model.diffusion()).unwrap();
    let mut errs: Vec<f64> = (0..10)
        .map(|seed| {
            let tr = simulate_linear_ou(&model, seed, 0.02, 300.0, &OuStart::Stationary).unwrap();
            let n = tr.x.nrows() as f64;
            let mean = tr.x.row_mean();
            let centred = RealMatrix::from_fn(tr.x.nrows(), tr.x.ncols(), |r, c| tr.x[(r, c)] - mean[c]);
            let cov = centred.transpose() * &centred / n;
            relative_frobenius_error(&cov, &exact)
        })
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(0.5 * (errs[4] + errs[5]) <= 0.10, "{errs:?}");
}

#[test]
fn pmu_window_from_a_nonlinear_run_is_centred_and_decimated() {
    let (case, rm) = bundled();
    let mut opts = NonlinearOptions::new(4, 4.0);
    opts.sigma = DVector::from_element(4, 0.05);
    let tr = simulate_nonlinear(&case, &rm, &gain(), &opts, &[]).unwrap();
    let w = emulate_pmu(&tr.states, 50.0, 0.0, 0).unwrap();
    assert_eq!(w.len(), 200);
    for c in 0..8 {
        assert!(w.samples.column(c).mean().abs() < 1e-12);
    }
    let step = w.samples[(3, 5)] - w.samples[(1, 5)];
    assert!((step - (tr.states.x[(6, 5)] - tr.states.x[(2, 5)])).abs() < 1e-15);
}
