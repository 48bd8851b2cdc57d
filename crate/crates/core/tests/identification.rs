use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wadc_core::dynamics::{closed_loop, simulate_linear_ou, Linearization, OuStart, PmuWindow, StateSpaceModel};
use wadc_core::estimation::*;
use wadc_core::linalg::*;
use wadc_core::synth::{random_hurwitz, random_swing_model};

fn two_area_truth() -> StateSpaceModel {
    let case = wadc_core::cases::two_area();
    let lin = Linearization::of_case(&case).unwrap();
    lin.model(&DVector::from_element(4, 0.05), &RealMatrix::zeros(1, 4)).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regression_identity_recovers_ac(seed in any::<u64>(), n in 4usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ac = random_hurwitz(&mut rng, n);
        let s = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = solve_lyapunov(&ac, &(&s * s.transpose() + RealMatrix::identity(n, n) * 0.1)).unwrap();
        let r = matrix_exp(&ac, 0.1).unwrap() * &c;
        let stats = SampleStatistics { c_hat: c, r_hat: r, tau_s: 0.1, lag: 5, n: 0, rate_hz: 50.0 };
        let est = estimate_ac(&stats).unwrap();
        prop_assert!(relative_frobenius_error(&est.ac, &ac) <= 1e-8);
        prop_assert_eq!(est.diagnostics.floored_eigenvalues, 0);
    }

    #[test]
    fn separation_inverts_closed_loop_composition(
        seed in any::<u64>(), ng in 2usize..6, nv in 1usize..3, alpha in 1.0f64..20.0, zero_row in any::<bool>()
    ) {
        prop_assume!(nv <= ng);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_swing_model(&mut rng, ng, nv);
        let mut k1 = truth.k1.clone();
        if zero_row {
            k1.row_mut(0).fill(0.0);
        }
        let plan = make_perturbation(&k1, alpha, -3.0).unwrap();
        let ac1 = closed_loop(&truth.a, &truth.b, &k1, ng);
        let ac2 = closed_loop(&truth.a, &truth.b, &(&k1 + &plan.delta_k1), ng);
        let est = separate_ab(&ac1, &ac2, &plan, &k1, truth.omega0).unwrap();
        let tol = 1e-12 * truth.a.amax().max(1.0);
        prop_assert!((&est.abar1 - truth.abar1()).amax() <= tol);
        prop_assert!((&est.abar2 - truth.abar2()).amax() <= tol * 10.0 * (1.0 / plan.delta_k1.amax()).max(1.0));
        prop_assert!((&est.minus_minv_d - truth.minus_minv_d()).amax() <= tol * 10.0);
        prop_assert_eq!(est.a.view((0, 0), (ng, ng)).amax(), 0.0);
        prop_assert_eq!(est.b.rows(0, ng).amax(), 0.0);
    }

    #[test]
    fn perturbation_is_a_generalized_permutation(seed in any::<u64>(), ng in 1usize..7, nv in 1usize..4, alpha in 0.5f64..30.0) {
        prop_assume!(nv <= ng);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k1 = RealMatrix::from_fn(nv, ng, |_, _| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(-5.0..5.0) });
        let plan = make_perturbation(&k1, alpha, 2.0).unwrap();
        let dk = &plan.delta_k1;
        let mut used = vec![false; ng];
        for i in 0..nv {
            let nz: Vec<usize> = (0..ng).filter(|&j| dk[(i, j)] != 0.0).collect();
            prop_assert_eq!(nz.len(), 1);
            let j = nz[0];
            prop_assert!(!used[j]);
            used[j] = true;
            prop_assert_eq!(plan.columns[i], j);
            if plan.fallback_rows.contains(&i) {
                prop_assert_eq!(dk[(i, j)], 2.0);
            } else {
                prop_assert!((dk[(i, j)] - alpha / 100.0 * k1[(i, j)]).abs() <= 1e-15 * k1[(i, j)].abs());
            }
        }
        genperm_pinv(dk).unwrap();
    }

    #[test]
    fn sample_covariance_is_symmetric_psd(seed in any::<u64>(), lag in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_swing_model(&mut rng, 2, 1);
        let tr = simulate_linear_ou(&model, seed, 0.02, 20.0, &OuStart::Stationary).unwrap();
        let w = PmuWindow::from_raw(50.0, 0.0, 2, tr.x).unwrap();
        let s = sample_stats(&w, lag as f64 / 50.0).unwrap();
        prop_assert_eq!(s.lag, lag);
        prop_assert_eq!(&s.c_hat, &s.c_hat.transpose());
        prop_assert!(s.c_hat.clone().symmetric_eigen().eigenvalues.min() >= -1e-12 * s.c_hat.amax());
    }
}

#[test]
fn two_area_identification_is_accurate_and_documented() {
    let truth = two_area_truth();
    let mut src = LinearOuSource::new(truth.clone(), 50.0, 7);
    let id = run_identification(&mut src, &RealMatrix::zeros(1, 4), truth.omega0, &IdentificationConfig::default()).unwrap();
    let acc = accuracy(&id.model, &truth);
    assert!(acc.a_frobenius < 0.10);
    assert!(acc.abar1_frobenius < 0.05);
    let d = &id.model.diagnostics;
    for dev in d.top_right_deviation {
        assert!(dev < 0.05, "{dev}");
    }
    assert_eq!(id.model.provenance.seeds, vec![window_seed(7, 0), window_seed(7, 1)]);
    assert_eq!(id.model.plan.fallback_rows, vec![0]);
    assert_eq!(id.restored_k1, RealMatrix::zeros(1, 4));
    let text = serde_json::to_string(&id.model).unwrap();
    let back: EstimatedModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, id.model);
}

#[test]
fn replayed_windows_give_the_same_model() {
    let truth = two_area_truth();
    let k1 = RealMatrix::zeros(1, 4);
    let cfg = IdentificationConfig::default();
    let mut live = LinearOuSource::new(truth.clone(), 50.0, 3);
    let first = run_identification(&mut live, &k1, truth.omega0, &cfg).unwrap();
    let mut replay = RecordedSource::new(first.windows.to_vec());
    let second = run_identification(&mut replay, &k1, truth.omega0, &cfg).unwrap();
    assert_eq!(first.model.a, second.model.a);
    assert_eq!(first.model.b, second.model.b);
}

#[test]
fn longer_windows_estimate_better() {
    let truth = two_area_truth();
    let k1 = RealMatrix::zeros(1, 4);
    let errs: Vec<f64> = [60.0, 150.0, 300.0]
        .iter()
        .map(|&window_s| {
            let cfg = IdentificationConfig { window_s, ..Default::default() };
            median(
                (0..20)
                    .map(|seed| {
                        let mut src = LinearOuSource::new(truth.clone(), 50.0, seed);
                        let id = run_identification(&mut src, &k1, truth.omega0, &cfg).unwrap();
                        accuracy(&id.model, &truth).minus_minv_d_frobenius
                    })
                    .collect(),
            )
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn drifting_ambient_data_is_refused() {
    let truth = two_area_truth();
    let k1 = RealMatrix::zeros(1, 4);
    let cfg = IdentificationConfig::default();
    let mut live = LinearOuSource::new(truth.clone(), 50.0, 5);
    let clean = run_identification(&mut live, &k1, truth.omega0, &cfg).unwrap();
    let mut windows = clean.windows.to_vec();
    let n = windows[1].len();
    let scale = windows[1].samples.column(5).amax();
    for r in 0..n {
        windows[1].samples[(r, 5)] += scale * (r as f64 / n as f64 - 0.5);
    }
    let mut replay = RecordedSource::new(windows);
    let err = run_identification(&mut replay, &k1, truth.omega0, &cfg).unwrap_err();
    assert!(matches!(err, EstimationError::NotStationary { window: 2, channel: 1, .. }), "{err}");
    let relaxed = IdentificationConfig { stationarity_sigmas: None, ..cfg };
    let mut replay = RecordedSource::new(clean.windows.to_vec());
    assert!(run_identification(&mut replay, &k1, truth.omega0, &relaxed).is_ok());
}
