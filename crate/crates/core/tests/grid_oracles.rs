use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wadc_core::grid::*;
use wadc_core::linalg::{ComplexMatrix, RealMatrix};
use wadc_core::synth::random_small_case;

fn small_case(seed: u64, ng: usize, nv: usize) -> (NetworkCase, ReducedModel) {
    let case = random_small_case(&mut ChaCha8Rng::seed_from_u64(seed), ng, nv);
    let rm = solve_equilibrium(&case).unwrap();
    (case, rm)
}

/// Stacked injections `[P_E; P_v; Q_v]` as a function of `[δ; θ; V]`.
fn stacked(net: &ReducedNetwork, x: &DVector<f64>) -> DVector<f64> {
    let (ng, nv) = (net.ng, net.nv);
    let inj = injections(net, &x.rows(0, ng).into_owned(), &x.rows(ng, nv).into_owned(), &x.rows(ng + nv, nv).into_owned())
        .unwrap();
    let mut out = DVector::zeros(ng + 2 * nv);
    out.rows_mut(0, ng).copy_from(&inj.pe);
    out.rows_mut(ng, nv).copy_from(&inj.pv);
    out.rows_mut(ng + nv, nv).copy_from(&inj.qv);
    out
}

fn central_jacobian(f: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, h: f64) -> RealMatrix {
    let m = f(x).len();
    let mut j = RealMatrix::zeros(m, x.len());
    for c in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        j.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
    }
    j
}

fn operating_point(rm: &ReducedModel) -> DVector<f64> {
    let eq = &rm.equilibrium;
    let mut x = DVector::zeros(eq.delta.len() + 2 * eq.v.len());
    let (ng, nv) = (eq.delta.len(), eq.v.len());
    x.rows_mut(0, ng).copy_from(&eq.delta);
    x.rows_mut(ng, nv).copy_from(&eq.theta);
    x.rows_mut(ng + nv, nv).copy_from(&eq.v);
    x
}

/// Solve the VSC terminal equations `P_v = p`, `Q_v = q` for `(θ, V)` at
/// fixed rotor angles by Newton with a finite-difference Jacobian, and
/// return the generator powers.
fn generator_power_with_vsc_held(net: &ReducedNetwork, delta: &DVector<f64>, start: &DVector<f64>, pq: &DVector<f64>) -> DVector<f64> {
    let (ng, nv) = (net.ng, net.nv);
    let with = |y: &DVector<f64>| {
        let mut x = DVector::zeros(ng + 2 * nv);
        x.rows_mut(0, ng).copy_from(delta);
        x.rows_mut(ng, 2 * nv).copy_from(y);
        stacked(net, &x)
    };
    let resid = |y: &DVector<f64>| with(y).rows(ng, 2 * nv) - pq;
    let mut y = start.clone();
    for _ in 0..30 {
        let r = resid(&y);
        if r.amax() < 1e-14 {
            break;
        }
        let j = central_jacobian(&|z| resid(z), &y, 1e-7);
        y -= j.lu().solve(&r).unwrap();
    }
    assert!(resid(&y).amax() < 1e-12);
    with(&y).rows(0, ng).into_owned()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn nine_blocks_match_central_differences(seed in any::<u64>(), ng in 2usize..4, nv in 1usize..3) {
        let (_, rm) = small_case(seed, ng, nv);
        let blocks = jacobian_blocks(&rm).unwrap();
        let x0 = operating_point(&rm);
        let fd = central_jacobian(&|x| stacked(&rm.network, x), &x0, 1e-6);
        let analytic = blocks.assembled();
        prop_assert_eq!(analytic.shape(), (ng + 2 * nv, ng + 2 * nv));
        prop_assert!((fd - &analytic).amax() <= 1e-5 * analytic.amax().max(1.0));
    }

    #[test]
    fn elimination_matches_held_terminal_differences(seed in any::<u64>(), ng in 2usize..4, nv in 1usize..3) {
        let (case, rm) = small_case(seed, ng, nv);
        let m = DVector::from_iterator(ng, case.generators.iter().map(|g| g.m));
        let rdc = eliminate_vsc(&jacobian_blocks(&rm).unwrap(), &m).unwrap();
        let eq = &rm.equilibrium;
        let mut y0 = DVector::zeros(2 * nv);
        y0.rows_mut(0, nv).copy_from(&eq.theta);
        y0.rows_mut(nv, nv).copy_from(&eq.v);
        let mut pq0 = DVector::zeros(2 * nv);
        pq0.rows_mut(0, nv).copy_from(&eq.pv);
        pq0.rows_mut(nv, nv).copy_from(&eq.qv);
        let h = 1e-6;

        let mut a1 = RealMatrix::zeros(ng, ng);
        for k in 0..ng {
            let mut dp = eq.delta.clone();
            let mut dm = eq.delta.clone();
            dp[k] += h;
            dm[k] -= h;
            let col = (generator_power_with_vsc_held(&rm.network, &dp, &y0, &pq0)
                - generator_power_with_vsc_held(&rm.network, &dm, &y0, &pq0))
                / (2.0 * h);
            a1.set_column(k, &col);
        }
        let mut a23 = RealMatrix::zeros(ng, 2 * nv);
        for c in 0..2 * nv {
            let mut pp = pq0.clone();
            let mut pm = pq0.clone();
            pp[c] += h;
            pm[c] -= h;
            let col = (generator_power_with_vsc_held(&rm.network, &eq.delta, &y0, &pp)
                - generator_power_with_vsc_held(&rm.network, &eq.delta, &y0, &pm))
                / (2.0 * h);
            a23.set_column(c, &col);
        }
        let scale = rdc.a1.amax().max(1.0);
        prop_assert!((&a1 - &rdc.a1).amax() <= 1e-5 * scale);
        prop_assert!((a23.columns(0, nv) - &rdc.a2).amax() <= 1e-5 * scale);
        prop_assert!((a23.columns(nv, nv) - &rdc.a3).amax() <= 1e-5 * scale);
        // Ā blocks are −M⁻¹ times the A blocks, exactly.
        for i in 0..ng {
            for j in 0..ng {
                prop_assert_eq!(rdc.abar1[(i, j)], -rdc.a1[(i, j)] / m[i]);
            }
        }
    }

    #[test]
    fn appendix_closed_forms_reassemble(seed in any::<u64>(), ng in 2usize..4, nv in 1usize..3) {
        let (case, rm) = small_case(seed, ng, nv);
        let b = jacobian_blocks(&rm).unwrap();
        let m = DVector::from_iterator(ng, case.generators.iter().map(|g| g.m));
        let rdc = eliminate_vsc(&b, &m).unwrap();
        let inv = |x: &RealMatrix| x.clone().try_inverse().unwrap();
        let f1 = inv(&(inv(&b.a23) * &b.a22 - inv(&b.a33) * &b.a32));
        let f2 = inv(&(inv(&b.a22) * &b.a23 - inv(&b.a32) * &b.a33));
        let a1 = &b.a11
            + &b.a12 * &f1 * (-inv(&b.a23) * &b.a21 + inv(&b.a33) * &b.a31)
            + &b.a13 * &f2 * (-inv(&b.a22) * &b.a21 + inv(&b.a32) * &b.a31);
        prop_assert!((a1 - &rdc.a1).amax() <= 1e-9 * rdc.a1.amax().max(1.0));
    }

    #[test]
    fn equilibrium_is_a_fixed_point(seed in any::<u64>(), ng in 2usize..4, nv in 0usize..3) {
        let (case, rm) = small_case(seed, ng, nv);
        let eq = &rm.equilibrium;
        let inj = injections(&rm.network, &eq.delta, &eq.theta, &eq.v).unwrap();
        let dispatch = Dispatch::from_case(&case);
        let share = &dispatch.participation / dispatch.participation.sum();
        let balanced = &dispatch.pm + share * eq.slack;
        prop_assert!((&inj.pe - balanced).amax() <= 1e-8);
        prop_assert!((&inj.pv - &dispatch.pvs).amax() <= 1e-8);
        prop_assert!((&inj.qv - &dispatch.qvs).amax() <= 1e-8);
        prop_assert_eq!(eq.delta[0], 0.0);
    }

    #[test]
    fn kron_reduction_preserves_retained_currents(seed in any::<u64>(), ng in 1usize..4, nv in 0usize..3) {
        let (case, rm) = small_case(seed, ng, nv);
        let aug = build_admittance(&case).unwrap();
        let index = case.bus_index();
        let mut keep: Vec<usize> = (0..ng).map(|k| aug.internal_node(k)).collect();
        keep.extend(case.vscs.iter().map(|v| index[&v.bus]));
        let drop: Vec<usize> = (0..aug.y.nrows()).filter(|i| !keep.contains(i)).collect();
        let pick = |rows: &[usize], cols: &[usize]| ComplexMatrix::from_fn(rows.len(), cols.len(), |r, c| aug.y[(rows[r], cols[c])]);
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 9);
        let vr = nalgebra::DVector::from_fn(keep.len(), |_, _| {
            Complex64::from_polar(rand::Rng::random_range(&mut r, 0.9..1.1), rand::Rng::random_range(&mut r, -0.5..0.5))
        });
        let ve = -pick(&drop, &drop).lu().solve(&(pick(&drop, &keep) * &vr)).unwrap();
        let full = pick(&keep, &keep) * &vr + pick(&keep, &drop) * ve;
        let reduced = &rm.network.y * &vr;
        prop_assert!((full - reduced).camax() <= 1e-9);
        prop_assert!((&rm.network.y - rm.network.y.transpose()).camax() <= 1e-12 * rm.network.y.camax());
    }
}

#[test]
fn central_differences_converge_quadratically() {
    let (_, rm) = small_case(3, 3, 1);
    let analytic = jacobian_blocks(&rm).unwrap().assembled();
    let x0 = operating_point(&rm);
    let err = |h: f64| (central_jacobian(&|x| stacked(&rm.network, x), &x0, h) - &analytic).amax();
    let (e3, e4) = (err(1e-3), err(1e-4));
    // Second-order truncation: a tenfold step cut shrinks the error ~100x.
    assert!(e4 < e3 / 50.0, "{e3:e} {e4:e}");
    for h in [1e-5, 1e-6, 1e-7] {
        assert!(err(h) < 1e-5);
    }
}

#[test]
fn bundled_case_has_a_poorly_damped_inter_area_mode() {
    use wadc_core::control::{modes, ModeClass};
    use wadc_core::dynamics::Linearization;
    let case = wadc_core::cases::two_area();
    assert_eq!((case.ng(), case.nv()), (4, 1));
    let lin = Linearization::of_case(&case).unwrap();
    let model = lin.model(&DVector::from_element(4, 0.05), &RealMatrix::zeros(1, 4)).unwrap();
    let rep = modes(&model.a, (0.1, 1.0)).unwrap();
    let inter: Vec<_> = rep.modes.iter().filter(|m| m.class == ModeClass::InterArea).collect();
    assert_eq!(inter.len(), 1);
    assert!(inter[0].damping_ratio < 0.10);
    assert!(rep.modes.iter().filter(|m| m.class == ModeClass::Local).count() == 2);
}
