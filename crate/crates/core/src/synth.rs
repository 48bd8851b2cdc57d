//! Seeded random inputs for property suites and benchmarks.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{closed_loop, StateSpaceModel};
use crate::grid::{solve_equilibrium, Branch, Bus, BusKind, GeneratorParams, Load, NetworkCase, VscTerminal};
use crate::linalg::{spectral_abscissa, RealMatrix};

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> RealMatrix {
    RealMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Dense Hurwitz matrix with spectral radius of a few units and spectral
/// abscissa in `[-1.1, -0.1]`.
pub fn random_hurwitz<R: Rng>(rng: &mut R, n: usize) -> RealMatrix {
    let scale = rng.random_range(0.5..4.0) / (n as f64).sqrt();
    let g = gaussian(rng, n, n) * scale;
    let margin = rng.random_range(0.1..1.0);
    let abscissa = spectral_abscissa(&g).expect("finite Gaussian matrix");
    g - RealMatrix::identity(n, n) * (abscissa + margin)
}

/// Swing-structured model whose angle coupling is a weighted Laplacian plus
/// a grounding strong enough to make every machine underdamped, so `A` and
/// `A_c` (with a small random `K1`) are Hurwitz with decay rates of at least
/// about 1 1/s and have a stationary law that 300 s of data resolves.
pub fn random_swing_model<R: Rng>(rng: &mut R, ng: usize, nv: usize) -> StateSpaceModel {
    let omega0 = 1.0;
    let m = DVector::from_fn(ng, |_, _| rng.random_range(2.0..10.0));
    let d = DVector::from_fn(ng, |_, _| rng.random_range(2.0..4.0));
    let mut lap = RealMatrix::zeros(ng, ng);
    for i in 0..ng {
        for j in i + 1..ng {
            let w = rng.random_range(0.5..4.0);
            lap[(i, j)] -= w;
            lap[(j, i)] -= w;
            lap[(i, i)] += w;
            lap[(j, j)] += w;
        }
        lap[(i, i)] += m[i] * (0.25 * d[i] * d[i] + rng.random_range(0.5..2.0));
    }
    let mut a = RealMatrix::zeros(2 * ng, 2 * ng);
    for i in 0..ng {
        a[(i, ng + i)] = omega0;
        for j in 0..ng {
            a[(ng + i, j)] = -lap[(i, j)] / m[i];
        }
        a[(ng + i, ng + i)] = -d[i];
    }
    let mut b = RealMatrix::zeros(2 * ng, nv);
    b.view_mut((ng, 0), (ng, nv)).copy_from(&gaussian(rng, ng, nv));
    let mut s = RealMatrix::zeros(2 * ng, ng);
    for i in 0..ng {
        s[(ng + i, i)] = rng.random_range(0.2..1.0);
    }
    let mut k1 = gaussian(rng, nv, ng) * 0.05;
    let mut ac = closed_loop(&a, &b, &k1, ng);
    while spectral_abscissa(&ac).expect("finite model") >= 0.0 {
        k1 *= 0.5;
        ac = closed_loop(&a, &b, &k1, ng);
    }
    StateSpaceModel { ng, nv, omega0, a, b, s, ac, k1 }
}

/// Small meshed network (one or two passive hubs, generators and VSCs on
/// spokes) whose equilibrium solve succeeds. Bus ids are consecutive from 1:
/// generators, then VSCs, then hubs.
pub fn random_small_case<R: Rng>(rng: &mut R, ng: usize, nv: usize) -> NetworkCase {
    loop {
        let case = draw_case(rng, ng, nv);
        if solve_equilibrium(&case).is_ok() {
            return case;
        }
    }
}

fn draw_case<R: Rng>(rng: &mut R, ng: usize, nv: usize) -> NetworkCase {
    let hubs = rng.random_range(1..=2usize);
    let gen_bus = |k: usize| k + 1;
    let vsc_bus = |j: usize| ng + j + 1;
    let hub_bus = |h: usize| ng + nv + h + 1;

    let mut buses = Vec::new();
    buses.extend((0..ng).map(|k| Bus { id: gen_bus(k), kind: BusKind::Generator, name: None }));
    buses.extend((0..nv).map(|j| Bus { id: vsc_bus(j), kind: BusKind::Vsc, name: None }));
    buses.extend((0..hubs).map(|h| Bus { id: hub_bus(h), kind: BusKind::Passive, name: None }));

    let mut branches = Vec::new();
    let mut line = |rng: &mut R, from: usize, to: usize| {
        let x = rng.random_range(0.05..0.25);
        branches.push(Branch {
            id: branches.len() + 1,
            from,
            to,
            r: Some(x * rng.random_range(0.0..0.15)),
            x: Some(x),
            g: None,
            b: None,
            shunt_b: rng.random_range(0.0..0.05),
        });
    };
    for k in 0..ng {
        line(rng, gen_bus(k), hub_bus(k % hubs));
    }
    for j in 0..nv {
        line(rng, vsc_bus(j), hub_bus(j % hubs));
        if rng.random_bool(0.5) {
            let k = rng.random_range(0..ng);
            line(rng, vsc_bus(j), gen_bus(k));
        }
    }
    if hubs == 2 {
        line(rng, hub_bus(0), hub_bus(1));
    }

    let generators: Vec<GeneratorParams> = (0..ng)
        .map(|k| GeneratorParams {
            bus: gen_bus(k),
            m: rng.random_range(3.0..12.0),
            d: rng.random_range(1.0..6.0),
            e: rng.random_range(1.02..1.12),
            pm: rng.random_range(0.3..1.2),
            xd: rng.random_range(0.1..0.3),
        })
        .collect();
    let vscs: Vec<VscTerminal> = (0..nv)
        .map(|j| VscTerminal {
            bus: vsc_bus(j),
            pvs: rng.random_range(-0.3..0.3),
            qvs: rng.random_range(-0.1..0.1),
            limit: 1.0,
        })
        .collect();
    let supply: f64 = generators.iter().map(|g| g.pm).sum::<f64>() + vscs.iter().map(|v| v.pvs).sum::<f64>();
    let loads = (0..hubs)
        .map(|h| Load { bus: hub_bus(h), g: supply.max(0.2) / hubs as f64, b: -rng.random_range(0.0..0.2) })
        .collect();

    NetworkCase {
        name: "random".into(),
        base_mva: 100.0,
        frequency_hz: 60.0,
        buses,
        branches,
        generators,
        vscs,
        loads,
    }
}
