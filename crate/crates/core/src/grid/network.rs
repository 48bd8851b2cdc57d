use num_complex::Complex64;

use super::{GridError, NetworkCase, Result};
use crate::linalg::ComplexMatrix;

/// Bus admittance matrix extended with one internal node per generator.
///
/// Rows `0..n_bus` follow `case.buses`; row `n_bus + k` is the internal node of
/// generator `k`, tied to its terminal through `x'd`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedAdmittance {
    pub y: ComplexMatrix,
    pub n_bus: usize,
    pub bus_ids: Vec<usize>,
}

impl AugmentedAdmittance {
    pub fn internal_node(&self, generator: usize) -> usize {
        self.n_bus + generator
    }
}

fn stamp_series(y: &mut ComplexMatrix, i: usize, j: usize, ys: Complex64) {
    y[(i, i)] += ys;
    y[(j, j)] += ys;
    y[(i, j)] -= ys;
    y[(j, i)] -= ys;
}

/// Network-only bus admittance matrix (branches, charging, loads).
pub fn network_admittance(case: &NetworkCase) -> Result<ComplexMatrix> {
    let index = case.bus_index();
    let n = case.buses.len();
    let mut y = ComplexMatrix::zeros(n, n);
    for br in &case.branches {
        let (i, j) = (index[&br.from], index[&br.to]);
        stamp_series(&mut y, i, j, br.series_admittance()?);
        let half = Complex64::new(0.0, 0.5 * br.shunt_b);
        y[(i, i)] += half;
        y[(j, j)] += half;
    }
    for l in &case.loads {
        let i = index[&l.bus];
        y[(i, i)] += Complex64::new(l.g, l.b);
    }
    Ok(y)
}

/// Full admittance including generator internal nodes. Fails if any
/// connected component of the network carries no generator.
pub fn build_admittance(case: &NetworkCase) -> Result<AugmentedAdmittance> {
    let base = network_admittance(case)?;
    let n_bus = base.nrows();
    let ng = case.ng();
    let index = case.bus_index();
    let mut y = ComplexMatrix::zeros(n_bus + ng, n_bus + ng);
    y.view_mut((0, 0), (n_bus, n_bus)).copy_from(&base);
    for (k, g) in case.generators.iter().enumerate() {
        stamp_series(&mut y, n_bus + k, index[&g.bus], Complex64::new(0.0, -1.0 / g.xd));
    }

    let islands = components(&y);
    for island in islands {
        if !island.iter().any(|&i| i >= n_bus) {
            let mut buses: Vec<usize> = island.iter().map(|&i| case.buses[i].id).collect();
            buses.sort_unstable();
            return Err(GridError::IslandWithoutGenerator { buses });
        }
    }
    Ok(AugmentedAdmittance { y, n_bus, bus_ids: case.buses.iter().map(|b| b.id).collect() })
}

fn components(y: &ComplexMatrix) -> Vec<Vec<usize>> {
    let n = y.nrows();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if !seen[j] && j != i && y[(i, j)] != Complex64::new(0.0, 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Schur complement `Y_kk − Y_ke Y_ee⁻¹ Y_ek` onto `keep` (in that order).
pub fn kron_reduce(y: &ComplexMatrix, keep: &[usize]) -> Result<ComplexMatrix> {
    let n = y.nrows();
    if y.ncols() != n || keep.iter().any(|&k| k >= n) {
        return Err(GridError::Dimension(format!("keep set {keep:?} invalid for {n}-node admittance")));
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        if is_kept[k] {
            return Err(GridError::Dimension(format!("node {k} listed twice in keep set")));
        }
        is_kept[k] = true;
    }
    let elim: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let pick = |rows: &[usize], cols: &[usize]| ComplexMatrix::from_fn(rows.len(), cols.len(), |i, j| y[(rows[i], cols[j])]);
    let ykk = pick(keep, keep);
    if elim.is_empty() {
        return Ok(ykk);
    }
    let yke = pick(keep, &elim);
    let yek = pick(&elim, keep);
    let yee = pick(&elim, &elim);
    let lu = yee.lu();
    let scale = y.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let u = lu.u();
    let min_pivot = (0..u.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * scale {
        return Err(GridError::SingularReduction);
    }
    let x = lu.solve(&yek).ok_or(GridError::SingularReduction)?;
    Ok(ykk - yke * x)
}
