use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DynamicsError, Result, StateSpaceModel, StateTrajectory};
use crate::linalg::{is_hurwitz, matrix_exp, solve_lyapunov, symmetrize, RealMatrix};

/// One-step transition of `dx = A x dt + dW`, `E[dW dWᵀ] = W dt`, sampled at
/// interval `dt` without truncation error.
#[derive(Debug, Clone, PartialEq)]
pub struct OuDiscretization {
    pub dt: f64,
    pub phi: RealMatrix,
    pub qd: RealMatrix,
    /// Symmetric square root of `qd` (negative eigenvalues clamped).
    pub noise_factor: RealMatrix,
}

/// Van Loan block exponential: with `F = exp([[−A, W], [0, Aᵀ]]·dt)`,
/// `Φ = F22ᵀ` and `Q_d = Φ·F12`.
pub fn discretize_ou(a: &RealMatrix, w: &RealMatrix, dt: f64) -> Result<OuDiscretization> {
    let n = a.nrows();
    if a.ncols() != n || w.shape() != (n, n) {
        return Err(DynamicsError::Dimension("A and W must be square and equal in size".into()));
    }
    if !(dt > 0.0) {
        return Err(DynamicsError::Invalid(format!("dt must be positive, got {dt}")));
    }
    let mut big = RealMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a));
    big.view_mut((0, n), (n, n)).copy_from(w);
    big.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let f = matrix_exp(&big, dt)?;
    let phi = f.view((n, n), (n, n)).transpose();
    let qd = symmetrize(&(&phi * f.view((0, n), (n, n))));
    let noise_factor = psd_sqrt(&qd);
    Ok(OuDiscretization { dt, phi, qd, noise_factor })
}

pub(crate) fn psd_sqrt(c: &RealMatrix) -> RealMatrix {
    let eig = c.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * RealMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub enum OuStart {
    /// First sample drawn from the stationary law `N(0, C)`.
    Stationary,
    FromState(DVector<f64>),
}

/// Sample `round(duration/dt)` states of the closed-loop OU process
/// `dx = A_c x dt + S dW`, starting at `t = 0`.
pub fn simulate_linear_ou(
    model: &StateSpaceModel,
    seed: u64,
    dt: f64,
    duration: f64,
    start: &OuStart,
) -> Result<StateTrajectory> {
    let n = model.ac.nrows();
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(DynamicsError::Invalid("dt and duration must be positive".into()));
    }
    let steps = (duration / dt).round() as usize;
    let w = model.diffusion();
    let disc = discretize_ou(&model.ac, &w, dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| StandardNormal.sample(rng));

    let mut x = match start {
        OuStart::Stationary => {
            if !is_hurwitz(&model.ac)? {
                return Err(DynamicsError::NotStationary);
            }
            let c = solve_lyapunov(&model.ac, &w)?;
            psd_sqrt(&c) * draw(&mut rng)
        }
        OuStart::FromState(x0) => {
            if x0.len() != n {
                return Err(DynamicsError::Dimension(format!("initial state has {} entries, need {n}", x0.len())));
            }
            x0.clone()
        }
    };

    let mut out = RealMatrix::zeros(steps, n);
    for k in 0..steps {
        out.row_mut(k).copy_from(&x.transpose());
        x = &disc.phi * &x + &disc.noise_factor * draw(&mut rng);
    }
    Ok(StateTrajectory { dt, t0: 0.0, ng: model.ng, x: out })
}
