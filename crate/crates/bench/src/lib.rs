//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wadc_core::dynamics::{Linearization, PmuWindow, StateSpaceModel};
use wadc_core::estimation::{run_identification, IdentificationConfig, LinearOuSource};
use wadc_core::linalg::RealMatrix;
use wadc_core::synth::random_hurwitz;

pub fn hurwitz(n: usize, seed: u64) -> RealMatrix {
    random_hurwitz(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

/// Linearized bundled case with the default load noise and no damping gain.
pub fn two_area() -> StateSpaceModel {
    let case = wadc_core::cases::two_area();
    let lin = Linearization::of_case(&case).expect("bundled case linearizes");
    lin.model(&DVector::from_element(case.ng(), 0.05), &RealMatrix::zeros(case.nv(), case.ng())).expect("model")
}

/// The two default-length ambient windows of one identification campaign.
pub fn recorded_windows(seed: u64) -> Vec<PmuWindow> {
    let truth = two_area();
    let mut src = LinearOuSource::new(truth.clone(), 50.0, seed);
    let k0 = RealMatrix::zeros(truth.nv, truth.ng);
    let id = run_identification(&mut src, &k0, truth.omega0, &IdentificationConfig::default()).expect("identification");
    id.windows.to_vec()
}
