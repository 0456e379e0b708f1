//! Shared fixtures for the benchmark targets.

use twoscale::model::{retrial_model, ModelSpec};
use twoscale::sim::SystemState;
use twoscale::SimplexVector;

/// The standard benchmark model.
pub fn bench_model() -> ModelSpec {
    retrial_model(1.0, 2.0, 3).expect("valid parameters")
}

/// All queues empty, `n` particles, idle server.
pub fn bench_initial(n: u64) -> SystemState {
    SystemState::point_mass(4, 0, n, 0)
}

/// An interior empirical measure for rate solves.
pub fn bench_measure() -> SimplexVector {
    SimplexVector::new(vec![0.4, 0.3, 0.2, 0.1]).expect("on the simplex")
}
