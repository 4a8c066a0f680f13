//! Shared fixtures for the benchmarks.

use ccspline::estimator::{Dataset, InputSignal};
use ccspline::experiment::{simulate_output, ExperimentConfig};
use ccspline::kernels::CoordinateChangeKernel;
use ccspline::lti::RationalTransferFunction;

/// `n` instants spaced `0.1` apart.
pub fn grid(n: usize) -> Vec<f64> {
    (1..=n).map(|k| 0.1 * k as f64).collect()
}

/// Kernel of `g0(t) = 0.5 (e^{-t} - e^{-3t})`.
pub fn two_pole_kernel() -> CoordinateChangeKernel {
    CoordinateChangeKernel::new(RationalTransferFunction::two_pole(3.0, 1.0, 0.5).unwrap()).unwrap()
}

/// First realization of the built-in comparison study.
pub fn study_dataset() -> Dataset {
    let cfg = ExperimentConfig::reference_study();
    simulate_output(
        &cfg.system,
        &InputSignal::Impulse,
        &cfg.instants(),
        cfg.noise_variance,
        cfg.seed,
        0,
    )
    .unwrap()
}
