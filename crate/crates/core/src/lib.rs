//! Coordinate-change first-order spline kernels for regularized impulse
//! response estimation of continuous-time LTI systems.
//!
//! The kernel family studied here is `K(t1, t2) = min(|g0(t1)|, |g0(t2)|)`,
//! where `g0` is the impulse response of a stable, strictly proper rational
//! transfer function. The TC kernel is the special case `g0(t) = β e^{-αt}`.
//!
//! Module map:
//!
//! * [`lti`]: transfer functions, partial fractions, exponential envelopes.
//! * [`kernels`]: kernel evaluation, Gram matrices, closed-form determinant
//!   and tridiagonal-structured inverse.
//! * [`spectral`]: Lambert W and the Mercer expansion of the multiple-pole
//!   kernel `min(τ1^n e^{-ατ1}, τ2^n e^{-ατ2})`.
//! * [`estimator`]: the representer solution `ĝ(t) = Σ c_i K_i^u(t)`.
//! * [`tuning`]: Empirical Bayes and oracle-MSE hyperparameter tuning,
//!   Wilcoxon rank-sum tests.
//! * [`maxent`]: the Gaussian increment process whose covariance is the kernel.
//! * [`experiment`]: seeded Monte-Carlo comparison harness and file export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod lti;
pub mod maxent;
pub mod quadrature;
pub mod spectral;
pub mod tuning;

pub use error::{Error, Result};
pub use estimator::{Dataset, EstimateModel, InputSignal};
pub use experiment::{ExperimentConfig, RunResult};
pub use kernels::{
    AnyKernel, CoordinateChangeKernel, GramFactorization, Kernel, SplineKernel, TcKernel,
};
pub use lti::{ExponentialBound, PartialFractionForm, RationalTransferFunction};
pub use maxent::IncrementProcess;
pub use spectral::{LambertBranch, MeasureM, MultiPoleSpectralBasis};
pub use tuning::{HyperParams, KernelFamily, TuningMethod, TuningResult};
