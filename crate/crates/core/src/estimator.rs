//! Representer solution of the regularized impulse-response problem.
//!
//! With output Gram `O_ij = ∫∫ u(t_i - τ1) u(t_j - τ2) K(τ1, τ2)` and
//! coefficients `c = (O + γI)⁻¹ y`, the estimate is
//! `ĝ(t) = Σ_i c_i K_i^u(t)` where `K_i^u(t) = ∫_0^{t_i} u(t_i - τ) K(τ, t) dτ`.
//! Impulsive inputs collapse every convolution, so `O` is the Gram matrix
//! and `K_i^u(t) = K(t_i, t)`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AnyKernel, Kernel};
use crate::linalg::cholesky_with_jitter;
use crate::quadrature::{integrate, QuadConfig};

/// Inner quadrature settings for non-impulsive inputs.
pub const FUNCTIONAL_QUAD: QuadConfig = QuadConfig {
    abs_tol: 1e-12,
    rel_tol: 1e-10,
    max_panels: 1000,
};

/// A user-supplied input `u(t)` with a known bound.
#[derive(Clone)]
pub struct CustomInput {
    pub function: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub bound: f64,
    pub smooth: bool,
}

impl fmt::Debug for CustomInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomInput")
            .field("bound", &self.bound)
            .field("smooth", &self.smooth)
            .finish_non_exhaustive()
    }
}

/// Identification input.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InputSignal {
    /// Dirac impulse at `t = 0`.
    Impulse,
    /// `u(t) = amplitude`.
    Step { amplitude: f64 },
    /// `u(t) = amplitude · sin(omega t + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    #[serde(skip)]
    Custom(CustomInput),
}

impl PartialEq for InputSignal {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::Impulse, Self::Impulse) => true,
            (Self::Step { amplitude: a }, Self::Step { amplitude: b }) => a == b,
            (
                Self::Sinusoid {
                    amplitude: a1,
                    omega: w1,
                    phase: p1,
                },
                Self::Sinusoid {
                    amplitude: a2,
                    omega: w2,
                    phase: p2,
                },
            ) => a1 == a2 && w1 == w2 && p1 == p2,
            (Self::Custom(a), Self::Custom(b)) => Arc::ptr_eq(&a.function, &b.function),
            _ => false,
        }
    }
}

impl InputSignal {
    pub fn custom(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        bound: f64,
        smooth: bool,
    ) -> Self {
        Self::Custom(CustomInput {
            function: Arc::new(f),
            bound,
            smooth,
        })
    }

    pub fn is_impulse(&self) -> bool {
        matches!(self, Self::Impulse)
    }

    /// `u(t)`; `None` for the impulse.
    pub fn value(&self, t: f64) -> Option<f64> {
        match self {
            Self::Impulse => None,
            Self::Step { amplitude } => Some(*amplitude),
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Some(amplitude * (omega * t + phase).sin()),
            Self::Custom(c) => Some((c.function)(t)),
        }
    }

    /// `sup |u|`; `None` for the impulse.
    pub fn bound(&self) -> Option<f64> {
        match self {
            Self::Impulse => None,
            Self::Step { amplitude } => Some(amplitude.abs()),
            Self::Sinusoid { amplitude, .. } => Some(amplitude.abs()),
            Self::Custom(c) => Some(c.bound),
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            Self::Impulse => false,
            Self::Step { .. } | Self::Sinusoid { .. } => true,
            Self::Custom(c) => c.smooth,
        }
    }

    /// `U(t) = ∫_0^t u(s) ds`; the impulse's sifted mass `1` for `t > 0`.
    pub fn integral_to(&self, t: f64) -> Result<f64> {
        match self {
            Self::Impulse => Ok(1.0),
            Self::Step { amplitude } => Ok(amplitude * t),
            Self::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Ok(amplitude * (phase.cos() - (omega * t + phase).cos()) / omega),
            Self::Custom(c) => {
                Ok(integrate(|s| (c.function)(s), 0.0, t, &[], &FUNCTIONAL_QUAD)?.value)
            }
        }
    }
}

/// Sampled output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    instants: Vec<f64>,
    outputs: Vec<f64>,
    noise_variance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    y: f64,
}

impl Dataset {
    pub fn new(instants: Vec<f64>, outputs: Vec<f64>, noise_variance: f64) -> Result<Self> {
        if instants.is_empty() || instants.len() != outputs.len() {
            return Err(Error::Dataset(format!(
                "{} instants vs {} outputs",
                instants.len(),
                outputs.len()
            )));
        }
        if !(instants[0] > 0.0) || instants.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Dataset(
                "instants must be positive and strictly increasing".into(),
            ));
        }
        if outputs.iter().any(|y| !y.is_finite()) {
            return Err(Error::Dataset("outputs must be finite".into()));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::Dataset("noise variance must be positive".into()));
        }
        Ok(Self {
            instants,
            outputs,
            noise_variance,
        })
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// Reads `t,y` CSV.
    pub fn read_csv(path: impl AsRef<Path>, noise_variance: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let mut t = Vec::new();
        let mut y = Vec::new();
        for row in reader.deserialize::<CsvRow>() {
            let row = row.map_err(csv_err)?;
            t.push(row.t);
            y.push(row.y);
        }
        Self::new(t, y, noise_variance)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,y\n");
        for (t, y) in self.instants.iter().zip(&self.outputs) {
            s.push_str(&format!("{t},{y}\n"));
        }
        s
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

/// Points in `[a, b]` where `c(τ) = level`, found by scanning and bisection.
fn level_crossings<K: Kernel + ?Sized>(kernel: &K, level: f64, a: f64, b: f64) -> Result<Vec<f64>> {
    const SCAN: usize = 64;
    let mut out = Vec::new();
    let h = (b - a) / SCAN as f64;
    let mut prev_t = a;
    let mut prev = kernel.coordinate(a)? - level;
    for k in 1..=SCAN {
        let t = if k == SCAN { b } else { a + h * k as f64 };
        let cur = kernel.coordinate(t)? - level;
        if cur == 0.0 {
            out.push(t);
        } else if prev != 0.0 && (prev > 0.0) != (cur > 0.0) {
            let (mut lo, mut hi, flo) = (prev_t, t, prev);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = kernel.coordinate(mid)? - level;
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev = cur;
        prev_t = t;
    }
    Ok(out)
}

/// `K_i^u(t) = ∫_0^{t_i} u(t_i - τ) K(τ, t) dτ`.
pub fn basis_function<K: Kernel + ?Sized>(
    kernel: &K,
    input: &InputSignal,
    t_i: f64,
    t: f64,
) -> Result<f64> {
    if input.is_impulse() {
        return kernel.eval(t_i, t);
    }
    if !(t >= 0.0) {
        return Err(Error::Domain {
            what: "basis functions are defined for t >= 0",
            value: t,
        });
    }
    let level = kernel.coordinate(t)?;
    let mut breaks = level_crossings(kernel, level, 0.0, t_i)?;
    breaks.push(t);
    let mut failure = None;
    let r = integrate(
        |tau| {
            let u = input.value(t_i - tau).unwrap_or(0.0);
            match kernel.coordinate(tau) {
                Ok(c) => u * c.min(level),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        t_i,
        &breaks,
        &FUNCTIONAL_QUAD,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(r.value),
    }
}

/// Output Gram `O`. Exact for the impulse; nested adaptive quadrature
/// otherwise, with the offending pair reported on failure.
pub fn output_gram<K: Kernel + ?Sized>(
    kernel: &K,
    input: &InputSignal,
    instants: &[f64],
) -> Result<DMatrix<f64>> {
    if input.is_impulse() {
        return kernel.gram(instants);
    }
    let n = instants.len();
    let mut o = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (ti, tj) = (instants[i], instants[j]);
            let mut failure = None;
            let outer = integrate(
                |tau2| {
                    let u = input.value(tj - tau2).unwrap_or(0.0);
                    match basis_function(kernel, input, ti, tau2) {
                        Ok(k) => u * k,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                tj,
                &[ti],
                &FUNCTIONAL_QUAD,
            );
            let value = match (outer, failure) {
                (Ok(r), None) => r.value,
                (Err(e), _) | (_, Some(e)) => {
                    return Err(Error::Quadrature {
                        estimate: f64::NAN,
                        error: f64::NAN,
                        context: format!("output Gram entry ({i}, {j}): {e}"),
                    })
                }
            };
            o[(i, j)] = value;
            o[(j, i)] = value;
        }
    }
    Ok(o)
}

/// `c = (O + γI)⁻¹ y` by Cholesky, escalating `γ` tenfold (with a warning)
/// only if the factorization fails.
pub fn solve_coefficients(o: &DMatrix<f64>, y: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if !(gamma > 0.0) {
        return Err(Error::Domain {
            what: "regularization gamma must be positive",
            value: gamma,
        });
    }
    if o.nrows() != y.len() {
        return Err(Error::Dataset("Gram and output sizes differ".into()));
    }
    let (chol, _) = cholesky_with_jitter(o, gamma, 3)?;
    Ok(chol
        .solve(&DVector::from_column_slice(y))
        .as_slice()
        .to_vec())
}

/// `‖y - O c‖² + γ cᵀ O c`, the regularized objective restricted to
/// `g = Σ c_i K_i^u`.
pub fn regularized_objective(o: &DMatrix<f64>, y: &[f64], c: &[f64], gamma: f64) -> f64 {
    let c = DVector::from_column_slice(c);
    let oc = o * &c;
    let fit = (DVector::from_column_slice(y) - &oc).norm_squared();
    fit + gamma * c.dot(&oc)
}

/// A fitted representer estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateModel {
    instants: Vec<f64>,
    coefficients: Vec<f64>,
    kernel: AnyKernel,
    gamma: f64,
    input: InputSignal,
}

impl EstimateModel {
    /// Fits with `γ = σ²` unless overridden.
    pub fn fit(
        kernel: AnyKernel,
        input: InputSignal,
        data: &Dataset,
        gamma: Option<f64>,
    ) -> Result<Self> {
        let gamma = gamma.unwrap_or(data.noise_variance);
        let o = output_gram(&kernel, &input, data.instants())?;
        let coefficients = solve_coefficients(&o, data.outputs(), gamma)?;
        Ok(Self {
            instants: data.instants().to_vec(),
            coefficients,
            kernel,
            gamma,
            input,
        })
    }

    pub fn from_parts(
        kernel: AnyKernel,
        input: InputSignal,
        instants: Vec<f64>,
        coefficients: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if instants.len() != coefficients.len() {
            return Err(Error::Dataset("one coefficient per instant".into()));
        }
        Ok(Self {
            instants,
            coefficients,
            kernel,
            gamma,
            input,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn kernel(&self) -> &AnyKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn input(&self) -> &InputSignal {
        &self.input
    }

    /// `ĝ(t)`.
    pub fn predict(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain {
                what: "predictions are defined for t >= 0",
                value: t,
            });
        }
        self.instants
            .iter()
            .zip(&self.coefficients)
            .try_fold(0.0, |acc, (&ti, &ci)| {
                Ok(acc + ci * basis_function(&self.kernel, &self.input, ti, t)?)
            })
    }

    /// `U_i = ∫_0^{t_i} u(t_i - τ) dτ` (1 for the impulse).
    pub fn input_masses(&self) -> Result<Vec<f64>> {
        self.instants
            .iter()
            .map(|&t| self.input.integral_to(t))
            .collect()
    }

    /// `Uᵀ c`, the limit of `ĝ(t) / |g0(t)|` as `t → ∞`.
    pub fn tail_limit(&self) -> Result<f64> {
        Ok(self
            .input_masses()?
            .iter()
            .zip(&self.coefficients)
            .map(|(u, c)| u * c)
            .sum())
    }

    /// `ĝ(t) / c(t)`, with `c` the kernel coordinate (`|g0(t)|` for `K_{G0}`).
    pub fn tail_ratio(&self, t: f64) -> Result<f64> {
        let c = self.kernel.coordinate(t)?;
        if !(c > 1e-250) {
            return Err(Error::Domain {
                what: "kernel coordinate underflows at this time",
                value: t,
            });
        }
        Ok(self.predict(t)? / c)
    }
}
