//! Hyperparameter tuning by Empirical Bayes and by the oracle sampled-instant
//! MSE, plus the Wilcoxon rank-sum test used to compare squared errors.
//!
//! Both tuners run Nelder–Mead in log-parameter space, so every objective
//! evaluation sees strictly positive parameters. Restarts begin at Halton
//! points of a fixed box (see [`KernelFamily::start_box`]).

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{output_gram, Dataset, InputSignal};
use crate::kernels::{AnyKernel, GramFactorization, Kernel, TcKernel, DEFAULT_GRID_EPS};
use crate::linalg::cholesky_log_det;
use crate::lti::RationalTransferFunction;

/// Kernel family whose hyperparameters are tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `K_{G0}` with `G0(s) = θ3(θ1 - θ2)/((s+θ1)(s+θ2))`, searched with
    /// `θ1 = θ2 + e^{η1}`, `θ2 = e^{η2}`, `θ3 = e^{η3}`.
    ProposedTwoPole,
    /// `β min(e^{-αt1}, e^{-αt2})`, `θ = (β, α)`.
    Tc,
    /// Another family with every parameter pinned.
    Fixed {
        family: Box<KernelFamily>,
        theta: Vec<f64>,
    },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ProposedTwoPole => "proposed",
            Self::Tc => "tc",
            Self::Fixed { .. } => "fixed",
        }
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        match self {
            Self::ProposedTwoPole => 3,
            Self::Tc => 2,
            Self::Fixed { .. } => 0,
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        match self {
            Self::ProposedTwoPole => vec!["theta1", "theta2", "theta3"],
            Self::Tc => vec!["beta", "alpha"],
            Self::Fixed { family, .. } => family.param_names(),
        }
    }

    /// Kernel for raw `θ`. Two-pole `θ` may have any pole order and any
    /// sign of `θ3`; coincident or unstable poles are errors.
    pub fn kernel(&self, theta: &[f64]) -> Result<AnyKernel> {
        match self {
            Self::ProposedTwoPole => {
                let [t1, t2, t3] = expect_len::<3>(theta)?;
                AnyKernel::coordinate_change(RationalTransferFunction::two_pole(t1, t2, t3)?)
            }
            Self::Tc => {
                let [beta, alpha] = expect_len::<2>(theta)?;
                Ok(AnyKernel::Tc(TcKernel::new(beta, alpha)?))
            }
            Self::Fixed { family, theta } => family.kernel(theta),
        }
    }

    /// Positive `θ` from unconstrained `η`.
    pub fn theta_from_eta(&self, eta: &[f64]) -> Vec<f64> {
        match self {
            Self::ProposedTwoPole => {
                let t2 = eta[1].exp();
                vec![t2 + eta[0].exp(), t2, eta[2].exp()]
            }
            Self::Tc => vec![eta[0].exp(), eta[1].exp()],
            Self::Fixed { theta, .. } => theta.clone(),
        }
    }

    /// Inverse of [`theta_from_eta`](Self::theta_from_eta); `None` outside
    /// the searched region (e.g. `θ1 ≤ θ2`).
    pub fn eta_from_theta(&self, theta: &[f64]) -> Option<Vec<f64>> {
        match self {
            Self::ProposedTwoPole => {
                let gap = theta[0] - theta[1];
                (gap > 0.0 && theta[1] > 0.0 && theta[2] > 0.0)
                    .then(|| vec![gap.ln(), theta[1].ln(), theta[2].ln()])
            }
            Self::Tc => {
                (theta[0] > 0.0 && theta[1] > 0.0).then(|| vec![theta[0].ln(), theta[1].ln()])
            }
            Self::Fixed { .. } => Some(vec![]),
        }
    }

    /// Restart box in `η`, per coordinate `(low, high)`. Rates and pole gaps
    /// span `[0.1, 10]`; amplitudes span `[0.1, 10] · scale`, where `scale`
    /// is the peak magnitude of the data being fitted.
    pub fn start_box(&self, scale: f64) -> Vec<(f64, f64)> {
        let rate = (0.1f64.ln(), 10f64.ln());
        let s = scale.abs().max(f64::MIN_POSITIVE).ln();
        let amp = (rate.0 + s, rate.1 + s);
        match self {
            Self::ProposedTwoPole => vec![rate, rate, amp],
            Self::Tc => vec![amp, rate],
            Self::Fixed { .. } => vec![],
        }
    }

    pub fn hyper_params(&self, theta: Vec<f64>) -> HyperParams {
        HyperParams {
            names: self.param_names().iter().map(|s| s.to_string()).collect(),
            values: theta,
        }
    }
}

fn expect_len<const N: usize>(theta: &[f64]) -> Result<[f64; N]> {
    theta
        .try_into()
        .map_err(|_| Error::Config(format!("expected {N} hyperparameters, got {}", theta.len())))
}

/// Named hyperparameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl HyperParams {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMethod {
    EmpiricalBayes,
    OracleMse,
}

impl TuningMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::EmpiricalBayes => "eb",
            Self::OracleMse => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Initial simplex edge in log space.
    pub spread: f64,
    pub max_iter: usize,
    /// Stop when the simplex objective spread is below
    /// `tol · max(1, |f_best|)`.
    pub tol: f64,
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            spread: 0.5,
            max_iter: 500,
            tol: 1e-8,
            parallel: true,
        }
    }
}

/// Best-so-far state after one optimizer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub theta: HyperParams,
    pub objective: f64,
    pub trace: Vec<TraceRow>,
    pub method: TuningMethod,
}

impl TuningResult {
    /// `restart,iteration,<θ names>,objective`.
    pub fn trace_csv(&self) -> String {
        let mut s = format!(
            "restart,iteration,{},objective\n",
            self.theta.names.join(",")
        );
        for row in &self.trace {
            s.push_str(&format!("{},{}", row.restart, row.iteration));
            for v in &row.theta {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", row.objective));
        }
        s
    }
}

fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// `log det(O + σ²I) + yᵀ(O + σ²I)⁻¹y`; `+∞` for invalid `θ`.
///
/// Impulsive input with a non-degenerate grid uses the tridiagonal structure
/// of `K⁻¹`; everything else goes through a dense Cholesky factor.
pub fn neg_log_marginal_likelihood(
    theta: &[f64],
    data: &Dataset,
    family: &KernelFamily,
    input: &InputSignal,
) -> f64 {
    let Ok(kernel) = family.kernel(theta) else {
        return f64::INFINITY;
    };
    if input.is_impulse() {
        if let Ok(c) = kernel.coordinates(data.instants()) {
            if let Ok(fact) = GramFactorization::from_coordinates(&c, DEFAULT_GRID_EPS) {
                if let Ok(shifted) = fact.shifted(data.noise_variance()) {
                    let y = data.outputs();
                    let quad: f64 = y.iter().zip(shifted.solve(y)).map(|(a, b)| a * b).sum();
                    return finite_or_inf(shifted.log_det() + quad);
                }
            }
        }
    }
    neg_log_marginal_likelihood_dense(&kernel, data, input)
}

/// Dense-Cholesky evaluation of the same objective for a given kernel.
pub fn neg_log_marginal_likelihood_dense<K: Kernel + ?Sized>(
    kernel: &K,
    data: &Dataset,
    input: &InputSignal,
) -> f64 {
    let Ok(o) = output_gram(kernel, input, data.instants()) else {
        return f64::INFINITY;
    };
    let n = o.nrows();
    let Some(chol) = Cholesky::new(o + DMatrix::identity(n, n) * data.noise_variance()) else {
        return f64::INFINITY;
    };
    let y = DVector::from_column_slice(data.outputs());
    finite_or_inf(cholesky_log_det(&chol) + y.dot(&chol.solve(&y)))
}

/// `E‖ĝ - g*‖²` on the sampled instants under impulsive input:
/// `σ⁴ g*ᵀM⁻²g* + Nσ² + σ⁶ Tr(M⁻²) - 2σ⁴ Tr(M⁻¹)` with `M = K + σ²I`.
pub fn oracle_mse_from_gram(k: &DMatrix<f64>, g_true: &[f64], noise_variance: f64) -> f64 {
    let n = k.nrows();
    let s2 = noise_variance;
    let m = k + DMatrix::identity(n, n) * s2;
    let Some(chol) = Cholesky::new(m) else {
        return f64::INFINITY;
    };
    let minv = chol.inverse();
    let a = &minv * DVector::from_column_slice(g_true);
    let s4 = s2 * s2;
    let value = s4 * a.norm_squared() + n as f64 * s2 + s4 * s2 * minv.norm_squared()
        - 2.0 * s4 * minv.trace();
    finite_or_inf(value)
}

/// [`oracle_mse_from_gram`] for the family's kernel at `θ`.
pub fn oracle_mse(
    theta: &[f64],
    instants: &[f64],
    g_true: &[f64],
    family: &KernelFamily,
    noise_variance: f64,
) -> f64 {
    match family.kernel(theta).and_then(|k| k.gram(instants)) {
        Ok(k) => oracle_mse_from_gram(&k, g_true, noise_variance),
        Err(_) => f64::INFINITY,
    }
}

/// Halton point `index` (1-based) in `dim` dimensions.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
    assert!(
        dim <= PRIMES.len(),
        "Halton sequence limited to {} dims",
        PRIMES.len()
    );
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

struct Restart {
    best_eta: Vec<f64>,
    best: f64,
    trace: Vec<(usize, Vec<f64>, f64)>,
}

/// Nelder–Mead with standard coefficients (1, 2, 0.5, 0.5). Records the
/// best vertex after every iteration.
fn nelder_mead(f: &(dyn Fn(&[f64]) -> f64 + Sync), x0: &[f64], cfg: &OptimizerConfig) -> Restart {
    let d = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += cfg.spread;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| finite_or_inf(f(v))).collect();
    let mut trace = Vec::new();

    let centroid = |simplex: &[Vec<f64>]| -> Vec<f64> {
        let mut c = vec![0.0; d];
        for v in &simplex[..d] {
            for (ci, vi) in c.iter_mut().zip(v) {
                *ci += vi / d as f64;
            }
        }
        c
    };
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };

    for iteration in 0..cfg.max_iter {
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[d]);
        if best.is_finite() && worst - best <= cfg.tol * best.abs().max(1.0) {
            break;
        }

        let c = centroid(&simplex);
        let xr = along(&c, &simplex[d], -1.0);
        let fr = finite_or_inf(f(&xr));
        if fr < values[0] {
            let xe = along(&c, &simplex[d], -2.0);
            let fe = finite_or_inf(f(&xe));
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
        } else {
            let (xc, fc) = if fr < values[d] {
                let xc = along(&c, &xr, 0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            } else {
                let xc = along(&c, &simplex[d], 0.5);
                let fc = finite_or_inf(f(&xc));
                (xc, fc)
            };
            if fc < values[d].min(fr) {
                simplex[d] = xc;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    simplex[i] = along(&simplex[0], &simplex[i], 0.5);
                    values[i] = finite_or_inf(f(&simplex[i]));
                }
            }
        }
        let b = (0..=d)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .unwrap();
        trace.push((iteration, simplex[b].clone(), values[b]));
    }
    let b = (0..=d)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap();
    Restart {
        best_eta: simplex[b].clone(),
        best: values[b],
        trace,
    }
}

/// Multi-start minimization of `objective(θ)` over the family.
fn tune(
    family: &KernelFamily,
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    scale: f64,
    cfg: &OptimizerConfig,
    method: TuningMethod,
) -> Result<TuningResult> {
    if let KernelFamily::Fixed { theta, .. } = family {
        let value = objective(theta);
        let trace = vec![TraceRow {
            restart: 0,
            iteration: 0,
            theta: theta.clone(),
            objective: value,
        }];
        if !value.is_finite() {
            return Err(Error::TuningFailed {
                restarts: 1,
                traces: trace,
            });
        }
        return Ok(TuningResult {
            theta: family.hyper_params(theta.clone()),
            objective: value,
            trace,
            method,
        });
    }
    let dim = family.dim();
    let bounds = family.start_box(scale);
    let starts: Vec<Vec<f64>> = (1..=cfg.restarts.max(1))
        .map(|k| {
            halton(k, dim)
                .iter()
                .zip(&bounds)
                .map(|(u, (lo, hi))| lo + u * (hi - lo))
                .collect()
        })
        .collect();
    let eta_objective = |eta: &[f64]| objective(&family.theta_from_eta(eta));
    let run = |x0: &Vec<f64>| nelder_mead(&eta_objective, x0, cfg);
    let runs: Vec<Restart> = if cfg.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };

    let mut trace = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for (iteration, eta, value) in &run.trace {
            trace.push(TraceRow {
                restart: r,
                iteration: *iteration,
                theta: family.theta_from_eta(eta),
                objective: *value,
            });
        }
    }
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.best.is_finite())
        .min_by(|a, b| a.1.best.total_cmp(&b.1.best));
    let Some((r, best)) = best else {
        return Err(Error::TuningFailed {
            restarts: runs.len(),
            traces: trace,
        });
    };
    let theta = family.theta_from_eta(&best.best_eta);
    if run_lacks_final(&trace, r, best.best) {
        trace.push(TraceRow {
            restart: r,
            iteration: 0,
            theta: theta.clone(),
            objective: best.best,
        });
    }
    Ok(TuningResult {
        theta: family.hyper_params(theta),
        objective: best.best,
        trace,
        method,
    })
}

fn run_lacks_final(trace: &[TraceRow], restart: usize, best: f64) -> bool {
    !trace
        .iter()
        .any(|row| row.restart == restart && row.objective == best)
}

/// Empirical Bayes: minimizes [`neg_log_marginal_likelihood`].
pub fn empirical_bayes_tune(
    data: &Dataset,
    family: &KernelFamily,
    input: &InputSignal,
    cfg: &OptimizerConfig,
) -> Result<TuningResult> {
    let scale = data.outputs().iter().fold(0.0f64, |m, y| m.max(y.abs()));
    tune(
        family,
        &|theta| neg_log_marginal_likelihood(theta, data, family, input),
        scale,
        cfg,
        TuningMethod::EmpiricalBayes,
    )
}

/// Oracle tuning: minimizes [`oracle_mse`] against the true response.
pub fn oracle_tune(
    instants: &[f64],
    g_true: &[f64],
    family: &KernelFamily,
    noise_variance: f64,
    cfg: &OptimizerConfig,
) -> Result<TuningResult> {
    if instants.len() != g_true.len() {
        return Err(Error::Dataset("one true value per instant".into()));
    }
    let scale = g_true.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    tune(
        family,
        &|theta| oracle_mse(theta, instants, g_true, family, noise_variance),
        scale,
        cfg,
        TuningMethod::OracleMse,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// Values of `a` tend to be smaller than those of `b`.
    ALess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSumMethod {
    /// Exact when `n_a + n_b ≤ EXACT_LIMIT`, normal otherwise.
    Auto,
    Exact,
    Normal,
}

/// Largest combined sample size for which `Auto` uses the exact law.
pub const EXACT_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Sum of the midranks of `a`.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Midranks of the pooled sample.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// p-value of the rank-sum test with automatic method choice.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    Ok(rank_sum_test(a, b, alternative, RankSumMethod::Auto)?.p_value)
}

pub fn rank_sum_test(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
    method: RankSumMethod,
) -> Result<RankSumTest> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dataset("rank-sum samples must be nonempty".into()));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::Dataset("rank-sum samples contain NaN".into()));
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let na = a.len();
    let statistic: f64 = ranks[..na].iter().sum();
    let exact = match method {
        RankSumMethod::Auto => pooled.len() <= EXACT_LIMIT,
        RankSumMethod::Exact => true,
        RankSumMethod::Normal => false,
    };
    let p_value = if exact {
        exact_p(&ranks, na, alternative)
    } else {
        normal_p(&ranks, na, statistic, alternative)
    };
    Ok(RankSumTest {
        statistic,
        p_value,
        exact,
    })
}

/// Permutation law of the rank sum given the observed (tied) ranks, by
/// counting subsets on doubled ranks, which are integers.
fn exact_p(ranks: &[f64], na: usize, alternative: Alternative) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // counts[k][s]: number of k-subsets with doubled sum s.
    let mut counts = vec![vec![0.0f64; total + 1]; na + 1];
    counts[0][0] = 1.0;
    for (seen, &r) in doubled.iter().enumerate() {
        for k in (1..=na.min(seen + 1)).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let (src, dst) = (&lower[k - 1], &mut upper[0]);
            for s in (r..=total).rev() {
                dst[s] += src[s - r];
            }
        }
    }
    let dist = &counts[na];
    let all: f64 = dist.iter().sum();
    let observed: usize = doubled[..na].iter().sum();
    let mean2 = na * (ranks.len() + 1); // doubled mean rank sum
    let p = match alternative {
        Alternative::ALess => dist[..=observed].iter().sum::<f64>(),
        Alternative::TwoSided => {
            let dev = observed.abs_diff(mean2);
            dist.iter()
                .enumerate()
                .filter(|(s, _)| s.abs_diff(mean2) >= dev)
                .map(|(_, c)| c)
                .sum::<f64>()
        }
    };
    (p / all).min(1.0)
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
fn normal_p(ranks: &[f64], na: usize, statistic: f64, alternative: Alternative) -> f64 {
    let n = ranks.len() as f64;
    let (naf, nbf) = (na as f64, n - na as f64);
    let mean = naf * (n + 1.0) / 2.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_sum += t * t * t - t;
        i += j;
    }
    let var = naf * nbf / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)).max(1.0));
    if !(var > 0.0) {
        return 1.0;
    }
    let sd = var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    match alternative {
        Alternative::ALess => std_normal.cdf((statistic - mean + 0.5) / sd),
        Alternative::TwoSided => {
            let dev = (statistic - mean).abs() - 0.5;
            if dev <= 0.0 {
                1.0
            } else {
                (2.0 * std_normal.sf(dev / sd)).min(1.0)
            }
        }
    }
}
