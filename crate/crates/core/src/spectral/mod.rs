//! Mercer expansion of the multiple-pole kernel
//! `K(τ1, τ2) = |κ| min(τ1^n e^{-ατ1}, τ2^n e^{-ατ2})`.
//!
//! The coordinate `x(τ) = τ^n e^{-ατ}` rises to its peak `X = (n/(αe))^n` at
//! `τ = n/α` and then decays. Under the measure `m` that assigns half of each
//! coordinate increment to either branch, integrating over `τ ∈ [0, ∞)` is
//! equivalent to integrating `x` over `[0, X]` with Lebesgue measure, so the
//! eigenpairs follow from those of `min(x, x')` on `[0, X]`:
//!
//! `λ_{n,i} = |κ| X² λ_i`, `φ_{n,i}(τ) = X^{-1/2} φ_i(x(τ) / X)` with
//! `λ_i = 1/((i - ½)² π²)` and `φ_i(x) = √2 sin((i - ½) π x)`.

mod lambert;

pub use lambert::{lambert_w, LambertBranch, BRANCH_POINT};

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::factorial;
use crate::quadrature::{integrate, QuadConfig};

/// Eigenvalue `1/((i - ½)² π²)` of `min(x, x')` on `[0, 1]`.
pub fn spline_eigenvalue(i: usize) -> f64 {
    assert!(i >= 1, "eigen-indices start at 1");
    let k = (i as f64 - 0.5) * PI;
    1.0 / (k * k)
}

/// Eigenfunction `√2 sin((i - ½) π x)` of `min(x, x')` on `[0, 1]`.
pub fn spline_eigenfunction(i: usize, x: f64) -> f64 {
    assert!(i >= 1, "eigen-indices start at 1");
    SQRT_2 * ((i as f64 - 0.5) * PI * x).sin()
}

/// A kernel with known eigenpairs with respect to a measure `dμ = w(τ) dτ`
/// supported on `[lower, upper]`.
pub trait MercerBasis {
    fn eigenvalue(&self, i: usize) -> f64;
    fn eigenfunction(&self, i: usize, tau: f64) -> f64;
    fn kernel(&self, tau1: f64, tau2: f64) -> f64;
    fn measure_density(&self, tau: f64) -> f64;
    /// Integration range; infinite supports are truncated where the
    /// integrand is negligible.
    fn support(&self) -> (f64, f64);
    /// Points where integrands against `K(tau1, ·)` are not smooth.
    fn breaks(&self, tau1: Option<f64>) -> Vec<f64>;
}

/// `min(x, x')` on `[0, T]` with Lebesgue measure; eigenfunctions are
/// normalized as `T^{-1/2} φ_i(x / T)` with eigenvalues `T² λ_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    pub length: f64,
}

impl MercerBasis for SplineBasis {
    fn eigenvalue(&self, i: usize) -> f64 {
        self.length * self.length * spline_eigenvalue(i)
    }

    fn eigenfunction(&self, i: usize, tau: f64) -> f64 {
        spline_eigenfunction(i, tau / self.length) / self.length.sqrt()
    }

    fn kernel(&self, tau1: f64, tau2: f64) -> f64 {
        tau1.min(tau2)
    }

    fn measure_density(&self, _tau: f64) -> f64 {
        1.0
    }

    fn support(&self) -> (f64, f64) {
        (0.0, self.length)
    }

    fn breaks(&self, tau1: Option<f64>) -> Vec<f64> {
        tau1.into_iter().collect()
    }
}

/// The measure `m(τ)` under which the multiple-pole eigenfunctions are
/// orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureM {
    pub n: usize,
    pub alpha: f64,
}

impl MeasureM {
    fn x(&self, tau: f64) -> f64 {
        tau.powi(self.n as i32) * (-self.alpha * tau).exp()
    }

    pub fn peak_time(&self) -> f64 {
        self.n as f64 / self.alpha
    }

    /// `(n/α)^n e^{-n}`.
    pub fn total_mass(&self) -> f64 {
        (self.n as f64 / (self.alpha * std::f64::consts::E)).powi(self.n as i32)
    }

    /// `½ x(τ)` before the peak, `(n/α)^n e^{-n} - ½ x(τ)` after it.
    pub fn m(&self, tau: f64) -> f64 {
        if tau <= self.peak_time() {
            0.5 * self.x(tau)
        } else {
            self.total_mass() - 0.5 * self.x(tau)
        }
    }

    /// `dm/dτ = ½ τ^{n-1} e^{-ατ} |n - ατ|`.
    pub fn density(&self, tau: f64) -> f64 {
        0.5 * tau.powi(self.n as i32 - 1)
            * (-self.alpha * tau).exp()
            * (self.n as f64 - self.alpha * tau).abs()
    }
}

/// Eigen-decomposition of `|κ| min(τ1^n e^{-ατ1}, τ2^n e^{-ατ2})` under `dm`.
///
/// This kernel is `K_{G0}` for `G0(s) = κ n! / (s + α)^{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiPoleSpectralBasis {
    pub n: usize,
    pub alpha: f64,
    pub gain: f64,
}

impl MultiPoleSpectralBasis {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        Self::with_gain(n, alpha, 1.0)
    }

    pub fn with_gain(n: usize, alpha: f64, gain: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain {
                what: "multiple-pole basis needs n >= 1",
                value: 0.0,
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain {
                what: "decay rate must be positive",
                value: alpha,
            });
        }
        if !(gain != 0.0 && gain.is_finite()) {
            return Err(Error::Domain {
                what: "gain must be finite and nonzero",
                value: gain,
            });
        }
        Ok(Self { n, alpha, gain })
    }

    pub fn measure(&self) -> MeasureM {
        MeasureM {
            n: self.n,
            alpha: self.alpha,
        }
    }

    /// Unscaled coordinate `τ^n e^{-ατ}`.
    pub fn coordinate(&self, tau: f64) -> f64 {
        tau.powi(self.n as i32) * (-self.alpha * tau).exp()
    }

    pub fn peak_time(&self) -> f64 {
        self.n as f64 / self.alpha
    }

    /// `X = (n/(αe))^n`.
    pub fn peak_value(&self) -> f64 {
        self.measure().total_mass()
    }

    /// Both preimages of `x(τ1)`, i.e. where `K(τ1, ·)` switches branch.
    fn switch_points(&self, tau1: f64) -> Vec<f64> {
        let y = self.coordinate(tau1);
        [LambertBranch::Principal, LambertBranch::Minor]
            .into_iter()
            .filter_map(|b| coordinate_inverse(b, self.n, self.alpha, y).ok())
            .collect()
    }
}

impl MercerBasis for MultiPoleSpectralBasis {
    fn eigenvalue(&self, i: usize) -> f64 {
        let x = self.peak_value();
        self.gain.abs() * x * x * spline_eigenvalue(i)
    }

    fn eigenfunction(&self, i: usize, tau: f64) -> f64 {
        let x = self.peak_value();
        spline_eigenfunction(i, self.coordinate(tau) / x) / x.sqrt()
    }

    fn kernel(&self, tau1: f64, tau2: f64) -> f64 {
        self.gain.abs() * self.coordinate(tau1).min(self.coordinate(tau2))
    }

    fn measure_density(&self, tau: f64) -> f64 {
        self.measure().density(tau)
    }

    fn support(&self) -> (f64, f64) {
        // τ^n e^{-ατ} <= n!(2/α)^n e^{-ατ/2}; stop once that is below 1e-12·X.
        let amplitude = factorial(self.n) * (2.0 / self.alpha).powi(self.n as i32);
        let level = 1e-12 * self.peak_value();
        let end = (amplitude / level).ln() / (0.5 * self.alpha);
        (0.0, end.max(2.0 * self.peak_time()))
    }

    fn breaks(&self, tau1: Option<f64>) -> Vec<f64> {
        let mut b = vec![self.peak_time()];
        if let Some(t) = tau1 {
            b.extend(self.switch_points(t));
        }
        b
    }
}

/// Inverse of `τ ↦ τ^n e^{-ατ}` on one monotone branch:
/// `Z(y) = -(n/α) W(-(α/n) y^{1/n})`. The principal branch lands in
/// `[0, n/α]`, the minor branch in `[n/α, ∞)`.
pub fn coordinate_inverse(branch: LambertBranch, n: usize, alpha: f64, y: f64) -> Result<f64> {
    if n == 0 || !(alpha > 0.0) {
        return Err(Error::Domain {
            what: "coordinate inverse needs n >= 1 and alpha > 0",
            value: alpha,
        });
    }
    let nf = n as f64;
    let peak = (nf / (alpha * std::f64::consts::E)).powi(n as i32);
    if !(0.0..=peak * (1.0 + 1e-14)).contains(&y) {
        return Err(Error::Domain {
            what: "coordinate inverse needs y in [0, (n/(αe))^n]",
            value: y,
        });
    }
    let z = (-(alpha / nf) * y.powf(1.0 / nf)).max(BRANCH_POINT);
    // Within rounding of the branch point both branches meet at the peak.
    let w = if z - BRANCH_POINT <= 8.0 * f64::EPSILON * -BRANCH_POINT {
        -1.0
    } else {
        lambert_w(branch, z)?
    };
    Ok((-(nf / alpha) * w).abs())
}

/// `max_{τ ∈ probes} |∫ K(τ, τ') φ_i(τ') dμ(τ') - λ_i φ_i(τ)|`.
pub fn eigen_relation_residual<B: MercerBasis>(
    basis: &B,
    i: usize,
    probes: &[f64],
    config: &QuadConfig,
) -> Result<f64> {
    let (lo, hi) = basis.support();
    let lambda = basis.eigenvalue(i);
    let mut worst: f64 = 0.0;
    for &tau in probes {
        let integral = integrate(
            |s| basis.kernel(tau, s) * basis.eigenfunction(i, s) * basis.measure_density(s),
            lo,
            hi,
            &basis.breaks(Some(tau)),
            config,
        )?;
        worst = worst.max((integral.value - lambda * basis.eigenfunction(i, tau)).abs());
    }
    Ok(worst)
}

/// `|∫ φ_i φ_j dμ - δ_ij|`.
pub fn orthonormality_defect<B: MercerBasis>(
    basis: &B,
    i: usize,
    j: usize,
    config: &QuadConfig,
) -> Result<f64> {
    let (lo, hi) = basis.support();
    let integral = integrate(
        |s| basis.eigenfunction(i, s) * basis.eigenfunction(j, s) * basis.measure_density(s),
        lo,
        hi,
        &basis.breaks(None),
        config,
    )?;
    let target = if i == j { 1.0 } else { 0.0 };
    Ok((integral.value - target).abs())
}

/// `(K_M)_{ij} = Σ_{ℓ=1}^{M} λ_ℓ φ_ℓ(t_i) φ_ℓ(t_j)`.
pub fn truncated_gram<B: MercerBasis>(basis: &B, grid: &[f64], terms: usize) -> DMatrix<f64> {
    let n = grid.len();
    let mut k = DMatrix::zeros(n, n);
    for l in 1..=terms {
        add_term(basis, grid, l, &mut k);
    }
    k
}

fn add_term<B: MercerBasis>(basis: &B, grid: &[f64], l: usize, k: &mut DMatrix<f64>) {
    let lambda = basis.eigenvalue(l);
    let phi: Vec<f64> = grid.iter().map(|&t| basis.eigenfunction(l, t)).collect();
    for (i, &pi) in phi.iter().enumerate() {
        for (j, &pj) in phi.iter().enumerate() {
            k[(i, j)] += lambda * pi * pj;
        }
    }
}

/// Exact Gram matrix `{K(t_i, t_j)}` of the basis' kernel.
pub fn exact_gram<B: MercerBasis>(basis: &B, grid: &[f64]) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(n, n, |i, j| basis.kernel(grid[i], grid[j]))
}

/// `(M, ‖K - K_M‖_FRO)` for each requested truncation level (ascending).
pub fn truncation_curve<B: MercerBasis>(
    basis: &B,
    grid: &[f64],
    levels: &[usize],
) -> Vec<(usize, f64)> {
    let exact = exact_gram(basis, grid);
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut partial = DMatrix::zeros(grid.len(), grid.len());
    let mut done = 0;
    let mut out = Vec::with_capacity(sorted.len());
    for m in sorted {
        while done < m {
            done += 1;
            add_term(basis, grid, done, &mut partial);
        }
        out.push((m, (&exact - &partial).norm()));
    }
    out
}

/// `‖f‖² = Σ f_i² / λ_i` for `f = Σ f_i φ_i`.
pub fn rkhs_norm_squared<B: MercerBasis>(basis: &B, coefficients: &[f64]) -> f64 {
    coefficients
        .iter()
        .enumerate()
        .map(|(k, f)| f * f / basis.eigenvalue(k + 1))
        .sum()
}

pub fn truncation_csv(curve: &[(usize, f64)]) -> String {
    let mut s = String::from("M,fro_error\n");
    for (m, e) in curve {
        let _ = writeln!(s, "{m},{e}");
    }
    s
}

/// `tau,phi_1,...,phi_k` on the given abscissae.
pub fn eigenfunction_csv<B: MercerBasis>(basis: &B, taus: &[f64], count: usize) -> String {
    let mut s = String::from("tau");
    for i in 1..=count {
        let _ = write!(s, ",phi_{i}");
    }
    s.push('\n');
    for &t in taus {
        let _ = write!(s, "{t}");
        for i in 1..=count {
            let _ = write!(s, ",{}", basis.eigenfunction(i, t));
        }
        s.push('\n');
    }
    s
}

/// `tau,m,dm_dtau`.
pub fn measure_csv(measure: &MeasureM, taus: &[f64]) -> String {
    let mut s = String::from("tau,m,dm_dtau\n");
    for &t in taus {
        let _ = writeln!(s, "{t},{},{}", measure.m(t), measure.density(t));
    }
    s
}
