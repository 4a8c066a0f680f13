//! Stable, strictly proper rational transfer functions and their impulse
//! responses in polynomial-exponential form.
//!
//! Transfer functions are built from their poles (real decay rates and
//! damped complex pairs) plus either a numerator polynomial or the
//! partial-fraction residues directly. All arithmetic on the impulse response
//! stays real: complex pole pairs are carried as `(α, ω, B, C)` data.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real pole at `s = -alpha` with the given multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealPole {
    pub alpha: f64,
    pub mult: usize,
}

/// Conjugate pole pair at `s = -alpha ± i omega`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexPolePair {
    pub alpha: f64,
    pub omega: f64,
    pub mult: usize,
}

/// Partial-fraction coefficients supplied directly instead of a numerator.
///
/// `real[i][j]` multiplies `t^j e^{-α_i t}`; `complex[i][j] = [B, C]` multiplies
/// `t^j e^{-α_i t} (B sin ω_i t + C cos ω_i t)`. Inner lengths must equal the
/// pole multiplicities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Residues {
    #[serde(default)]
    pub real: Vec<Vec<f64>>,
    #[serde(default)]
    pub complex: Vec<Vec<[f64; 2]>>,
}

/// On-disk description of a transfer function.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransferFunctionSpec {
    gain: f64,
    #[serde(default)]
    real_poles: Vec<RealPole>,
    #[serde(default)]
    complex_poles: Vec<ComplexPolePair>,
    /// Ascending-power numerator coefficients; `[1]` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    numerator: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residues: Option<Residues>,
}

/// `G0(s) = κ N(s) / Π (s+α_i)^{M_i} Π ((s+α_i)² + ω_i²)^{M_i}`.
///
/// When residues are supplied the numerator is implied by them and `κ` scales
/// every coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferFunctionSpec", into = "TransferFunctionSpec")]
pub struct RationalTransferFunction {
    gain: f64,
    real_poles: Vec<RealPole>,
    complex_poles: Vec<ComplexPolePair>,
    numerator: Vec<f64>,
    residues: Option<Residues>,
}

impl TryFrom<TransferFunctionSpec> for RationalTransferFunction {
    type Error = Error;

    fn try_from(spec: TransferFunctionSpec) -> Result<Self> {
        if spec.numerator.is_some() && spec.residues.is_some() {
            return Err(Error::InvalidTransferFunction(
                "give either a numerator or residues, not both".into(),
            ));
        }
        let tf = Self {
            gain: spec.gain,
            real_poles: spec.real_poles,
            complex_poles: spec.complex_poles,
            numerator: spec.numerator.unwrap_or_else(|| vec![1.0]),
            residues: spec.residues,
        };
        tf.validate()?;
        Ok(tf)
    }
}

impl From<RationalTransferFunction> for TransferFunctionSpec {
    fn from(tf: RationalTransferFunction) -> Self {
        let numerator = if tf.residues.is_some() || tf.numerator == [1.0] {
            None
        } else {
            Some(tf.numerator)
        };
        Self {
            gain: tf.gain,
            real_poles: tf.real_poles,
            complex_poles: tf.complex_poles,
            numerator,
            residues: tf.residues,
        }
    }
}

impl RationalTransferFunction {
    /// `κ / Π(s+α)^M Π((s+α)²+ω²)^M`.
    pub fn new(
        gain: f64,
        real_poles: Vec<RealPole>,
        complex_poles: Vec<ComplexPolePair>,
    ) -> Result<Self> {
        let tf = Self {
            gain,
            real_poles,
            complex_poles,
            numerator: vec![1.0],
            residues: None,
        };
        tf.validate()?;
        Ok(tf)
    }

    /// Replaces the numerator polynomial (ascending powers of `s`).
    pub fn with_numerator(mut self, numerator: Vec<f64>) -> Result<Self> {
        self.numerator = numerator;
        self.residues = None;
        self.validate()?;
        Ok(self)
    }

    /// Builds a transfer function from its partial-fraction coefficients.
    pub fn from_residues(
        gain: f64,
        real_poles: Vec<RealPole>,
        complex_poles: Vec<ComplexPolePair>,
        residues: Residues,
    ) -> Result<Self> {
        let tf = Self {
            gain,
            real_poles,
            complex_poles,
            numerator: vec![1.0],
            residues: Some(residues),
        };
        tf.validate()?;
        Ok(tf)
    }

    /// `β / (s + α)`, whose impulse response `β e^{-αt}` turns `K_{G0}` into the
    /// TC kernel.
    pub fn first_order(beta: f64, alpha: f64) -> Result<Self> {
        Self::new(beta, vec![RealPole { alpha, mult: 1 }], vec![])
    }

    /// `κ / (s + α)^{n+1}`, impulse response `κ t^n e^{-αt} / n!`.
    pub fn multiple_pole(n: usize, alpha: f64, gain: f64) -> Result<Self> {
        Self::new(gain, vec![RealPole { alpha, mult: n + 1 }], vec![])
    }

    /// `θ3 (θ1 - θ2) / ((s+θ1)(s+θ2))`, impulse response
    /// `θ3 (e^{-θ2 t} - e^{-θ1 t})`.
    pub fn two_pole(theta1: f64, theta2: f64, theta3: f64) -> Result<Self> {
        if theta1 == theta2 {
            return Err(Error::InvalidTransferFunction(
                "two-pole parameterization needs distinct poles".into(),
            ));
        }
        Self::from_residues(
            theta3,
            vec![
                RealPole {
                    alpha: theta1,
                    mult: 1,
                },
                RealPole {
                    alpha: theta2,
                    mult: 1,
                },
            ],
            vec![],
            Residues {
                real: vec![vec![-1.0], vec![1.0]],
                complex: vec![],
            },
        )
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn real_poles(&self) -> &[RealPole] {
        &self.real_poles
    }

    pub fn complex_poles(&self) -> &[ComplexPolePair] {
        &self.complex_poles
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn residues(&self) -> Option<&Residues> {
        self.residues.as_ref()
    }

    pub fn denominator_degree(&self) -> usize {
        self.real_poles.iter().map(|p| p.mult).sum::<usize>()
            + 2 * self.complex_poles.iter().map(|p| p.mult).sum::<usize>()
    }

    fn numerator_degree(&self) -> usize {
        self.numerator.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if !self.gain.is_finite() {
            return Err(Error::InvalidTransferFunction("gain must be finite".into()));
        }
        if self.real_poles.is_empty() && self.complex_poles.is_empty() {
            return Err(Error::InvalidTransferFunction("no poles".into()));
        }
        for p in &self.real_poles {
            if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                return Err(Error::Unstable(format!("real pole at s = {}", -p.alpha)));
            }
            if p.mult == 0 {
                return Err(Error::InvalidTransferFunction("zero multiplicity".into()));
            }
        }
        for p in &self.complex_poles {
            if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                return Err(Error::Unstable(format!(
                    "complex pole pair at s = {} ± {}i",
                    -p.alpha, p.omega
                )));
            }
            if !(p.omega > 0.0 && p.omega.is_finite()) {
                return Err(Error::InvalidTransferFunction(
                    "complex pole pair needs omega > 0".into(),
                ));
            }
            if p.mult == 0 {
                return Err(Error::InvalidTransferFunction("zero multiplicity".into()));
            }
        }
        for (i, a) in self.real_poles.iter().enumerate() {
            if self.real_poles[..i].iter().any(|b| b.alpha == a.alpha) {
                return Err(Error::InvalidTransferFunction(format!(
                    "repeated real pole {}; merge into one entry with higher multiplicity",
                    -a.alpha
                )));
            }
        }
        for (i, a) in self.complex_poles.iter().enumerate() {
            if self.complex_poles[..i]
                .iter()
                .any(|b| b.alpha == a.alpha && b.omega == a.omega)
            {
                return Err(Error::InvalidTransferFunction(
                    "repeated complex pole pair".into(),
                ));
            }
        }
        match &self.residues {
            Some(r) => {
                if r.real.len() != self.real_poles.len()
                    || r.complex.len() != self.complex_poles.len()
                {
                    return Err(Error::InvalidTransferFunction(
                        "one residue list per pole is required".into(),
                    ));
                }
                for (coeffs, p) in r.real.iter().zip(&self.real_poles) {
                    if coeffs.len() != p.mult || coeffs.iter().any(|c| !c.is_finite()) {
                        return Err(Error::InvalidTransferFunction(
                            "real residue list must have one finite entry per multiplicity".into(),
                        ));
                    }
                }
                for (coeffs, p) in r.complex.iter().zip(&self.complex_poles) {
                    if coeffs.len() != p.mult || coeffs.iter().flatten().any(|c| !c.is_finite()) {
                        return Err(Error::InvalidTransferFunction(
                            "complex residue list must have one finite [B, C] per multiplicity"
                                .into(),
                        ));
                    }
                }
            }
            None => {
                if self.numerator.is_empty() || self.numerator.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidTransferFunction(
                        "numerator needs finite coefficients".into(),
                    ));
                }
                let (num, den) = (self.numerator_degree(), self.denominator_degree());
                if num >= den {
                    return Err(Error::NotStrictlyProper {
                        numerator: num,
                        denominator: den,
                    });
                }
            }
        }
        Ok(())
    }

    /// Every pole with its multiplicity, complex pairs expanded into both
    /// conjugates.
    fn pole_list(&self) -> Vec<(Complex64, usize)> {
        let mut poles: Vec<(Complex64, usize)> = self
            .real_poles
            .iter()
            .map(|p| (Complex64::new(-p.alpha, 0.0), p.mult))
            .collect();
        for p in &self.complex_poles {
            poles.push((Complex64::new(-p.alpha, p.omega), p.mult));
            poles.push((Complex64::new(-p.alpha, -p.omega), p.mult));
        }
        poles
    }

    /// Evaluates `G0(s)` at a complex frequency.
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        if self.residues.is_some() {
            // Residue form: the numerator is implicit.
            return self
                .partial_fractions()
                .expect("validated at construction")
                .laplace(s);
        }
        let num = self
            .numerator
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c);
        let den = self
            .pole_list()
            .into_iter()
            .fold(Complex64::new(1.0, 0.0), |acc, (p, m)| {
                acc * (s - p).powi(m as i32)
            });
        num * self.gain / den
    }

    /// Splits `g0(t)` into real and oscillatory polynomial-exponential terms.
    ///
    /// For a numerator-defined transfer function the coefficient of
    /// `1/(s-p)^{m-k}` is the `k`-th Taylor coefficient of `N(s)/Q(s)` at `p`,
    /// where `Q` collects the remaining poles.
    pub fn partial_fractions(&self) -> Result<PartialFractionForm> {
        self.validate()?;
        if let Some(r) = &self.residues {
            let mut real_terms = Vec::new();
            for (coeffs, p) in r.real.iter().zip(&self.real_poles) {
                for (power, &a) in coeffs.iter().enumerate() {
                    real_terms.push(RealTerm {
                        coeff: self.gain * a,
                        power,
                        alpha: p.alpha,
                    });
                }
            }
            let mut oscillatory_terms = Vec::new();
            for (coeffs, p) in r.complex.iter().zip(&self.complex_poles) {
                for (power, &[b, c]) in coeffs.iter().enumerate() {
                    oscillatory_terms.push(OscillatoryTerm {
                        sin_coeff: self.gain * b,
                        cos_coeff: self.gain * c,
                        power,
                        alpha: p.alpha,
                        omega: p.omega,
                    });
                }
            }
            return Ok(PartialFractionForm {
                real_terms,
                oscillatory_terms,
            });
        }

        let poles = self.pole_list();
        let numerator: Vec<Complex64> = self
            .numerator
            .iter()
            .map(|&c| Complex64::new(c * self.gain, 0.0))
            .collect();

        let mut real_terms = Vec::new();
        for p in &self.real_poles {
            let pole = Complex64::new(-p.alpha, 0.0);
            let taylor = residue_series(&numerator, &poles, pole, p.mult);
            for power in 0..p.mult {
                let c = taylor[p.mult - 1 - power] / factorial(power);
                real_terms.push(RealTerm {
                    coeff: c.re,
                    power,
                    alpha: p.alpha,
                });
            }
        }
        let mut oscillatory_terms = Vec::new();
        for p in &self.complex_poles {
            let pole = Complex64::new(-p.alpha, p.omega);
            let taylor = residue_series(&numerator, &poles, pole, p.mult);
            for power in 0..p.mult {
                // c/(s-p)^{j+1} + conj  <->  (2/j!) t^j e^{-αt} (Re c cos ωt - Im c sin ωt)
                let c = taylor[p.mult - 1 - power] * (2.0 / factorial(power));
                oscillatory_terms.push(OscillatoryTerm {
                    sin_coeff: -c.im,
                    cos_coeff: c.re,
                    power,
                    alpha: p.alpha,
                    omega: p.omega,
                });
            }
        }
        Ok(PartialFractionForm {
            real_terms,
            oscillatory_terms,
        })
    }
}

/// Taylor coefficients `c_0..c_{m-1}` of `N(s) / Q(s)` around `pole`, where
/// `Q(s) = Π_{q ≠ pole} (s - q)^{m_q}`.
fn residue_series(
    numerator: &[Complex64],
    poles: &[(Complex64, usize)],
    pole: Complex64,
    mult: usize,
) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    // N(pole + h) expanded in h.
    let mut series = vec![zero; mult];
    for (i, &a) in numerator.iter().enumerate() {
        // a (pole + h)^i = a Σ_k C(i,k) pole^{i-k} h^k
        let mut binom = 1.0;
        for (k, slot) in series.iter_mut().enumerate().take(i.min(mult - 1) + 1) {
            if k > 0 {
                binom *= (i - k + 1) as f64 / k as f64;
            }
            *slot += a * binom * pole.powi((i - k) as i32);
        }
    }
    for &(q, m) in poles {
        if q == pole {
            continue;
        }
        // 1/(d + h) = Σ_k (-1)^k h^k / d^{k+1}, applied m times.
        let d = pole - q;
        let inv: Vec<Complex64> = (0..mult)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / d.powi(k as i32 + 1)
            })
            .collect();
        for _ in 0..m {
            series = truncated_product(&series, &inv);
        }
    }
    series
}

fn truncated_product(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len();
    (0..n)
        .map(|k| (0..=k).map(|i| a[i] * b[k - i]).sum())
        .collect()
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `coeff · t^power · e^{-alpha t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealTerm {
    pub coeff: f64,
    pub power: usize,
    pub alpha: f64,
}

/// `t^power e^{-alpha t} (sin_coeff · sin ωt + cos_coeff · cos ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryTerm {
    pub sin_coeff: f64,
    pub cos_coeff: f64,
    pub power: usize,
    pub alpha: f64,
    pub omega: f64,
}

/// Impulse response as a sum of polynomial-exponential terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PartialFractionForm {
    pub real_terms: Vec<RealTerm>,
    pub oscillatory_terms: Vec<OscillatoryTerm>,
}

/// `|g0(t)| <= amplitude · e^{-rate · t}` for all `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBound {
    pub amplitude: f64,
    pub rate: f64,
}

impl ExponentialBound {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (-self.rate * t).exp()
    }

    /// Smallest `t` beyond which the envelope stays below `level`.
    pub fn time_below(&self, level: f64) -> f64 {
        if self.amplitude <= level {
            0.0
        } else {
            (self.amplitude / level).ln() / self.rate
        }
    }
}

impl PartialFractionForm {
    /// `g0(t)`; rejects negative or non-finite `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) || t.is_infinite() {
            return Err(Error::Domain {
                what: "impulse response needs finite t >= 0",
                value: t,
            });
        }
        Ok(self.value(t))
    }

    /// `g0(t)` without the domain check.
    pub fn value(&self, t: f64) -> f64 {
        let real: f64 = self
            .real_terms
            .iter()
            .map(|term| term.coeff * t.powi(term.power as i32) * (-term.alpha * t).exp())
            .sum();
        let osc: f64 = self
            .oscillatory_terms
            .iter()
            .map(|term| {
                let (s, c) = (term.omega * t).sin_cos();
                t.powi(term.power as i32)
                    * (-term.alpha * t).exp()
                    * (term.sin_coeff * s + term.cos_coeff * c)
            })
            .sum();
        real + osc
    }

    /// Laplace transform of the term sum.
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for term in &self.real_terms {
            let p = Complex64::new(-term.alpha, 0.0);
            acc += term.coeff * factorial(term.power) / (s - p).powi(term.power as i32 + 1);
        }
        for term in &self.oscillatory_terms {
            // Re((C - iB) t^j e^{pt}) with p = -α + iω.
            let w = Complex64::new(term.cos_coeff, -term.sin_coeff);
            let p = Complex64::new(-term.alpha, term.omega);
            let j = factorial(term.power);
            let e = term.power as i32 + 1;
            acc += 0.5 * j * (w / (s - p).powi(e) + w.conj() / (s - p.conj()).powi(e));
        }
        acc
    }

    /// `d^k g0 / dt^k` at `t = 0⁺`, together with the sum of the absolute
    /// term contributions (a scale for cancellation checks).
    pub fn derivative_at_zero(&self, k: usize) -> (f64, f64) {
        let mut value = 0.0;
        let mut scale = 0.0;
        for term in &self.real_terms {
            if k >= term.power {
                // k-th derivative of t^j e^{-αt} at 0 is k!/(k-j)! (-α)^{k-j}.
                let d = term.coeff * factorial(k) / factorial(k - term.power)
                    * (-term.alpha).powi((k - term.power) as i32);
                value += d;
                scale += d.abs();
            }
        }
        for term in &self.oscillatory_terms {
            if k >= term.power {
                let w = Complex64::new(term.cos_coeff, -term.sin_coeff);
                let p = Complex64::new(-term.alpha, term.omega);
                let d = (w * p.powi((k - term.power) as i32)).re * factorial(k)
                    / factorial(k - term.power);
                value += d;
                scale += d.abs();
            }
        }
        (value, scale)
    }

    /// Largest `k` with `d^j g0/dt^j (0⁺) = 0` for all `j = 0..=k`; `-1` when
    /// `g0(0) ≠ 0`. A derivative counts as zero when it is below `tol` times
    /// the magnitude of its largest contributing term.
    pub fn annihilation_order(&self, tol: f64) -> i64 {
        let max_order = self
            .real_terms
            .iter()
            .map(|t| t.power)
            .chain(self.oscillatory_terms.iter().map(|t| t.power))
            .max()
            .unwrap_or(0);
        // A strictly proper rational g0 with relative degree r has its first
        // nonzero derivative at order r - 1, which is below the total pole count.
        let limit = (self.real_terms.len() + 2 * self.oscillatory_terms.len()).max(max_order + 1);
        for k in 0..=limit {
            let (value, scale) = self.derivative_at_zero(k);
            if scale > 0.0 && value.abs() > tol * scale {
                return k as i64 - 1;
            }
        }
        limit as i64
    }

    /// Envelope constants `β* = 2 max(β*_real, β*_comp)`,
    /// `α* = min(α*_real, α*_comp)` with per-term factors `j! (2/α)^j`.
    pub fn exponential_bound(&self) -> ExponentialBound {
        let c = |power: usize, alpha: f64| factorial(power) * (2.0 / alpha).powi(power as i32);
        let beta_real: f64 = self
            .real_terms
            .iter()
            .map(|t| t.coeff.abs() * c(t.power, t.alpha))
            .sum();
        let beta_comp: f64 = self
            .oscillatory_terms
            .iter()
            .map(|t| t.sin_coeff.hypot(t.cos_coeff) * c(t.power, t.alpha))
            .sum();
        let alpha_real = self
            .real_terms
            .iter()
            .map(|t| 0.5 * t.alpha)
            .fold(f64::INFINITY, f64::min);
        let alpha_comp = self
            .oscillatory_terms
            .iter()
            .map(|t| 0.5 * t.alpha)
            .fold(f64::INFINITY, f64::min);
        ExponentialBound {
            amplitude: 2.0 * beta_real.max(beta_comp),
            rate: alpha_real.min(alpha_comp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pf_of(tf: &RationalTransferFunction) -> PartialFractionForm {
        tf.partial_fractions().unwrap()
    }

    #[test]
    fn single_pole_identity() {
        let pf = pf_of(&RationalTransferFunction::first_order(1.0, 1.0).unwrap());
        assert_eq!(
            pf.real_terms,
            vec![RealTerm {
                coeff: 1.0,
                power: 0,
                alpha: 1.0
            }]
        );
        assert!(pf.oscillatory_terms.is_empty());
    }

    #[test]
    fn double_pole_gives_t_exp() {
        let pf = pf_of(&RationalTransferFunction::multiple_pole(1, 1.0, 1.0).unwrap());
        let nonzero: Vec<_> = pf.real_terms.iter().filter(|t| t.coeff != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].power, 1);
        assert_relative_eq!(nonzero[0].coeff, 1.0, epsilon = 1e-15);
        assert_relative_eq!(pf.eval(1.0).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(pf.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn two_pole_numerator_and_residue_forms_agree() {
        let (t1, t2, t3) = (3.0, 1.0, 1.0);
        let by_residue = pf_of(&RationalTransferFunction::two_pole(t1, t2, t3).unwrap());
        let by_numerator = pf_of(
            &RationalTransferFunction::new(
                t3 * (t1 - t2),
                vec![
                    RealPole { alpha: t1, mult: 1 },
                    RealPole { alpha: t2, mult: 1 },
                ],
                vec![],
            )
            .unwrap(),
        );
        let expected = (-0.5f64).exp() - (-1.5f64).exp();
        assert_relative_eq!(by_residue.eval(0.5).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(by_numerator.eval(0.5).unwrap(), expected, epsilon = 1e-15);
        for t in [0.0, 0.1, 1.0, 4.0, 12.0] {
            assert_relative_eq!(
                by_residue.eval(t).unwrap(),
                by_numerator.eval(t).unwrap(),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn negative_time_rejected() {
        let pf = pf_of(&RationalTransferFunction::first_order(1.0, 1.0).unwrap());
        assert!(matches!(pf.eval(-0.1), Err(Error::Domain { .. })));
        assert!(pf.eval(f64::NAN).is_err());
    }

    #[test]
    fn unstable_and_improper_rejected() {
        assert!(matches!(
            RationalTransferFunction::first_order(1.0, -1.0),
            Err(Error::Unstable(_))
        ));
        assert!(matches!(
            RationalTransferFunction::first_order(1.0, 1.0)
                .unwrap()
                .with_numerator(vec![1.0, 1.0]),
            Err(Error::NotStrictlyProper {
                numerator: 1,
                denominator: 1
            })
        ));
        assert!(RationalTransferFunction::new(
            1.0,
            vec![],
            vec![ComplexPolePair {
                alpha: 0.0,
                omega: 1.0,
                mult: 1
            }]
        )
        .is_err());
    }

    #[test]
    fn complex_pair_matches_damped_sine() {
        // 1/((s+1)^2 + 4)  <->  e^{-t} sin(2t) / 2
        let tf = RationalTransferFunction::new(
            1.0,
            vec![],
            vec![ComplexPolePair {
                alpha: 1.0,
                omega: 2.0,
                mult: 1,
            }],
        )
        .unwrap();
        let pf = pf_of(&tf);
        for t in [0.0f64, 0.3, 1.7, 5.0] {
            let expected = (-t).exp() * (2.0 * t).sin() / 2.0;
            assert_relative_eq!(pf.eval(t).unwrap(), expected, epsilon = 1e-15);
        }
    }

    #[test]
    fn bound_constants_match_hand_computation() {
        let exp = pf_of(&RationalTransferFunction::first_order(1.0, 1.0).unwrap());
        assert_eq!(
            exp.exponential_bound(),
            ExponentialBound {
                amplitude: 2.0,
                rate: 0.5
            }
        );

        let texp = PartialFractionForm {
            real_terms: vec![RealTerm {
                coeff: 1.0,
                power: 1,
                alpha: 1.0,
            }],
            oscillatory_terms: vec![],
        };
        assert_eq!(
            texp.exponential_bound(),
            ExponentialBound {
                amplitude: 4.0,
                rate: 0.5
            }
        );

        let osc = PartialFractionForm {
            real_terms: vec![],
            oscillatory_terms: vec![OscillatoryTerm {
                sin_coeff: 3.0,
                cos_coeff: 4.0,
                power: 0,
                alpha: 2.0,
                omega: 1.0,
            }],
        };
        let b = osc.exponential_bound();
        assert_eq!(
            b,
            ExponentialBound {
                amplitude: 10.0,
                rate: 1.0
            }
        );
        for pf in [&exp, &texp, &osc] {
            let b = pf.exponential_bound();
            for k in 0..=5000 {
                let t = k as f64 * 0.01;
                assert!(pf.value(t).abs() <= b.at(t) + 1e-12);
            }
        }
    }

    #[test]
    fn annihilation_orders() {
        let exp = pf_of(&RationalTransferFunction::first_order(1.0, 1.0).unwrap());
        assert_eq!(exp.annihilation_order(1e-12), -1);
        let texp = pf_of(&RationalTransferFunction::multiple_pole(1, 1.0, 1.0).unwrap());
        assert_eq!(texp.annihilation_order(1e-12), 0);
        let t2exp = PartialFractionForm {
            real_terms: vec![RealTerm {
                coeff: 1.0,
                power: 2,
                alpha: 1.0,
            }],
            oscillatory_terms: vec![],
        };
        assert_eq!(t2exp.annihilation_order(1e-12), 1);
        // θ3(e^{-θ2 t} - e^{-θ1 t}) vanishes at 0 but has slope θ3(θ1 - θ2).
        let two = pf_of(&RationalTransferFunction::two_pole(3.0, 1.0, 1.0).unwrap());
        assert_eq!(two.annihilation_order(1e-12), 0);
    }

    #[test]
    fn multiple_pole_annihilation_is_n_minus_one() {
        for n in 1..6 {
            let pf = pf_of(&RationalTransferFunction::multiple_pole(n, 0.7, 1.0).unwrap());
            assert_eq!(pf.annihilation_order(1e-10), n as i64 - 1, "n = {n}");
        }
    }

    #[test]
    fn json_schema_round_trip() {
        let json = r#"{"gain": 2.0, "real_poles": [{"alpha": 1.0, "mult": 2}],
                       "complex_poles": [{"alpha": 0.5, "omega": 3.0, "mult": 1}]}"#;
        let tf: RationalTransferFunction = serde_json::from_str(json).unwrap();
        assert_eq!(tf.denominator_degree(), 4);
        let back: RationalTransferFunction =
            serde_json::from_str(&serde_json::to_string(&tf).unwrap()).unwrap();
        assert_eq!(tf, back);

        let bad = r#"{"gain": 1.0, "real_poles": [{"alpha": -1.0, "mult": 1}]}"#;
        assert!(serde_json::from_str::<RationalTransferFunction>(bad).is_err());

        let with_residues = r#"{"gain": 1.0, "real_poles": [{"alpha": 3.0, "mult": 1}, {"alpha": 1.0, "mult": 1}],
                                "residues": {"real": [[-1.0], [1.0]]}}"#;
        let tf: RationalTransferFunction = serde_json::from_str(with_residues).unwrap();
        let pf = tf.partial_fractions().unwrap();
        assert_relative_eq!(
            pf.eval(0.5).unwrap(),
            (-0.5f64).exp() - (-1.5f64).exp(),
            epsilon = 1e-15
        );
    }
}
