//! Coordinate-change spline kernels and the structure of their Gram matrices.
//!
//! Every kernel here has the form `K(t1, t2) = min(c(t1), c(t2))` for a
//! nonnegative coordinate function `c`:
//!
//! | kernel              | coordinate `c(t)`   |
//! |---------------------|---------------------|
//! | first-order spline  | `β t`, `t ∈ [0, 1]` |
//! | TC                  | `β e^{-αt}`         |
//! | coordinate change   | `|g0(t)|`           |
//!
//! Sorting the grid by coordinate value turns the Gram matrix into the
//! Wiener covariance `min(g_i, g_j)` of the sorted values, whose determinant
//! and tridiagonal inverse have closed forms.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{SymTridiagonal, TridiagonalLdl};
use crate::lti::{PartialFractionForm, RationalTransferFunction};

/// Default relative tolerance on sorted coordinate gaps.
pub const DEFAULT_GRID_EPS: f64 = 1e-12;

/// A kernel of the form `min(c(t1), c(t2))`.
pub trait Kernel: Send + Sync {
    /// Coordinate value `c(t)`, checking the kernel's time domain.
    fn coordinate(&self, t: f64) -> Result<f64>;

    fn eval(&self, t1: f64, t2: f64) -> Result<f64> {
        Ok(self.coordinate(t1)?.min(self.coordinate(t2)?))
    }

    fn coordinates(&self, grid: &[f64]) -> Result<Vec<f64>> {
        grid.iter().map(|&t| self.coordinate(t)).collect()
    }

    /// Dense Gram matrix `{K(t_i, t_j)}`.
    fn gram(&self, grid: &[f64]) -> Result<DMatrix<f64>> {
        let c = self.coordinates(grid)?;
        Ok(min_gram(&c))
    }
}

pub(crate) fn min_gram(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |i, j| c[i].min(c[j]))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "kernel arguments must be finite and >= 0",
            value: t,
        })
    }
}

/// `β min(τ1, τ2)` on `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineKernel {
    pub beta: f64,
}

impl SplineKernel {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain {
                what: "spline kernel scale must be positive",
                value: beta,
            });
        }
        Ok(Self { beta })
    }
}

impl Kernel for SplineKernel {
    fn coordinate(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain {
                what: "first-order spline kernel is defined on [0, 1]",
                value: t,
            });
        }
        Ok(self.beta * t)
    }
}

/// Tuned-correlated kernel `β min(e^{-ατ1}, e^{-ατ2})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcKernel {
    pub beta: f64,
    pub alpha: f64,
}

impl TcKernel {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain {
                what: "TC scale must be positive",
                value: beta,
            });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain {
                what: "TC decay must be positive",
                value: alpha,
            });
        }
        Ok(Self { beta, alpha })
    }
}

impl Kernel for TcKernel {
    fn coordinate(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.beta * (-self.alpha * t).exp())
    }
}

/// `K_{G0}(τ1, τ2) = min(|g0(τ1)|, |g0(τ2)|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RationalTransferFunction",
    into = "RationalTransferFunction"
)]
pub struct CoordinateChangeKernel {
    tf: RationalTransferFunction,
    pf: PartialFractionForm,
}

impl TryFrom<RationalTransferFunction> for CoordinateChangeKernel {
    type Error = Error;

    fn try_from(tf: RationalTransferFunction) -> Result<Self> {
        Self::new(tf)
    }
}

impl From<CoordinateChangeKernel> for RationalTransferFunction {
    fn from(k: CoordinateChangeKernel) -> Self {
        k.tf
    }
}

impl CoordinateChangeKernel {
    pub fn new(tf: RationalTransferFunction) -> Result<Self> {
        let pf = tf.partial_fractions()?;
        Ok(Self { tf, pf })
    }

    pub fn transfer_function(&self) -> &RationalTransferFunction {
        &self.tf
    }

    pub fn impulse_response(&self) -> &PartialFractionForm {
        &self.pf
    }
}

impl Kernel for CoordinateChangeKernel {
    fn coordinate(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.pf.value(t).abs())
    }
}

/// Serializable union of the kernels above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnyKernel {
    Spline(SplineKernel),
    Tc(TcKernel),
    CoordinateChange {
        transfer_function: CoordinateChangeKernel,
    },
}

impl AnyKernel {
    pub fn coordinate_change(tf: RationalTransferFunction) -> Result<Self> {
        Ok(Self::CoordinateChange {
            transfer_function: CoordinateChangeKernel::new(tf)?,
        })
    }

    fn inner(&self) -> &dyn Kernel {
        match self {
            AnyKernel::Spline(k) => k,
            AnyKernel::Tc(k) => k,
            AnyKernel::CoordinateChange { transfer_function } => transfer_function,
        }
    }
}

impl Kernel for AnyKernel {
    fn coordinate(&self, t: f64) -> Result<f64> {
        self.inner().coordinate(t)
    }
}

impl<K: Kernel + ?Sized> Kernel for &K {
    fn coordinate(&self, t: f64) -> Result<f64> {
        (**self).coordinate(t)
    }
}

/// Permutation sorting the grid's coordinates ascending; `order[k]` is the
/// original index of the `k`-th smallest value.
///
/// Fails with [`Error::DegenerateGrid`] when the smallest coordinate or any
/// sorted gap is at most `eps_rel · max c(t_i)`.
pub fn validate_grid<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
    eps_rel: f64,
) -> Result<Vec<usize>> {
    let c = kernel.coordinates(grid)?;
    sorted_order(&c, eps_rel)
}

pub(crate) fn sorted_order(c: &[f64], eps_rel: f64) -> Result<Vec<usize>> {
    if c.is_empty() {
        return Err(Error::Domain {
            what: "grid must be nonempty",
            value: 0.0,
        });
    }
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
    let max = c[*order.last().unwrap()];
    let eps = eps_rel * max;
    if !(c[order[0]] > eps) {
        return Err(Error::DegenerateGrid {
            first: order[0],
            second: None,
        });
    }
    for w in order.windows(2) {
        if !(c[w[1]] - c[w[0]] > eps) {
            return Err(Error::DegenerateGrid {
                first: w[0],
                second: Some(w[1]),
            });
        }
    }
    Ok(order)
}

/// `log det K = log g_1 + Σ log(g_{i+1} - g_i)` over the sorted coordinates.
pub fn gram_log_det_closed_form<K: Kernel + ?Sized>(kernel: &K, grid: &[f64]) -> Result<f64> {
    Ok(gram_inverse_closed_form(kernel, grid)?.log_det())
}

/// `K⁻¹ = Rᵀ P R` with tridiagonal `P`.
pub fn gram_inverse_closed_form<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &[f64],
) -> Result<GramFactorization> {
    let c = kernel.coordinates(grid)?;
    GramFactorization::from_coordinates(&c, DEFAULT_GRID_EPS)
}

/// Closed-form structure of a coordinate-change Gram matrix.
#[derive(Debug, Clone)]
pub struct GramFactorization {
    order: Vec<usize>,
    position: Vec<usize>,
    sorted: Vec<f64>,
    p: SymTridiagonal,
    log_det: f64,
}

impl GramFactorization {
    pub fn from_coordinates(c: &[f64], eps_rel: f64) -> Result<Self> {
        let order = sorted_order(c, eps_rel)?;
        let n = order.len();
        let mut position = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            position[i] = k;
        }
        let g: Vec<f64> = order.iter().map(|&i| c[i]).collect();
        let gaps: Vec<f64> = g.windows(2).map(|w| w[1] - w[0]).collect();

        let mut diag = vec![0.0; n];
        if n == 1 {
            diag[0] = 1.0 / g[0];
        } else {
            diag[0] = g[1] / (g[0] * gaps[0]);
            for i in 1..n - 1 {
                diag[i] = (g[i + 1] - g[i - 1]) / (gaps[i] * gaps[i - 1]);
            }
            diag[n - 1] = 1.0 / gaps[n - 2];
        }
        let off: Vec<f64> = gaps.iter().map(|&d| -1.0 / d).collect();
        let log_det = g[0].ln() + gaps.iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            order,
            position,
            sorted: g,
            p: SymTridiagonal { diag, off },
            log_det,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `order[k]` is the user index of the `k`-th smallest coordinate (the
    /// nonzero column of row `k` of `R`).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn p(&self) -> &SymTridiagonal {
        &self.p
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    fn permute(&self, v: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| v[i]).collect()
    }

    fn unpermute(&self, v: &[f64]) -> Vec<f64> {
        self.position.iter().map(|&k| v[k]).collect()
    }

    /// Dense `Rᵀ P R`.
    pub fn inverse_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in self.inverse_triplets() {
            m[(i, j)] = v;
        }
        m
    }

    /// Nonzeros of `Rᵀ P R` as `(row, col, value)` in user indexing, sorted
    /// by row then column.
    pub fn inverse_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out: Vec<(usize, usize, f64)> = self
            .p_triplets()
            .into_iter()
            .map(|(a, b, v)| (self.order[a], self.order[b], v))
            .collect();
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }

    /// Nonzeros of `P` in sorted indexing.
    pub fn p_triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.len();
        let mut out = Vec::with_capacity(3 * n);
        for i in 0..n {
            if i > 0 {
                out.push((i, i - 1, self.p.off[i - 1]));
            }
            out.push((i, i, self.p.diag[i]));
            if i + 1 < n {
                out.push((i, i + 1, self.p.off[i]));
            }
        }
        out
    }

    pub fn inverse_nnz(&self) -> usize {
        self.inverse_triplets()
            .iter()
            .filter(|t| t.2 != 0.0)
            .count()
    }

    /// `K⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.unpermute(&self.p.mul_vec(&self.permute(b)))
    }

    /// Structured view of `K + shift·I` built on `K⁻¹ = Rᵀ P R`:
    /// `det(K + s I) = det K · det(I + s P)` and
    /// `(K + s I)⁻¹ = (I - (I + s K⁻¹)⁻¹) / s`.
    pub fn shifted(&self, shift: f64) -> Result<ShiftedGram<'_>> {
        if !(shift > 0.0) {
            return Err(Error::Domain {
                what: "shift must be positive",
                value: shift,
            });
        }
        let ldl = self.p.scaled_plus_identity(shift, 1.0).ldl()?;
        Ok(ShiftedGram {
            base: self,
            shift,
            ldl,
        })
    }

    /// 0/1 sparsity pattern of `Rᵀ P R`, one text row per matrix row.
    pub fn inverse_sparsity_pattern(&self) -> String {
        pattern_string(self.len(), &self.inverse_triplets())
    }

    pub fn p_sparsity_pattern(&self) -> String {
        pattern_string(self.len(), &self.p_triplets())
    }
}

/// `K + shift·I` through the tridiagonal structure of `K⁻¹`.
#[derive(Debug)]
pub struct ShiftedGram<'a> {
    base: &'a GramFactorization,
    shift: f64,
    ldl: TridiagonalLdl,
}

impl ShiftedGram<'_> {
    pub fn log_det(&self) -> f64 {
        self.base.log_det + self.ldl.log_det()
    }

    /// `(K + s I)⁻¹ y`.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let py = self.base.permute(y);
        let z = self.ldl.solve(&py);
        let x: Vec<f64> = py
            .iter()
            .zip(&z)
            .map(|(a, b)| (a - b) / self.shift)
            .collect();
        self.base.unpermute(&x)
    }
}

fn pattern_string(n: usize, triplets: &[(usize, usize, f64)]) -> String {
    let mut grid = vec![vec![b'0'; n]; n];
    for &(i, j, v) in triplets {
        if v != 0.0 {
            grid[i][j] = b'1';
        }
    }
    let mut s = String::with_capacity(n * (n + 1));
    for row in grid {
        s.push_str(std::str::from_utf8(&row).unwrap());
        s.push('\n');
    }
    s
}

/// `‖2I - K K̂⁻¹ - K̂⁻¹ K‖_FRO`, the symmetric check of an inverse.
pub fn inverse_identity_residual(k: &DMatrix<f64>, inv: &DMatrix<f64>) -> f64 {
    let n = k.nrows();
    (DMatrix::identity(n, n) * 2.0 - k * inv - inv * k).norm()
}

/// Dense matrix as CSV without a header row.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Coordinate-list text: `row col value` per line, 0-based.
pub fn triplets_to_coo(triplets: &[(usize, usize, f64)]) -> String {
    let mut s = String::new();
    for &(i, j, v) in triplets {
        let _ = writeln!(s, "{i} {j} {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::RationalTransferFunction;
    use approx::assert_relative_eq;

    fn texp() -> CoordinateChangeKernel {
        CoordinateChangeKernel::new(RationalTransferFunction::multiple_pole(1, 1.0, 1.0).unwrap())
            .unwrap()
    }

    fn expk() -> CoordinateChangeKernel {
        CoordinateChangeKernel::new(RationalTransferFunction::first_order(1.0, 1.0).unwrap())
            .unwrap()
    }

    fn example_grid() -> Vec<f64> {
        (1..=40).map(|i| 0.1 * i as f64).collect()
    }

    #[test]
    fn scalar_kernel_values() {
        let tc = TcKernel::new(1.0, 1.0).unwrap();
        assert_relative_eq!(tc.eval(1.0, 2.0).unwrap(), (-2.0f64).exp());
        let k = texp();
        assert_eq!(k.eval(0.0, 5.0).unwrap(), 0.0);
        let v = k.eval(0.5, 3.0).unwrap();
        assert_relative_eq!(v, 3.0 * (-3.0f64).exp(), epsilon = 1e-15);
        assert!(v < 0.5 * (-0.5f64).exp());
        assert_relative_eq!(v, 0.14936120510359183, epsilon = 1e-12);
    }

    #[test]
    fn domain_violations_rejected() {
        let s = SplineKernel::new(1.0).unwrap();
        assert!(s.eval(0.5, 1.5).is_err());
        assert!(texp().eval(-1.0, 1.0).is_err());
        assert!(TcKernel::new(1.0, 0.0).is_err());
    }

    #[test]
    fn small_grams() {
        let k = texp();
        let g = k.gram(&[0.7]).unwrap();
        assert_relative_eq!(g[(0, 0)], 0.7 * (-0.7f64).exp());

        let s = SplineKernel::new(1.0).unwrap();
        let g = s.gram(&[0.2, 0.5, 1.0]).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.2, 0.2, 0.2, 0.2, 0.5, 0.5, 0.2, 0.5, 1.0]);
        assert_eq!(g, expected);
    }

    #[test]
    fn example_gram_is_psd() {
        let g = texp().gram(&example_grid()).unwrap();
        let min_eig = g.symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-12, "{min_eig}");
    }

    #[test]
    fn validate_grid_orders_and_rejects() {
        assert_eq!(
            validate_grid(&texp(), &[0.5, 3.0], DEFAULT_GRID_EPS).unwrap(),
            vec![1, 0]
        );
        assert_eq!(
            validate_grid(&expk(), &[1.0, 2.0, 3.0], DEFAULT_GRID_EPS).unwrap(),
            vec![2, 1, 0]
        );
        assert!(matches!(
            validate_grid(&texp(), &[0.5, 0.0, 2.0], DEFAULT_GRID_EPS),
            Err(Error::DegenerateGrid {
                first: 1,
                second: None
            })
        ));
        assert!(matches!(
            validate_grid(&expk(), &[1.0, 2.0, 1.0], DEFAULT_GRID_EPS),
            Err(Error::DegenerateGrid {
                second: Some(_),
                ..
            })
        ));
    }

    #[test]
    fn closed_form_small_cases() {
        assert_relative_eq!(gram_log_det_closed_form(&expk(), &[1.0]).unwrap(), -1.0);
        let f = gram_inverse_closed_form(&expk(), &[1.0]).unwrap();
        assert_relative_eq!(f.inverse_dense()[(0, 0)], 1.0f64.exp(), epsilon = 1e-14);

        // n = 2: log(g1 (g2 - g1)).
        let (a, b) = (0.3f64, 1.1f64);
        let (g1, g2) = ((-b).exp(), (-a).exp());
        assert_relative_eq!(
            gram_log_det_closed_form(&expk(), &[a, b]).unwrap(),
            (g1 * (g2 - g1)).ln(),
            epsilon = 1e-14
        );

        let grid = [1.0, 2.0, 3.0];
        let f = gram_inverse_closed_form(&expk(), &grid).unwrap();
        let dense_inv = expk().gram(&grid).unwrap().try_inverse().unwrap();
        let diff = (f.inverse_dense() - dense_inv).abs().max();
        assert!(diff <= 1e-10, "{diff}");
    }

    #[test]
    fn example_inverse_identity_residual() {
        let grid = example_grid();
        let k = texp().gram(&grid).unwrap();
        let f = gram_inverse_closed_form(&texp(), &grid).unwrap();
        let kinv = f.inverse_dense();
        let n = grid.len();
        let r = DMatrix::<f64>::identity(n, n) * 2.0 - &k * &kinv - &kinv * &k;
        assert!(r.norm() <= 1e-9, "{}", r.norm());
        assert!(f.inverse_nnz() <= 3 * n);
        let lu_log_det = k.lu().determinant().abs().ln();
        assert_relative_eq!(f.log_det(), lu_log_det, max_relative = 1e-8);
    }

    #[test]
    fn solve_and_shifted_match_dense() {
        let grid = example_grid();
        let kern = texp();
        let k = kern.gram(&grid).unwrap();
        let f = gram_inverse_closed_form(&kern, &grid).unwrap();
        let y: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = f.solve(&y);
        let back = &k * nalgebra::DVector::from_column_slice(&x);
        for i in 0..y.len() {
            assert_relative_eq!(back[i], y[i], epsilon = 1e-8);
        }

        let s = 1e-4;
        let shifted = f.shifted(s).unwrap();
        let m = &k + DMatrix::<f64>::identity(grid.len(), grid.len()) * s;
        let chol = m.clone().cholesky().unwrap();
        let dense_ld = crate::linalg::cholesky_log_det(&chol);
        assert_relative_eq!(shifted.log_det(), dense_ld, max_relative = 1e-10);
        let xs = shifted.solve(&y);
        let xd = chol.solve(&nalgebra::DVector::from_column_slice(&y));
        for i in 0..y.len() {
            assert_relative_eq!(xs[i], xd[i], max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn tc_is_first_order_coordinate_change() {
        let (beta, alpha) = (2.5, 0.7);
        let tc = TcKernel::new(beta, alpha).unwrap();
        let cc = CoordinateChangeKernel::new(
            RationalTransferFunction::first_order(beta, alpha).unwrap(),
        )
        .unwrap();
        for &(a, b) in &[(0.0, 0.0), (0.3, 2.0), (5.0, 1.0), (10.0, 10.0)] {
            assert_eq!(tc.eval(a, b).unwrap(), cc.eval(a, b).unwrap());
        }
    }

    #[test]
    fn patterns_and_exports() {
        let f = gram_inverse_closed_form(&expk(), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.p_sparsity_pattern(), "110\n111\n011\n");
        // Sorted order reverses the grid, so the pattern of RᵀPR is the same
        // tridiagonal shape.
        assert_eq!(f.inverse_sparsity_pattern(), "110\n111\n011\n");
        let coo = triplets_to_coo(&f.p_triplets());
        assert_eq!(coo.lines().count(), 7);
        let csv = matrix_to_csv(&DMatrix::from_row_slice(1, 2, &[1.0, 0.5]));
        assert_eq!(csv, "1,0.5\n");
    }

    #[test]
    fn any_kernel_json() {
        let k = AnyKernel::coordinate_change(
            RationalTransferFunction::two_pole(3.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&k).unwrap();
        let back: AnyKernel = serde_json::from_str(&s).unwrap();
        assert_eq!(k, back);
        let tc: AnyKernel =
            serde_json::from_str(r#"{"type":"tc","beta":1.0,"alpha":2.0}"#).unwrap();
        assert_relative_eq!(tc.eval(1.0, 0.5).unwrap(), (-2.0f64).exp());
    }
}
