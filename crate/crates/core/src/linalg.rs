//! Small dense and tridiagonal helpers shared by the kernel and tuning code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored by its diagonal and first off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

/// `L D Lᵀ` factors of a symmetric positive-definite tridiagonal matrix:
/// unit lower bidiagonal `L` with subdiagonal `l`, diagonal `d`.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl {
    l: Vec<f64>,
    d: Vec<f64>,
}

impl SymTridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &v) in self.off.iter().enumerate() {
            m[(i, i + 1)] = v;
            m[(i + 1, i)] = v;
        }
        m
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `I·shift + scale·self`.
    pub fn scaled_plus_identity(&self, scale: f64, shift: f64) -> Self {
        Self {
            diag: self.diag.iter().map(|&d| shift + scale * d).collect(),
            off: self.off.iter().map(|&o| scale * o).collect(),
        }
    }

    pub fn ldl(&self) -> Result<TridiagonalLdl> {
        let n = self.len();
        let mut d = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n {
            let mut di = self.diag[i];
            if i > 0 {
                let li = self.off[i - 1] / d[i - 1];
                di -= li * self.off[i - 1];
                l.push(li);
            }
            if !(di > 0.0) || !di.is_finite() {
                return Err(Error::Solver(format!(
                    "tridiagonal pivot {i} is not positive ({di:e})"
                )));
            }
            d.push(di);
        }
        Ok(TridiagonalLdl { l, d })
    }
}

impl TridiagonalLdl {
    pub fn log_det(&self) -> f64 {
        self.d.iter().map(|d| d.ln()).sum()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

/// Cholesky factor of `a + shift·I`; on failure retries with the shift
/// multiplied by 10 (up to `retries` times), logging a warning. Returns the
/// factor and the shift actually used.
pub fn cholesky_with_jitter(
    a: &DMatrix<f64>,
    shift: f64,
    retries: usize,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = a.nrows();
    let mut current = shift;
    for attempt in 0..=retries {
        let m = a + DMatrix::identity(n, n) * current;
        if let Some(chol) = Cholesky::new(m) {
            if attempt > 0 {
                log::warn!("Cholesky needed jitter escalation: shift {shift:e} -> {current:e}");
            }
            return Ok((chol, current));
        }
        current = if current > 0.0 { current * 10.0 } else { 1e-12 };
    }
    Err(Error::Solver(format!(
        "matrix not positive definite after {retries} jitter escalations (final shift {current:e})"
    )))
}

pub fn cholesky_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum::<f64>()
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
