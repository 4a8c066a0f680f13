//! Gaussian increment process with covariance `K(t_i, t_j)`.
//!
//! Sort the instants so that `0 = c(T_0) < c(T_1) < … < c(T_n)` and set
//! `h(T_k) = Σ_{j ≤ k} w_j √(c(T_j) - c(T_{j-1}))` with unit white noise
//! `w_j`. Then `Cov(h(T_i), h(T_k)) = c(T_{min(i,k)}) = min(c(T_i), c(T_k))`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{sorted_order, Kernel, DEFAULT_GRID_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementProcess {
    instants: Vec<f64>,
    /// `order[k]`: user index of the `k`-th smallest coordinate.
    order: Vec<usize>,
    /// Sorted coordinates `c(T_1) < … < c(T_n)`.
    levels: Vec<f64>,
    std_devs: Vec<f64>,
}

impl IncrementProcess {
    /// Fails with [`Error::DegenerateGrid`] when two instants share a
    /// coordinate or one has coordinate zero.
    pub fn new<K: Kernel + ?Sized>(kernel: &K, instants: &[f64]) -> Result<Self> {
        let c = kernel.coordinates(instants)?;
        let order = sorted_order(&c, DEFAULT_GRID_EPS)?;
        let levels: Vec<f64> = order.iter().map(|&i| c[i]).collect();
        let std_devs = std::iter::once(levels[0])
            .chain(levels.windows(2).map(|w| w[1] - w[0]))
            .map(f64::sqrt)
            .collect();
        Ok(Self {
            instants: instants.to_vec(),
            order,
            levels,
            std_devs,
        })
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `c(T_k) - c(T_{k-1})` in sorted order.
    pub fn increment_variances(&self) -> Vec<f64> {
        self.std_devs.iter().map(|s| s * s).collect()
    }

    /// One path in user order from the stream `(seed, path)`.
    pub fn sample_path(&self, seed: u64, path: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let mut out = vec![0.0; self.len()];
        let mut acc = 0.0;
        for (&i, &sd) in self.order.iter().zip(&self.std_devs) {
            let w: f64 = rng.sample(StandardNormal);
            acc += w * sd;
            out[i] = acc;
        }
        out
    }

    /// `n_paths × n` matrix of paths, row `p` drawn from stream `(seed, p)`.
    pub fn sample(&self, seed: u64, n_paths: usize) -> Result<DMatrix<f64>> {
        if n_paths == 0 {
            return Err(Error::Domain {
                what: "at least one path is required",
                value: 0.0,
            });
        }
        let rows: Vec<Vec<f64>> = (0..n_paths as u64)
            .into_par_iter()
            .map(|p| self.sample_path(seed, p))
            .collect();
        Ok(DMatrix::from_fn(n_paths, self.len(), |p, i| rows[p][i]))
    }
}

/// Convenience alias for [`IncrementProcess::new`].
pub fn build_process<K: Kernel + ?Sized>(kernel: &K, instants: &[f64]) -> Result<IncrementProcess> {
    IncrementProcess::new(kernel, instants)
}

/// Second-moment matrix `mean(h_i h_j)` (the mean is known to be zero) and
/// the standard error of each entry.
pub fn empirical_covariance(paths: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (m, n) = paths.shape();
    let mf = m as f64;
    let mut cov = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let prods = paths.column(i).component_mul(&paths.column(j));
            let mean = prods.sum() / mf;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (mf - 1.0).max(1.0);
            let s = (var / mf).sqrt();
            cov[(i, j)] = mean;
            cov[(j, i)] = mean;
            se[(i, j)] = s;
            se[(j, i)] = s;
        }
    }
    (cov, se)
}

/// `instant,path_id,value`.
pub fn paths_csv(instants: &[f64], paths: &DMatrix<f64>) -> String {
    let mut s = String::from("instant,path_id,value\n");
    for p in 0..paths.nrows() {
        for (i, t) in instants.iter().enumerate() {
            s.push_str(&format!("{t},{p},{}\n", paths[(p, i)]));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoordinateChangeKernel, TcKernel};
    use crate::lti::RationalTransferFunction;
    use approx::assert_relative_eq;

    #[test]
    fn single_instant() {
        let k = TcKernel::new(2.0, 1.0).unwrap();
        let p = IncrementProcess::new(&k, &[0.5]).unwrap();
        assert_relative_eq!(
            p.increment_variances()[0],
            2.0 * (-0.5f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn decaying_response_sorts_late_instants_first() {
        let k =
            CoordinateChangeKernel::new(RationalTransferFunction::first_order(1.0, 1.0).unwrap())
                .unwrap();
        let p = IncrementProcess::new(&k, &[1.0, 2.0]).unwrap();
        assert_eq!(p.order(), &[1, 0]);
        let v = p.increment_variances();
        let (e1, e2) = ((-1.0f64).exp(), (-2.0f64).exp());
        assert_relative_eq!(v[0], e2, max_relative = 1e-15);
        assert_relative_eq!(v[1], e1 - e2, max_relative = 1e-14);
    }

    #[test]
    fn telescoping_variances() {
        let k = TcKernel::new(1.5, 0.7).unwrap();
        let grid = [0.3, 2.0, 1.1, 4.0];
        let p = IncrementProcess::new(&k, &grid).unwrap();
        let mut acc = 0.0;
        for (v, &i) in p.increment_variances().iter().zip(p.order()) {
            acc += v;
            assert_relative_eq!(acc, k.coordinate(grid[i]).unwrap(), max_relative = 1e-14);
        }
    }

    #[test]
    fn duplicate_levels_are_rejected() {
        let k = TcKernel::new(1.0, 1.0).unwrap();
        assert!(matches!(
            IncrementProcess::new(&k, &[1.0, 1.0]),
            Err(Error::DegenerateGrid { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let k = TcKernel::new(1.0, 1.0).unwrap();
        let p = IncrementProcess::new(&k, &[0.5, 1.0, 1.5]).unwrap();
        assert_eq!(p.sample(7, 2).unwrap(), p.sample(7, 2).unwrap());
        assert_ne!(p.sample(7, 2).unwrap(), p.sample(8, 2).unwrap());
        assert_eq!(
            p.sample(7, 3).unwrap().row(2),
            p.sample(7, 5).unwrap().row(2)
        );
        assert!(p.sample(7, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let m = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        assert_eq!(
            paths_csv(&[1.0, 2.0], &m),
            "instant,path_id,value\n1,0,0.5\n2,0,-1\n"
        );
    }
}
