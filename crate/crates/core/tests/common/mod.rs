#![allow(dead_code)]

use ccspline::kernels::{validate_grid, CoordinateChangeKernel, Kernel, DEFAULT_GRID_EPS};
use ccspline::lti::{ComplexPolePair, RationalTransferFunction, RealPole};
use rand::Rng;

/// Random stable, strictly proper transfer function: 1 to 3 real poles,
/// up to 2 oscillatory pairs, multiplicities 1 or 2, random numerator of
/// lower degree and random signed gain.
pub fn random_tf<R: Rng>(rng: &mut R) -> RationalTransferFunction {
    loop {
        let real: Vec<RealPole> = (0..rng.random_range(1..=3))
            .map(|_| RealPole {
                alpha: rng.random_range(0.1..3.0),
                mult: rng.random_range(1..=2),
            })
            .collect();
        let complex: Vec<ComplexPolePair> = (0..rng.random_range(0..=2))
            .map(|_| ComplexPolePair {
                alpha: rng.random_range(0.1..3.0),
                omega: rng.random_range(0.2..5.0),
                mult: rng.random_range(1..=2),
            })
            .collect();
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let gain = sign * rng.random_range(0.1..10.0);
        let Ok(tf) = RationalTransferFunction::new(gain, real, complex) else {
            continue;
        };
        let deg = tf.denominator_degree();
        let num_deg = rng.random_range(0..deg);
        let numerator: Vec<f64> = (0..=num_deg).map(|_| rng.random_range(-2.0..2.0)).collect();
        if numerator[num_deg].abs() < 0.1 {
            continue;
        }
        if let Ok(tf) = tf.with_numerator(numerator) {
            return tf;
        }
    }
}

/// Random kernel and sorted grid of `n` instants in `(0, horizon]` whose
/// sorted coordinates are separated by at least `min_gap_rel · max`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    n: usize,
    horizon: f64,
    min_gap_rel: f64,
) -> (CoordinateChangeKernel, Vec<f64>) {
    loop {
        let kernel = CoordinateChangeKernel::new(random_tf(rng)).unwrap();
        let mut grid: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..horizon)).collect();
        grid.sort_by(f64::total_cmp);
        if grid.iter().any(|&t| t <= 0.0) || grid.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        if validate_grid(&kernel, &grid, DEFAULT_GRID_EPS.max(min_gap_rel)).is_ok() {
            let c = kernel.coordinates(&grid).unwrap();
            if c.iter().all(|v| v.is_finite()) {
                return (kernel, grid);
            }
        }
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Rank-sum p-value by enumerating every relabelling of the pooled sample.
/// Two-sided: `P(|W - E W| ≥ |w - E W|)`; one-sided: `P(W ≤ w)`.
pub fn permutation_p(a: &[f64], b: &[f64], two_sided: bool) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    // Midranks computed independently by counting.
    let ranks: Vec<f64> = pooled
        .iter()
        .map(|&v| {
            let less = pooled.iter().filter(|&&u| u < v).count() as f64;
            let equal = pooled.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let w_obs: f64 = ranks[..a.len()].iter().sum();
    let mean = a.len() as f64 * (n as f64 + 1.0) / 2.0;
    let all = subsets(n, a.len());
    let hits = all
        .iter()
        .filter(|s| {
            let w: f64 = s.iter().map(|&i| ranks[i]).sum();
            if two_sided {
                (w - mean).abs() >= (w_obs - mean).abs() - 1e-9
            } else {
                w <= w_obs + 1e-9
            }
        })
        .count();
    hits as f64 / all.len() as f64
}
