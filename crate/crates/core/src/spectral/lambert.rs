//! Real branches of the Lambert W function, `z = W(z) e^{W(z)}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `-1/e`, the branch point.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

const MAX_ITER: usize = 50;

/// Real branches: principal (`W ≥ -1`, `z ≥ -1/e`) and minor (`W ≤ -1`,
/// `-1/e ≤ z < 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambertBranch {
    Principal,
    Minor,
}

/// Evaluates `W(z)` on the requested real branch by Halley iteration.
pub fn lambert_w(branch: LambertBranch, z: f64) -> Result<f64> {
    if z.is_nan() || z < BRANCH_POINT {
        return Err(Error::Domain {
            what: "Lambert W needs z >= -1/e",
            value: z,
        });
    }
    if z == BRANCH_POINT {
        return Ok(-1.0);
    }
    match branch {
        LambertBranch::Principal => {
            if z == 0.0 {
                return Ok(0.0);
            }
            if z.is_infinite() {
                return Ok(f64::INFINITY);
            }
            Ok(halley(z, principal_guess(z), branch))
        }
        LambertBranch::Minor => {
            if z >= 0.0 {
                return Err(Error::Domain {
                    what: "minor Lambert W branch needs -1/e <= z < 0",
                    value: z,
                });
            }
            Ok(halley(z, minor_guess(z), branch))
        }
    }
}

/// Series in `p = ±sqrt(2(ez + 1))` around the branch point.
fn branch_point_series(z: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * (std::f64::consts::E * z + 1.0)).max(0.0).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn principal_guess(z: f64) -> f64 {
    if z < -0.25 {
        branch_point_series(z, 1.0)
    } else if z < 3.0 {
        // Padé-like start accurate to a few percent on [-0.25, 3).
        let l = z.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = z.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}

fn minor_guess(z: f64) -> f64 {
    if z < -0.25 {
        branch_point_series(z, -1.0)
    } else {
        let l1 = (-z).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn halley(z: f64, mut w: f64, branch: LambertBranch) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let mut next = w - step;
        // Keep iterates on the requested side of the branch point.
        match branch {
            LambertBranch::Principal if next < -1.0 => next = 0.5 * (w - 1.0),
            LambertBranch::Minor if next > -1.0 => next = 0.5 * (w - 1.0),
            _ => {}
        }
        if !next.is_finite() {
            break;
        }
        let converged = (next - w).abs() <= 1e-15 * next.abs().max(1.0);
        w = next;
        if converged {
            break;
        }
    }
    w
}
