//! Thin wrappers over `faer` for the few dense operations needed: symmetric
//! eigendecompositions, PSD factors and batched Gaussian draws.

use alloc::vec::Vec;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::math;

/// Relative eigenvalue floor below which a covariance is treated as singular.
const SINGULAR_FLOOR: f64 = 1e-12;

fn to_mat(a: &[f64], dim: usize) -> Mat<f64> {
    Mat::from_fn(dim, dim, |i, j| 0.5 * (a[i * dim + j] + a[j * dim + i]))
}

/// `A^{-1/2}` for a symmetric positive definite row-major `dim x dim` matrix.
/// Returns `None` when the smallest eigenvalue is below `1e-12` times the
/// largest.
pub fn inverse_sqrt_spd(a: &[f64], dim: usize) -> Option<Vec<f64>> {
    let m = to_mat(a, dim);
    let evd = m.self_adjoint_eigen(Side::Lower).ok()?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let max = s[dim - 1];
    if !(max > 0.0) || !(s[0] > SINGULAR_FLOOR * max) {
        return None;
    }
    let mut out = alloc::vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let mut v = 0.0;
            for e in 0..dim {
                v += u[(i, e)] * u[(j, e)] / math::sqrt(s[e]);
            }
            out[i * dim + j] = v;
        }
    }
    Some(out)
}

/// `H = L L'` with `L = Q Lambda_+^{1/2}` restricted to the positive part of
/// the spectrum of the symmetrised input.
#[derive(Debug, Clone)]
pub struct PsdFactor {
    dim: usize,
    /// Positions (ascending eigenvalue order) of the retained eigenpairs.
    positions: Vec<usize>,
    l: Mat<f64>,
    /// Sum of the clipped (negative) eigenvalues' magnitudes.
    pub clipped: f64,
}

impl PsdFactor {
    /// Symmetrises `h` (row-major `dim x dim`), clips negative eigenvalues to
    /// zero and keeps the rest.
    pub fn new(h: &[f64], dim: usize) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite covariance entry".into()));
        }
        if dim == 0 {
            return Ok(PsdFactor {
                dim,
                positions: Vec::new(),
                l: Mat::zeros(0, 0),
                clipped: 0.0,
            });
        }
        let m = to_mat(h, dim);
        let evd = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Numerical("eigendecomposition did not converge".into()))?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut positions = Vec::new();
        let mut clipped = 0.0;
        for e in 0..dim {
            if s[e] > 0.0 {
                positions.push(e);
            } else {
                clipped -= s[e];
            }
        }
        let l = Mat::from_fn(dim, positions.len(), |i, c| {
            let e = positions[c];
            u[(i, e)] * math::sqrt(s[e])
        });
        Ok(PsdFactor {
            dim,
            positions,
            l,
            clipped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.positions.len()
    }

    /// Maps standard normal draws to draws with covariance `L L'`.
    ///
    /// `z` holds `reps` blocks of `dim` values (block `r` is draw `r`); the
    /// coordinate aligned with eigenpair `e` is `z[r * dim + e]`. The output
    /// has the same layout.
    pub fn transform(&self, z: &[f64], reps: usize) -> Vec<f64> {
        let dim = self.dim;
        assert_eq!(z.len(), dim * reps, "draw buffer has the wrong length");
        let mut out = alloc::vec![0.0; dim * reps];
        if self.rank() == 0 || reps == 0 {
            return out;
        }
        let zs = Mat::from_fn(self.rank(), reps, |c, r| z[r * dim + self.positions[c]]);
        let mut v = Mat::<f64>::zeros(dim, reps);
        matmul(&mut v, Accum::Replace, &self.l, &zs, 1.0, Par::Seq);
        for r in 0..reps {
            for i in 0..dim {
                out[r * dim + i] = v[(i, r)];
            }
        }
        out
    }

    /// Reconstructs `L L'` (row-major), for diagnostics and tests.
    pub fn reconstruct(&self) -> Vec<f64> {
        let dim = self.dim;
        let mut out = alloc::vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                let mut v = 0.0;
                for c in 0..self.rank() {
                    v += self.l[(i, c)] * self.l[(j, c)];
                }
                out[i * dim + j] = v;
            }
        }
        out
    }
}
