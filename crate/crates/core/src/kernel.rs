//! Pairwise moment kernels.
//!
//! Both kernels take values on a small integer lattice (`m` in `{-1/2, 1/2}`,
//! `m†` in `{-2,...,2}`), so matrices of kernel values are stored as `i8`
//! multiples of a scale and sums over pairs are exact.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::{dot, Beta, Observation};
use crate::error::{Error, Result};

fn check_dims(wi: &Observation, wj: &Observation, k: usize) -> Result<()> {
    for w in [wi, wj] {
        if w.k() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: w.k(),
            });
        }
    }
    Ok(())
}

/// `m` in units of one half: `+1` or `-1`.
#[inline]
pub(crate) fn m_units(wi: &Observation, wj: &Observation, pi: f64, pj: f64) -> i8 {
    let a = (wi.y1_ge(wj.y0) && pi >= pj) as i8;
    let b = (wj.y1_gt(wi.y0) && pj > pi) as i8;
    2 * (a + b) - 1
}

/// `m†` for precomputed projections.
#[inline]
pub(crate) fn mdagger_units(
    wi: &Observation,
    wj: &Observation,
    pi: f64,
    pj: f64,
    y: f64,
    t: f64,
    y_tilde: f64,
) -> i8 {
    let mut v = 0i8;
    if pi - pj >= t {
        v += wi.y1_ge(y) as i8 - (wj.y0 >= y_tilde) as i8;
    }
    if pj - pi >= t {
        v += wj.y1_ge(y) as i8 - (wi.y0 >= y_tilde) as i8;
    }
    v
}

/// `m(W_i, W_j, beta) = -1/2 + I[Y1i >= Y0j] I[xi'b >= xj'b] + I[Y1j > Y0i] I[xj'b > xi'b]`.
pub fn m_kernel(wi: &Observation, wj: &Observation, beta: &Beta) -> Result<f64> {
    m_kernel_direction(wi, wj, beta.as_slice())
}

/// [`m_kernel`] for an arbitrary, not necessarily normalised, index direction.
pub fn m_kernel_direction(wi: &Observation, wj: &Observation, dir: &[f64]) -> Result<f64> {
    check_dims(wi, wj, dir.len())?;
    Ok(0.5 * m_units(wi, wj, dot(&wi.x, dir), dot(&wj.x, dir)) as f64)
}

/// `m†(W_i, W_j, beta, y, t)`: the moment for the hypothesis `T(y) = t` under
/// the normalisation `T(y_tilde) = 0`.
pub fn mdagger_kernel(
    wi: &Observation,
    wj: &Observation,
    beta: &Beta,
    y: f64,
    t: f64,
    y_tilde: f64,
) -> Result<f64> {
    mdagger_kernel_direction(wi, wj, beta.as_slice(), y, t, y_tilde)
}

/// [`mdagger_kernel`] for an arbitrary index direction.
pub fn mdagger_kernel_direction(
    wi: &Observation,
    wj: &Observation,
    dir: &[f64],
    y: f64,
    t: f64,
    y_tilde: f64,
) -> Result<f64> {
    check_dims(wi, wj, dir.len())?;
    let (pi, pj) = (dot(&wi.x, dir), dot(&wj.x, dir));
    Ok(mdagger_units(wi, wj, pi, pj, y, t, y_tilde) as f64)
}

/// `x_i' beta` for every observation.
pub fn projections(obs: &[Observation], beta: &Beta) -> Result<Vec<f64>> {
    obs.iter()
        .map(|o| {
            if o.k() != beta.k() {
                Err(Error::DimensionMismatch {
                    expected: beta.k(),
                    got: o.k(),
                })
            } else {
                Ok(beta.index(&o.x))
            }
        })
        .collect()
}

/// The two β-independent duration comparisons used by `m`, cached per sample.
#[derive(Debug, Clone)]
pub struct DurationOrder {
    n: usize,
    /// bit 0: `I[Y1i >= Y0j]`, bit 1: `I[Y1i > Y0j]`; row `i`, column `j`.
    bits: Vec<u8>,
}

impl DurationOrder {
    pub fn new(obs: &[Observation]) -> Self {
        let n = obs.len();
        let mut bits = vec![0u8; n * n];
        for (i, wi) in obs.iter().enumerate() {
            for (j, wj) in obs.iter().enumerate() {
                bits[i * n + j] = wi.y1_ge(wj.y0) as u8 | ((wi.y1_gt(wj.y0) as u8) << 1);
            }
        }
        DurationOrder { n, bits }
    }

    #[inline]
    fn m_units(&self, i: usize, j: usize, pi: f64, pj: f64) -> i8 {
        let ge = self.bits[i * self.n + j] & 1 == 1;
        let gt = self.bits[j * self.n + i] & 2 == 2;
        2 * ((ge && pi >= pj) as i8 + (gt && pj > pi) as i8) - 1
    }
}

/// Kernel values for every ordered pair; the real value is `units * scale`.
/// Diagonal entries are zero.
#[derive(Debug, Clone)]
pub struct PairKernel {
    n: usize,
    scale: f64,
    units: Vec<i8>,
}

impl PairKernel {
    /// The β-moment `m` for projections `proj`.
    pub fn beta_moment(order: &DurationOrder, proj: &[f64]) -> Self {
        let n = order.n;
        assert_eq!(proj.len(), n);
        let mut units = vec![0i8; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    units[i * n + j] = order.m_units(i, j, proj[i], proj[j]);
                }
            }
        }
        PairKernel {
            n,
            scale: 0.5,
            units,
        }
    }

    /// The transformation moment `m†` at `(y, t)`.
    pub fn transformation_moment(
        obs: &[Observation],
        proj: &[f64],
        y: f64,
        t: f64,
        y_tilde: f64,
    ) -> Self {
        let n = obs.len();
        assert_eq!(proj.len(), n);
        let mut units = vec![0i8; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    units[i * n + j] =
                        mdagger_units(&obs[i], &obs[j], proj[i], proj[j], y, t, y_tilde);
                }
            }
        }
        PairKernel {
            n,
            scale: 1.0,
            units,
        }
    }

    /// Arbitrary integer kernel, mainly for tests.
    pub fn from_units(n: usize, scale: f64, mut units: Vec<i8>) -> Self {
        assert_eq!(units.len(), n * n);
        for i in 0..n {
            units[i * n + i] = 0;
        }
        PairKernel { n, scale, units }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn units(&self, i: usize, j: usize) -> i8 {
        self.units[i * self.n + j]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.units(i, j) as f64 * self.scale
    }

    pub(crate) fn row(&self, i: usize) -> &[i8] {
        &self.units[i * self.n..(i + 1) * self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_beta;

    fn w(y0: f64, d: bool, x: f64) -> Observation {
        Observation::new(y0, d, alloc::vec![x, 0.0]).unwrap()
    }

    fn b() -> Beta {
        validate_beta(&[1.0, 0.0]).unwrap()
    }

    #[test]
    fn m_examples() {
        assert_eq!(
            m_kernel(&w(5.0, true, 1.0), &w(2.0, true, 0.0), &b()).unwrap(),
            0.5
        );
        assert_eq!(
            m_kernel(&w(2.0, true, 1.0), &w(5.0, true, 0.0), &b()).unwrap(),
            -0.5
        );
        assert_eq!(
            m_kernel(&w(1.0, false, 1.0), &w(9.0, true, 0.0), &b()).unwrap(),
            0.5
        );
        assert_eq!(
            m_kernel(&w(2.0, true, 0.0), &w(5.0, true, 0.0), &b()).unwrap(),
            -0.5
        );
    }

    #[test]
    fn mdagger_examples() {
        let f = |wi, wj, t| mdagger_kernel(&wi, &wj, &b(), 90.0, t, 90.0).unwrap();
        assert_eq!(f(w(100.0, true, 1.0), w(50.0, true, 0.0), 0.0), 1.0);
        assert_eq!(f(w(100.0, true, 1.0), w(50.0, true, 0.0), 1.5), 0.0);
        assert_eq!(f(w(10.0, false, 1.0), w(95.0, true, 0.0), 0.5), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Observation::new(1.0, true, alloc::vec![1.0]).unwrap();
        assert!(m_kernel(&a, &a, &b()).is_err());
    }

    #[test]
    fn cached_kernel_matches_direct() {
        let obs = [
            w(1.0, true, 0.3),
            w(2.0, false, 0.3),
            w(2.0, true, -1.0),
            w(0.5, false, 2.0),
        ];
        let proj = projections(&obs, &b()).unwrap();
        let k = PairKernel::beta_moment(&DurationOrder::new(&obs), &proj);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(k.value(i, j), m_kernel(&obs[i], &obs[j], &b()).unwrap());
                }
            }
        }
    }
}
