//! Single-instrument U-statistics: the sample moment `m̄`, the order-3
//! covariance kernel `ĥ2` and the regularised variance `σ̄²`.
//!
//! The order-3 sum uses
//! `Σ_{i≠j≠k} m(i,j;g) m(i,k;g*) = Σ_i [S_i(g) S_i(g*) − Σ_{j≠i} m(i,j;g) m(i,j;g*)]`
//! with row sums `S_i(g) = Σ_{j≠i} m(i,j) g(x_i,x_j)`. Kernel values are small
//! integers, so all sums are exact and the only rounding happens in the final
//! division.

use alloc::vec::Vec;

use crate::data::{Beta, TransformedSample};
use crate::error::{Error, Result};
use crate::kernel::{projections, DurationOrder, PairKernel};

/// An indicator on ordered pairs of instrument coordinates.
pub trait PairIndicator {
    fn contains(&self, xi: &[f64], xj: &[f64]) -> bool;
}

/// `g ≡ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllPairs;

/// `g ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPairs;

impl PairIndicator for AllPairs {
    fn contains(&self, _: &[f64], _: &[f64]) -> bool {
        true
    }
}

impl PairIndicator for NoPairs {
    fn contains(&self, _: &[f64], _: &[f64]) -> bool {
        false
    }
}

impl<F: Fn(&[f64], &[f64]) -> bool> PairIndicator for F {
    fn contains(&self, xi: &[f64], xj: &[f64]) -> bool {
        self(xi, xj)
    }
}

/// Which kernel a statistic is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    /// The β-moment `m`.
    Beta,
    /// The transformation moment `m†` at `(y, t)` with anchor `y_tilde`.
    Transformation { y: f64, t: f64, y_tilde: f64 },
}

pub(crate) fn pair_kernel(
    sample: &TransformedSample,
    beta: &Beta,
    moment: Moment,
) -> Result<PairKernel> {
    let obs = sample.observations();
    let proj = projections(obs, beta)?;
    Ok(match moment {
        Moment::Beta => PairKernel::beta_moment(&DurationOrder::new(obs), &proj),
        Moment::Transformation { y, t, y_tilde } => {
            PairKernel::transformation_moment(obs, &proj, y, t, y_tilde)
        }
    })
}

/// `Σ_{i≠j} K_ij` scaled to a mean over ordered pairs.
#[inline]
pub(crate) fn mean_from_sum(n: usize, sum: i64, scale: f64) -> f64 {
    scale * sum as f64 / (n as f64 * (n as f64 - 1.0))
}

/// `ĥ2` from exact integer pieces: `s`, `s_star` are the pair sums of the two
/// weighted kernels and `t3` the order-3 sum. The result is
/// `scale² [t3 n(n−1) − s s* (n−2)] / [n²(n−1)²(n−2)]`.
#[inline]
pub(crate) fn covariance_from_sums(n: usize, s: i64, s_star: i64, t3: i64, scale2: f64) -> f64 {
    let n128 = n as i128;
    let num = t3 as i128 * n128 * (n128 - 1) - s as i128 * s_star as i128 * (n128 - 2);
    let nf = n as f64;
    scale2 * num as f64 / (nf * nf * (nf - 1.0) * (nf - 1.0) * (nf - 2.0))
}

fn mask<G: PairIndicator + ?Sized>(sample: &TransformedSample, g: &G) -> Vec<bool> {
    let n = sample.n();
    let mut m = alloc::vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[i * n + j] = g.contains(sample.coords(i), sample.coords(j));
            }
        }
    }
    m
}

/// Row sums `S_i(g)` in kernel units, plus their total.
fn row_sums(k: &PairKernel, mask: &[bool]) -> (Vec<i64>, i64) {
    let n = k.n();
    let rows: Vec<i64> = (0..n)
        .map(|i| {
            k.row(i)
                .iter()
                .zip(&mask[i * n..(i + 1) * n])
                .map(|(&v, &on)| if on { v as i64 } else { 0 })
                .sum()
        })
        .collect();
    let total = rows.iter().sum();
    (rows, total)
}

fn check_n(n: usize, required: usize) -> Result<()> {
    if n < required {
        Err(Error::TooFewObservations { required, got: n })
    } else {
        Ok(())
    }
}

/// `m̄ = [n(n−1)]^{-1} Σ_{i≠j} m(W_i, W_j) g(x_i, x_j)` for either kernel.
pub fn mbar_with<G: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    moment: Moment,
    g: &G,
) -> Result<f64> {
    check_n(sample.n(), 2)?;
    let k = pair_kernel(sample, beta, moment)?;
    let (_, total) = row_sums(&k, &mask(sample, g));
    Ok(mean_from_sum(sample.n(), total, k.scale()))
}

/// `ĥ2(g, g*)` for either kernel.
pub fn h2hat_with<G: PairIndicator + ?Sized, H: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    moment: Moment,
    g: &G,
    g_star: &H,
) -> Result<f64> {
    check_n(sample.n(), 3)?;
    let k = pair_kernel(sample, beta, moment)?;
    Ok(h2hat_kernel(&k, &mask(sample, g), &mask(sample, g_star)))
}

fn h2hat_kernel(k: &PairKernel, mg: &[bool], mh: &[bool]) -> f64 {
    let n = k.n();
    let (sg, tg) = row_sums(k, mg);
    let (sh, th) = row_sums(k, mh);
    let mut t3: i64 = sg.iter().zip(&sh).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            if mg[i * n + j] && mh[i * n + j] {
                let v = k.units(i, j) as i64;
                t3 -= v * v;
            }
        }
    }
    covariance_from_sums(n, tg, th, t3, k.scale() * k.scale())
}

/// `σ̄² = σ̂²(g) + ε σ̂²(1)` for either kernel. Negative finite-sample values
/// of `σ̂²` are floored at zero.
pub fn sigma_bar2_with<G: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    moment: Moment,
    g: &G,
    epsilon: f64,
) -> Result<f64> {
    check_n(sample.n(), 3)?;
    let k = pair_kernel(sample, beta, moment)?;
    let mg = mask(sample, g);
    let all = mask(sample, &AllPairs);
    let own = h2hat_kernel(&k, &mg, &mg).max(0.0);
    let overall = h2hat_kernel(&k, &all, &all).max(0.0);
    Ok(own + epsilon * overall)
}

/// Sample moment of the β-kernel.
pub fn mbar<G: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    g: &G,
) -> Result<f64> {
    mbar_with(sample, beta, Moment::Beta, g)
}

/// Order-3 covariance kernel of the β-moment; `σ̂²(g) = h2hat(g, g)`.
pub fn h2hat<G: PairIndicator + ?Sized, H: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    g: &G,
    g_star: &H,
) -> Result<f64> {
    h2hat_with(sample, beta, Moment::Beta, g, g_star)
}

/// Regularised variance of the β-moment.
pub fn sigma_bar2<G: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    g: &G,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(crate::error::invalid!("epsilon must be positive"));
    }
    sigma_bar2_with(sample, beta, Moment::Beta, g, epsilon)
}
