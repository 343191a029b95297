//! Observations, samples, the Gaussian covariate transform and parameter
//! normalisation.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::math;

/// One censored duration record.
///
/// `y0` is the observed duration `min(Y*, C)`, `d` is true when the event was
/// observed. The latent `Y1` is `y0` when `d` holds and `+inf` otherwise; it is
/// never stored, use [`Observation::y1_ge`] and [`Observation::y1_gt`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Observation {
    pub y0: f64,
    pub d: bool,
    pub x: Vec<f64>,
}

impl Observation {
    pub fn new(y0: f64, d: bool, x: Vec<f64>) -> Result<Self> {
        let obs = Observation { y0, d, x };
        obs.check(0)?;
        Ok(obs)
    }

    fn check(&self, index: usize) -> Result<()> {
        if !self.y0.is_finite() || self.y0 <= 0.0 {
            return Err(Error::InvalidObservation {
                index,
                reason: "duration must be finite and positive",
            });
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                index,
                reason: "covariates must be finite",
            });
        }
        Ok(())
    }

    /// `I[Y1 >= c]`.
    #[inline]
    pub fn y1_ge(&self, c: f64) -> bool {
        !self.d || self.y0 >= c
    }

    /// `I[Y1 > c]`.
    #[inline]
    pub fn y1_gt(&self, c: f64) -> bool {
        !self.d || self.y0 > c
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }
}

/// A tuple of discrete covariate values compared by exact equality.
///
/// Values are stored with `-0.0` folded into `0.0` so equality and hashing
/// agree with numeric equality. Ordering is lexicographic.
#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscreteTuple(Vec<f64>);

impl DiscreteTuple {
    pub fn new(values: &[f64]) -> Self {
        DiscreteTuple(
            values
                .iter()
                .map(|&v| if v == 0.0 { 0.0 } else { v })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when `values` equals this tuple coordinate-wise.
    pub fn matches(&self, values: &[f64]) -> bool {
        self.0.len() == values.len() && self.0.iter().zip(values).all(|(a, b)| a == b)
    }
}

impl PartialEq for DiscreteTuple {
    fn eq(&self, other: &Self) -> bool {
        self.matches(&other.0)
    }
}

impl Eq for DiscreteTuple {}

impl PartialOrd for DiscreteTuple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DiscreteTuple {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

/// An i.i.d. sample. The first `p` covariates are continuous, the remaining
/// `k - p` discrete.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sample {
    observations: Vec<Observation>,
    p: usize,
    k: usize,
    discrete_support: Vec<DiscreteTuple>,
}

impl Sample {
    /// Builds a sample whose discrete support is the set of distinct discrete
    /// tuples present, in ascending order.
    pub fn new(observations: Vec<Observation>, p: usize) -> Result<Self> {
        let k = Self::validate(&observations, p)?;
        let mut support: Vec<DiscreteTuple> = observations
            .iter()
            .map(|o| DiscreteTuple::new(&o.x[p..]))
            .collect();
        support.sort();
        support.dedup();
        Ok(Sample {
            observations,
            p,
            k,
            discrete_support: support,
        })
    }

    /// Builds a sample with a declared discrete support, which must contain
    /// every tuple present in the data.
    pub fn with_support(
        observations: Vec<Observation>,
        p: usize,
        support: Vec<DiscreteTuple>,
    ) -> Result<Self> {
        let k = Self::validate(&observations, p)?;
        let mut support = support;
        support.sort();
        support.dedup();
        if support.iter().any(|t| t.len() != k - p) {
            return Err(invalid!(
                "declared support tuples must have length {}",
                k - p
            ));
        }
        for (i, o) in observations.iter().enumerate() {
            let t = DiscreteTuple::new(&o.x[p..]);
            if support.binary_search(&t).is_err() {
                return Err(Error::InvalidObservation {
                    index: i,
                    reason: "discrete covariates outside the declared support",
                });
            }
        }
        Ok(Sample {
            observations,
            p,
            k,
            discrete_support: support,
        })
    }

    fn validate(observations: &[Observation], p: usize) -> Result<usize> {
        let k = observations.first().map_or(p, |o| o.k());
        if p > k {
            return Err(invalid!("p = {p} exceeds covariate dimension {k}"));
        }
        for (i, o) in observations.iter().enumerate() {
            if o.k() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: o.k(),
                });
            }
            o.check(i)?;
        }
        Ok(k)
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn discrete_support(&self) -> &[DiscreteTuple] {
        &self.discrete_support
    }

    /// Position of observation `i`'s discrete tuple in the support.
    pub fn discrete_index(&self, i: usize) -> usize {
        let o = &self.observations[i];
        self.discrete_support
            .binary_search_by(|t| cmp_slice(t.values(), &o.x[self.p..]))
            .expect("support contains every observed tuple")
    }

    pub fn censored_count(&self) -> usize {
        self.observations.iter().filter(|o| !o.d).count()
    }

    /// Fraction of censored observations (0 for an empty sample).
    pub fn censoring_rate(&self) -> f64 {
        if self.observations.is_empty() {
            0.0
        } else {
            self.censored_count() as f64 / self.n() as f64
        }
    }
}

fn cmp_slice(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let y = if *y == 0.0 { 0.0 } else { *y };
        match x.total_cmp(&y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Fitted map `x -> Phi(S^{-1/2} (x - mean))` for the continuous block.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContinuousTransform {
    pub mean: Vec<f64>,
    /// `S^{-1/2}`, row-major `p x p`.
    pub inv_sqrt_cov: Vec<f64>,
}

impl ContinuousTransform {
    pub fn p(&self) -> usize {
        self.mean.len()
    }

    /// Maps a continuous block into `(0,1)^p`.
    pub fn apply(&self, xc: &[f64]) -> Vec<f64> {
        let p = self.p();
        assert_eq!(xc.len(), p, "continuous block has the wrong length");
        let centred: Vec<f64> = xc.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        (0..p)
            .map(|r| {
                let row = &self.inv_sqrt_cov[r * p..(r + 1) * p];
                let z: f64 = row.iter().zip(&centred).map(|(a, b)| a * b).sum();
                math::norm_cdf(z)
            })
            .collect()
    }
}

/// A sample together with the instrument coordinates of each observation:
/// transformed continuous block followed by the raw discrete block.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedSample {
    sample: Sample,
    transform: ContinuousTransform,
    coords: Vec<Vec<f64>>,
}

impl TransformedSample {
    pub fn sample(&self) -> &Sample {
        &self.sample
    }

    pub fn transform(&self) -> &ContinuousTransform {
        &self.transform
    }

    /// Instrument coordinates of observation `i`.
    pub fn coords(&self, i: usize) -> &[f64] {
        &self.coords[i]
    }

    pub fn n(&self) -> usize {
        self.sample.n()
    }

    pub fn observations(&self) -> &[Observation] {
        self.sample.observations()
    }
}

/// Fits the Gaussian standardisation of the continuous block (covariance with
/// divisor `n`) and applies it to every observation.
pub fn transform_continuous(sample: Sample) -> Result<TransformedSample> {
    let n = sample.n();
    let p = sample.p();
    if n < 2 {
        return Err(Error::TooFewObservations {
            required: 2,
            got: n,
        });
    }
    let mut mean = vec![0.0; p];
    for o in sample.observations() {
        for (m, v) in mean.iter_mut().zip(&o.x[..p]) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; p * p];
    for o in sample.observations() {
        for a in 0..p {
            let da = o.x[a] - mean[a];
            for b in 0..=a {
                cov[a * p + b] += da * (o.x[b] - mean[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..=a {
            let v = cov[a * p + b] / n as f64;
            cov[a * p + b] = v;
            cov[b * p + a] = v;
        }
    }
    let inv_sqrt_cov = if p == 0 {
        Vec::new()
    } else {
        linalg::inverse_sqrt_spd(&cov, p).ok_or(Error::SingularCovariance)?
    };
    let transform = ContinuousTransform { mean, inv_sqrt_cov };
    let coords = sample
        .observations()
        .iter()
        .map(|o| {
            let mut c = transform.apply(&o.x[..p]);
            c.extend_from_slice(&o.x[p..]);
            c
        })
        .collect();
    Ok(TransformedSample {
        sample,
        transform,
        coords,
    })
}

/// A normalised index coefficient: `|beta_1| = 1`, no intercept.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Beta(Vec<f64>);

impl Beta {
    pub fn sign1(&self) -> f64 {
        self.0[0]
    }

    pub fn rest(&self) -> &[f64] {
        &self.0[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// `x' beta`.
    #[inline]
    pub fn index(&self, x: &[f64]) -> f64 {
        dot(x, &self.0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks the scale normalisation and wraps the vector.
pub fn validate_beta(v: &[f64]) -> Result<Beta> {
    if v.len() < 2 {
        return Err(invalid!(
            "beta needs at least two coordinates, got {}",
            v.len()
        ));
    }
    if v[0] != 1.0 && v[0] != -1.0 {
        return Err(Error::Normalization(v[0]));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(invalid!("beta coordinates must be finite"));
    }
    Ok(Beta(v.to_vec()))
}

/// Location normalisation of the transformation function: `T(y_tilde) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormalizationSpec {
    pub y_tilde: f64,
}

impl NormalizationSpec {
    pub fn new(y_tilde: f64) -> Result<Self> {
        if !y_tilde.is_finite() || y_tilde <= 0.0 {
            return Err(invalid!(
                "y_tilde must be finite and positive, got {y_tilde}"
            ));
        }
        Ok(NormalizationSpec { y_tilde })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(y0: f64, d: bool, x: &[f64]) -> Observation {
        Observation::new(y0, d, x.to_vec()).unwrap()
    }

    #[test]
    fn latent_y1_branches_on_censoring() {
        let c = obs(2.0, false, &[0.0]);
        assert!(c.y1_ge(1e300) && c.y1_gt(1e300));
        let e = obs(2.0, true, &[0.0]);
        assert!(e.y1_ge(2.0) && !e.y1_gt(2.0));
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(Observation::new(0.0, true, vec![]).is_err());
        assert!(Observation::new(-1.0, true, vec![]).is_err());
        assert!(Observation::new(f64::NAN, true, vec![]).is_err());
    }

    #[test]
    fn support_is_sorted_and_distinct() {
        let s = Sample::new(
            vec![
                obs(1.0, true, &[0.3, 1.0]),
                obs(1.0, true, &[0.1, 0.0]),
                obs(1.0, true, &[0.2, -0.0]),
            ],
            1,
        )
        .unwrap();
        assert_eq!(s.discrete_support().len(), 2);
        assert_eq!(s.discrete_index(0), 1);
        assert_eq!(s.discrete_index(2), 0);
    }

    #[test]
    fn declared_support_must_cover_data() {
        let o = vec![obs(1.0, true, &[0.3, 2.0])];
        let sup = vec![DiscreteTuple::new(&[0.0]), DiscreteTuple::new(&[1.0])];
        assert!(Sample::with_support(o, 1, sup).is_err());
    }

    #[test]
    fn transform_uses_divisor_n() {
        // {-1, 0, 1} has variance 2/3 with divisor n, so the whitened values
        // are -/+ sqrt(1.5). Reference values from mpmath at 30 digits.
        let s = Sample::new(
            vec![
                obs(1.0, true, &[-1.0]),
                obs(1.0, true, &[0.0]),
                obs(1.0, true, &[1.0]),
            ],
            1,
        )
        .unwrap();
        let t = transform_continuous(s).unwrap();
        let expect = [0.110_335_680_959_923_4, 0.5, 0.889_664_319_040_076_6];
        for (i, e) in expect.iter().enumerate() {
            assert!(
                (t.coords(i)[0] - e).abs() < 1e-14,
                "{} vs {e}",
                t.coords(i)[0]
            );
        }
    }

    #[test]
    fn value_at_mean_maps_to_half() {
        let s = Sample::new(
            vec![
                obs(1.0, true, &[2.0, 1.0]),
                obs(1.0, true, &[4.0, 0.0]),
                obs(1.0, true, &[3.0, 1.0]),
            ],
            1,
        )
        .unwrap();
        let t = transform_continuous(s).unwrap();
        assert_eq!(t.coords(2)[0], 0.5);
        assert_eq!(t.coords(2)[1], 1.0);
        assert_eq!(t.transform().apply(&[3.0]), vec![0.5]);
    }

    #[test]
    fn collinear_covariates_are_rejected() {
        let s = Sample::new(
            vec![
                obs(1.0, true, &[1.0, 2.0]),
                obs(1.0, true, &[2.0, 4.0]),
                obs(1.0, true, &[3.0, 6.0]),
            ],
            2,
        )
        .unwrap();
        assert_eq!(
            transform_continuous(s).unwrap_err(),
            Error::SingularCovariance
        );
    }

    #[test]
    fn beta_normalisation() {
        assert!(validate_beta(&[1.0, 3.0]).is_ok());
        assert!(validate_beta(&[-1.0, 0.2, -4.0]).is_ok());
        let e = validate_beta(&[0.5, 3.0]).unwrap_err();
        assert!(alloc::format!("{e}").contains("first coordinate must be ±1"));
    }
}
