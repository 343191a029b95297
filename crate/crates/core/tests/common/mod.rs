#![allow(dead_code)]

use censorbound_core::{transform_continuous, Observation, Sample, TransformedSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random sample: one continuous covariate, one binary covariate,
/// durations on a coarse lattice so ties occur.
pub fn random_sample(rng: &mut ChaCha8Rng, n: usize) -> TransformedSample {
    let obs = (0..n)
        .map(|_| {
            let y0 = rng.random_range(1..6) as f64 * 0.5;
            let d = rng.random_bool(0.7);
            let x1 = rng.random_range(-2.0..2.0);
            let x2 = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            Observation::new(y0, d, vec![x1, x2]).unwrap()
        })
        .collect();
    transform_continuous(Sample::new(obs, 1).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
