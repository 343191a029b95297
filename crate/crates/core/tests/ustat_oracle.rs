//! Fast U-statistics against brute-force double and triple loops.

mod common;

use censorbound_core::engine::MomentSystem;
use censorbound_core::kernel::{projections, DurationOrder, PairKernel};
use censorbound_core::ustat::{h2hat_with, mbar_with, Moment};
use censorbound_core::{
    enumerate_instruments, h2hat, instrument_indicator, m_kernel, mbar, mdagger_kernel, sigma_bar2,
    validate_beta, AllPairs, Beta, InstrumentFamily, InstrumentMode, NoPairs, PairIndicator,
    TransformedSample,
};
use rand::Rng;

fn kernel(s: &TransformedSample, beta: &Beta, moment: Moment, i: usize, j: usize) -> f64 {
    let o = s.observations();
    match moment {
        Moment::Beta => m_kernel(&o[i], &o[j], beta).unwrap(),
        Moment::Transformation { y, t, y_tilde } => {
            mdagger_kernel(&o[i], &o[j], beta, y, t, y_tilde).unwrap()
        }
    }
}

fn naive_mbar<G: PairIndicator>(s: &TransformedSample, beta: &Beta, moment: Moment, g: &G) -> f64 {
    let n = s.n();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && g.contains(s.coords(i), s.coords(j)) {
                sum += kernel(s, beta, moment, i, j);
            }
        }
    }
    sum / (n * (n - 1)) as f64
}

/// Returns `(h2hat, magnitude)` where magnitude is the size of the two terms
/// being differenced, the scale against which relative error is measured.
fn naive_h2hat<G: PairIndicator, H: PairIndicator>(
    s: &TransformedSample,
    beta: &Beta,
    moment: Moment,
    g: &G,
    h: &H,
) -> (f64, f64) {
    let n = s.n();
    let mut triple = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let a = if g.contains(s.coords(i), s.coords(j)) {
                    kernel(s, beta, moment, i, j)
                } else {
                    0.0
                };
                let b = if h.contains(s.coords(i), s.coords(k)) {
                    kernel(s, beta, moment, i, k)
                } else {
                    0.0
                };
                triple += a * b;
            }
        }
    }
    triple /= (n * (n - 1) * (n - 2)) as f64;
    let prod = naive_mbar(s, beta, moment, g) * naive_mbar(s, beta, moment, h);
    (triple - prod, triple.abs() + prod.abs())
}

fn close(fast: f64, naive: f64, magnitude: f64) -> bool {
    (fast - naive).abs() <= 1e-12 * magnitude.max(naive.abs()).max(f64::MIN_POSITIVE)
}

fn random_beta(rng: &mut impl Rng) -> Beta {
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    validate_beta(&[sign, rng.random_range(-3.0..3.0)]).unwrap()
}

fn random_moment(rng: &mut impl Rng) -> Moment {
    if rng.random_bool(0.5) {
        Moment::Beta
    } else {
        Moment::Transformation {
            y: rng.random_range(1..6) as f64 * 0.5,
            t: rng.random_range(-2.0..2.0),
            y_tilde: rng.random_range(1..6) as f64 * 0.5,
        }
    }
}

#[test]
fn fast_paths_match_brute_force_on_200_random_cases() {
    let mut rng = common::rng(11);
    for case in 0..200 {
        let n = rng.random_range(3..=15);
        let s = common::random_sample(&mut rng, n);
        let beta = random_beta(&mut rng);
        let moment = random_moment(&mut rng);
        let fam = enumerate_instruments(InstrumentMode::Mixed, 3, 1, s.sample().discrete_support())
            .unwrap();
        let g = fam.index(rng.random_range(0..fam.len()));
        let h = fam.index(rng.random_range(0..fam.len()));

        let fast = mbar_with(&s, &beta, moment, &g).unwrap();
        let slow = naive_mbar(&s, &beta, moment, &g);
        assert!(
            close(fast, slow, slow.abs()),
            "case {case}: mbar {fast} vs {slow}"
        );

        for (a, b) in [(&g, &h), (&g, &g)] {
            let fast = h2hat_with(&s, &beta, moment, a, b).unwrap();
            let (slow, mag) = naive_h2hat(&s, &beta, moment, a, b);
            assert!(
                close(fast, slow, mag),
                "case {case}: h2hat {fast} vs {slow}"
            );
        }
        let fast = h2hat_with(&s, &beta, moment, &AllPairs, &AllPairs).unwrap();
        let (slow, mag) = naive_h2hat(&s, &beta, moment, &AllPairs, &AllPairs);
        assert!(
            close(fast, slow, mag),
            "case {case}: overall {fast} vs {slow}"
        );
    }
}

#[test]
fn batched_engine_matches_single_instrument_functions() {
    let mut rng = common::rng(5);
    for _ in 0..20 {
        let n = rng.random_range(3..=14);
        let s = common::random_sample(&mut rng, n);
        let beta = random_beta(&mut rng);
        let fam = InstrumentFamily::for_sample(InstrumentMode::Mixed, 2, s.sample()).unwrap();
        let cells = fam.assign(&s);
        let proj = projections(s.observations(), &beta).unwrap();
        let (y, t, yt) = (1.5, 0.3, 1.0);
        let kernels = vec![
            PairKernel::beta_moment(&DurationOrder::new(s.observations()), &proj),
            PairKernel::transformation_moment(s.observations(), &proj, y, t, yt),
        ];
        let sys = MomentSystem::new(&fam, &cells, kernels);
        let moments = [Moment::Beta, Moment::Transformation { y, t, y_tilde: yt }];
        let sel: Vec<(usize, usize)> = (0..2)
            .flat_map(|b| (0..fam.len()).step_by(3).map(move |g| (b, g)))
            .collect();
        let cov = sys.covariance(&sel);
        let d = sel.len();
        for (c1, &(b1, g1)) in sel.iter().enumerate() {
            let gi = fam.index(g1);
            assert_eq!(
                sys.mean(b1, g1),
                mbar_with(&s, &beta, moments[b1], &gi).unwrap()
            );
            let v = h2hat_with(&s, &beta, moments[b1], &gi, &gi).unwrap();
            assert_eq!(sys.variance(b1, g1), v);
            assert_eq!(cov[c1 * d + c1], v);
            for (c2, &(b2, g2)) in sel.iter().enumerate() {
                if b1 == b2 {
                    let gj = fam.index(g2);
                    let (slow, mag) = naive_h2hat(&s, &beta, moments[b1], &gi, &gj);
                    assert!(close(cov[c1 * d + c2], slow, mag));
                }
                assert_eq!(cov[c1 * d + c2], cov[c2 * d + c1]);
            }
        }
        for (b, &m) in moments.iter().enumerate().take(2) {
            let v = h2hat_with(&s, &beta, m, &AllPairs, &AllPairs).unwrap();
            assert_eq!(sys.overall_variance(b), v);
        }
    }
}

#[test]
fn cross_block_covariance_matches_brute_force() {
    let mut rng = common::rng(9);
    let s = common::random_sample(&mut rng, 9);
    let beta = random_beta(&mut rng);
    let fam = InstrumentFamily::for_sample(InstrumentMode::Mixed, 1, s.sample()).unwrap();
    let cells = fam.assign(&s);
    let proj = projections(s.observations(), &beta).unwrap();
    let (y, t, yt) = (2.0, -0.4, 1.5);
    let kernels = vec![
        PairKernel::beta_moment(&DurationOrder::new(s.observations()), &proj),
        PairKernel::transformation_moment(s.observations(), &proj, y, t, yt),
    ];
    let sys = MomentSystem::new(&fam, &cells, kernels);
    let sel: Vec<(usize, usize)> = (0..2)
        .flat_map(|b| (0..fam.len()).map(move |g| (b, g)))
        .collect();
    let cov = sys.covariance(&sel);
    let d = sel.len();
    let n = s.n();
    let mom = [Moment::Beta, Moment::Transformation { y, t, y_tilde: yt }];
    for (c1, &(b1, g1)) in sel.iter().enumerate() {
        for (c2, &(b2, g2)) in sel.iter().enumerate() {
            let (gi, gj) = (fam.index(g1), fam.index(g2));
            let mut triple = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        if i == j || j == k || i == k {
                            continue;
                        }
                        let a = if instrument_indicator(&gi, s.coords(i), s.coords(j)) {
                            kernel(&s, &beta, mom[b1], i, j)
                        } else {
                            0.0
                        };
                        let b = if instrument_indicator(&gj, s.coords(i), s.coords(k)) {
                            kernel(&s, &beta, mom[b2], i, k)
                        } else {
                            0.0
                        };
                        triple += a * b;
                    }
                }
            }
            triple /= (n * (n - 1) * (n - 2)) as f64;
            let prod = naive_mbar(&s, &beta, mom[b1], &gi) * naive_mbar(&s, &beta, mom[b2], &gj);
            assert!(close(
                cov[c1 * d + c2],
                triple - prod,
                triple.abs() + prod.abs()
            ));
        }
    }
}

#[test]
fn documented_examples() {
    use censorbound_core::{transform_continuous, Observation, Sample};
    // two observations, g = 1: both ordered pairs give -1/2
    let s = transform_continuous(
        Sample::new(
            vec![
                Observation::new(1.0, true, vec![0.5, 0.0]).unwrap(),
                Observation::new(2.0, true, vec![0.2, 0.0]).unwrap(),
            ],
            1,
        )
        .unwrap(),
    )
    .unwrap();
    let b = validate_beta(&[1.0, 0.0]).unwrap();
    assert_eq!(mbar(&s, &b, &AllPairs).unwrap(), -0.5);
    assert_eq!(mbar(&s, &b, &NoPairs).unwrap(), 0.0);
    assert!(h2hat(&s, &b, &AllPairs, &AllPairs).is_err());

    // all observations censored: m = +1/2 on every pair, so with g picking
    // the 10 ordered pairs with x_i > x_j out of 20, mbar = 1/4
    let obs: Vec<Observation> = (0..5)
        .map(|i| Observation::new(1.0 + i as f64, false, vec![i as f64, 0.0]).unwrap())
        .collect();
    let s = transform_continuous(Sample::new(obs, 1).unwrap()).unwrap();
    let up = |xi: &[f64], xj: &[f64]| xi[0] > xj[0];
    assert_eq!(mbar(&s, &b, &up).unwrap(), 0.25);
    assert_eq!(mbar(&s, &b, &AllPairs).unwrap(), 0.5);
    // constant kernel over all pairs: zero variance
    assert_eq!(h2hat(&s, &b, &AllPairs, &AllPairs).unwrap(), 0.0);
    let (v, mag) = naive_h2hat(&s, &b, Moment::Beta, &up, &up);
    assert!(close(h2hat(&s, &b, &up, &up).unwrap(), v, mag));
    let eps = 1e-3;
    let overall = h2hat(&s, &b, &AllPairs, &AllPairs).unwrap().max(0.0);
    assert_eq!(sigma_bar2(&s, &b, &NoPairs, eps).unwrap(), eps * overall);
    assert!((sigma_bar2(&s, &b, &AllPairs, eps).unwrap() - (1.0 + eps) * overall).abs() < 1e-15);
}

#[test]
fn zero_instrument_and_constant_kernel() {
    let mut rng = common::rng(3);
    let s = common::random_sample(&mut rng, 8);
    let b = validate_beta(&[1.0, 0.5]).unwrap();
    assert_eq!(h2hat(&s, &b, &NoPairs, &AllPairs).unwrap(), 0.0);
    assert_eq!(h2hat(&s, &b, &NoPairs, &NoPairs).unwrap(), 0.0);
    // every observation identical: kernel constant over all pairs
    use censorbound_core::{transform_continuous, Observation, Sample};
    let obs: Vec<Observation> = (0..6)
        .map(|i| Observation::new(2.0, true, vec![i as f64, 1.0]).unwrap())
        .collect();
    let s = transform_continuous(Sample::new(obs, 1).unwrap()).unwrap();
    let b = validate_beta(&[1.0, 0.0]).unwrap();
    let only_same = |xi: &[f64], xj: &[f64]| xi[0] > xj[0];
    // m = +1/2 on every pair with x_i > x_j (tie in durations: Y1i >= Y0j)
    assert_eq!(mbar(&s, &b, &only_same).unwrap(), 0.25);
    let eps = 1e-3;
    assert_eq!(
        sigma_bar2(&s, &b, &NoPairs, eps).unwrap(),
        eps * h2hat(&s, &b, &AllPairs, &AllPairs).unwrap().max(0.0)
    );
}
