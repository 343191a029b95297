//! Population bounds and the simulation designs.

use censorbound_core::{
    compute_bi, compute_tbi, default_tolerance, population_table, simulate_dgp, Axis, DgpSpec,
    ModelId, ParamGrid, PopulationTable, X1Law,
};

fn table(model: ModelId, draws: usize) -> (DgpSpec, PopulationTable) {
    let spec = DgpSpec::new(model).with_seed(1);
    let t = population_table(&spec, draws).unwrap();
    (spec, t)
}

fn beta_grid() -> ParamGrid {
    ParamGrid::new(vec![1.0], vec![Axis::new(-1.0, 7.0, 0.05).unwrap()]).unwrap()
}

#[test]
fn censoring_rates_of_the_designs() {
    let rate = |m| {
        let s = simulate_dgp(&DgpSpec::new(m).with_seed(2), 100_000).unwrap();
        s.censoring_rate()
    };
    assert_eq!(rate(ModelId::Model1), 0.0);
    assert!(
        (rate(ModelId::Dgp1) - 0.16).abs() < 0.02,
        "{}",
        rate(ModelId::Dgp1)
    );
    assert!(
        (rate(ModelId::Dgp2) - 0.30).abs() < 0.03,
        "{}",
        rate(ModelId::Dgp2)
    );
}

#[test]
fn gaussian_design_has_one_continuous_covariate() {
    let s = simulate_dgp(&DgpSpec::new(ModelId::Dgp1), 50).unwrap();
    assert_eq!(s.p(), 1);
    assert_eq!(s.discrete_support().len(), 2);
    let s = simulate_dgp(&DgpSpec::new(ModelId::Model1), 50).unwrap();
    assert_eq!(s.p(), 0);
    assert_eq!(s.discrete_support().len(), 22);
}

#[test]
fn survival_probabilities_are_ordered() {
    let (_, t) = table(ModelId::Model3, 4000);
    for s in 0..t.len() {
        for c in [0.1, 1.0, 5.0] {
            assert!(t.p_y1_ge(s, c) >= t.p_y0_ge_same_block(s, c));
        }
    }
    let (_, t) = table(ModelId::Model1, 4000);
    for s in 0..t.len() {
        assert_eq!(t.p_y1_ge(s, 1.0), t.p_y0_ge_same_block(s, 1.0));
    }
}

#[test]
fn same_point_pair_probability_is_near_half_without_censoring() {
    let (_, t) = table(ModelId::Model1, 20_000);
    let tol = 4.0 * (0.25 / 20_000f64).sqrt();
    for s in 0..t.len() {
        assert!(
            (t.pair_prob(s, s) - 0.5).abs() < tol,
            "{}",
            t.pair_prob(s, s)
        );
    }
}

#[test]
fn more_censoring_raises_pair_probabilities() {
    // the designs share latent outcomes draw by draw
    let (_, t2) = table(ModelId::Model2, 3000);
    let (_, t3) = table(ModelId::Model3, 3000);
    for s in 0..t2.len() {
        for u in 0..t2.len() {
            assert!(t3.pair_prob(s, u) >= t2.pair_prob(s, u));
        }
    }
}

#[test]
fn true_beta_in_every_bound_and_bounds_nest() {
    let grid = beta_grid();
    let mut prev: Option<Vec<bool>> = None;
    for model in [ModelId::Model1, ModelId::Model2, ModelId::Model3] {
        for sup in ["i", "ii"] {
            let spec = DgpSpec::new(model).with_x1(X1Law::preset(sup).unwrap());
            let t = population_table(&spec, 5000).unwrap();
            let b = compute_bi(&t, &grid, default_tolerance(5000)).unwrap();
            let truth = spec.true_beta();
            let k = b
                .betas
                .iter()
                .position(|x| (x[1] - truth[1]).abs() < 1e-9)
                .unwrap();
            assert!(b.member[k], "{model:?} {sup}");
            if sup == "i" {
                if let Some(p) = &prev {
                    assert!(
                        p.iter().zip(&b.member).all(|(&a, &c)| !a || c),
                        "{model:?} does not contain the previous bound"
                    );
                }
                prev = Some(b.member.clone());
            }
        }
    }
}

#[test]
fn envelope_below_truth_nondecreasing_and_zero_at_anchor() {
    let y: Vec<f64> = (1..=24).map(|i| i as f64 * 0.25).collect();
    let t_axis = Axis::new(-10.0, 10.0, 0.01).unwrap();
    for model in [ModelId::Model1, ModelId::Model2, ModelId::Model3] {
        let (spec, t) = table(model, 5000);
        let b = compute_bi(&t, &beta_grid(), default_tolerance(5000)).unwrap();
        let y_tilde = 1.0;
        let r = compute_tbi(&t, &b, Some(&spec), &y, &t_axis, y_tilde).unwrap();
        let mut last = f64::NEG_INFINITY;
        for e in &r.envelope {
            let lower = if e.unbounded_below {
                f64::NEG_INFINITY
            } else {
                e.lower.unwrap()
            };
            assert!(lower <= e.truth.unwrap() + 0.05, "{model:?} y {}", e.y);
            assert!(lower >= last, "{model:?} y {}", e.y);
            last = lower;
        }
        let at = compute_tbi(&t, &b, Some(&spec), &[y_tilde], &t_axis, y_tilde).unwrap();
        let e = &at.envelope[0];
        assert!(e.unbounded_below || e.lower.unwrap() < 0.0);
    }
}

#[test]
fn empty_bound_gives_empty_envelope() {
    let (spec, t) = table(ModelId::Model1, 2000);
    // only wrong-sign slopes: B_I is empty
    let grid = ParamGrid::new(vec![1.0], vec![Axis::new(-3.0, -1.0, 0.5).unwrap()]).unwrap();
    let b = compute_bi(&t, &grid, 0.0).unwrap();
    assert_eq!(b.members().count(), 0);
    assert!(b.projections[0].is_none());
    let r = compute_tbi(
        &t,
        &b,
        Some(&spec),
        &[2.0],
        &Axis::new(-1.0, 1.0, 0.5).unwrap(),
        1.0,
    )
    .unwrap();
    assert_eq!(r.envelope[0].lower, None);
    assert!(!r.envelope[0].unbounded_below);
}

#[test]
fn normal_x1_is_rejected_for_population_bounds() {
    assert!(population_table(&DgpSpec::new(ModelId::Dgp1), 100).is_err());
}
