use std::fs;
use std::path::PathBuf;

use censorbound::config::{Command, RunConfig};
use censorbound::output::{Payload, ResultBundle};
use censorbound::runners::{median_duration, run};

fn config(text: &str) -> RunConfig {
    RunConfig::from_json_str(text, "test.json", None).unwrap()
}

fn stanford() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data/stanford_heart.csv")
        .display()
        .to_string()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

const MONTECARLO: &str = r#"{
  "dgp": {"model": "dgp1", "n": 60},
  "replications": 6,
  "seed": 21,
  "tuning": {"n_reps": 200, "r_max": 2}
}"#;

/// Reloads the bundle from JSON, re-runs its embedded config and checks the
/// rewritten JSON is identical.
fn assert_reproducible(bundle: &ResultBundle, command: Command) {
    let json = bundle.to_json().unwrap();
    let reloaded = ResultBundle::from_json(&json).unwrap();
    assert_eq!(reloaded.payload, bundle.payload);
    let again = run(&reloaded.config, command).unwrap();
    assert_eq!(again.seed, bundle.seed);
    assert_eq!(again.to_json().unwrap(), json);
}

#[test]
fn montecarlo_is_identical_across_thread_counts() {
    let cfg = config(MONTECARLO);
    let outs: Vec<String> = [1, 4, 8]
        .iter()
        .map(|&t| {
            in_pool(t, || {
                run(&cfg, Command::Montecarlo).unwrap().to_json().unwrap()
            })
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
}

#[test]
fn montecarlo_bundle_reproduces() {
    let b = run(&config(MONTECARLO), Command::Montecarlo).unwrap();
    let Payload::Montecarlo(p) = &b.payload else {
        panic!()
    };
    assert_eq!(p.replications, 6);
    assert_eq!(p.runs.len(), 6);
    assert!(p.runs.iter().enumerate().all(|(i, r)| r.index == i));
    for (k, row) in p.rows.iter().enumerate() {
        let count = p.runs.iter().filter(|r| r.reject[k]).count();
        assert_eq!(row.rejections, count);
        let f = count as f64 / 6.0;
        assert_eq!(row.frequency, f);
        assert_eq!(row.std_error, (f * (1.0 - f) / 6.0).sqrt());
    }
    assert_reproducible(&b, Command::Montecarlo);
    // another seed gives other samples
    let other = run(&config(MONTECARLO), Command::Montecarlo);
    let mut cfg = config(MONTECARLO);
    cfg.seed = Some(22);
    let c = run(&cfg, Command::Montecarlo).unwrap();
    let Payload::Montecarlo(q) = &c.payload else {
        panic!()
    };
    assert_ne!(p.runs[0].sample_seed, q.runs[0].sample_seed);
    assert_eq!(other.unwrap().to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn identify_bundle_reproduces_and_is_finite() {
    let cfg = config(
        r#"{
  "dgp": {"model": "model1", "support": "i"},
  "grid": {"signs": [1], "free": [{"lo": -2, "hi": 8, "step": 0.1}]},
  "population": {"draws_per_point": 4000},
  "y_grid": [0.5, 1, 2, 4]
}"#,
    );
    let b = run(&cfg, Command::Identify).unwrap();
    let Payload::Identify(p) = &b.payload else {
        panic!()
    };
    assert_eq!(p.support_points, 22);
    assert!(p.censoring_rates.iter().all(|&r| r == 0.0));
    assert!(p.bound.members().any(|m| (m[1] - 3.0).abs() < 1e-9));
    assert_eq!(p.bound.envelope.len(), 4);
    assert!(!b.to_json().unwrap().contains("NaN"));
    assert_reproducible(&b, Command::Identify);
}

/// One `X1` point leaves only the `X2` pair, which pins down the sign of
/// `beta2` and nothing else.
#[test]
fn single_support_point_without_censoring_is_uninformative() {
    let cfg = config(
        r#"{
  "dgp": {"model": "model1", "x1": {"law": "grid", "lo": 0, "hi": 0, "step": 1}, "alpha0": "inf"},
  "grid": {"signs": [1], "free": [{"lo": 0.5, "hi": 6, "step": 0.5}]},
  "population": {"draws_per_point": 2000},
  "y_grid": [1]
}"#,
    );
    let b = run(&cfg, Command::Identify).unwrap();
    let Payload::Identify(p) = &b.payload else {
        panic!()
    };
    assert!(p.bound.uninformative);
    assert!(p.bound.member.iter().all(|&m| m));
}

#[test]
fn test_confset_and_joint_on_a_simulated_sample() {
    let base =
        r#""dgp": {"model": "dgp1", "n": 50, "seed": 3}, "tuning": {"n_reps": 300, "r_max": 2}"#;
    let t = run(
        &config(&format!(r#"{{{base}, "beta": [1, 3]}}"#)),
        Command::Test,
    )
    .unwrap();
    let Payload::Test(tp) = &t.payload else {
        panic!()
    };
    assert_eq!(tp.sample.n, 50);
    assert_reproducible(&t, Command::Test);

    let grid = r#""grid": {"signs": [1], "free": [{"lo": 0, "hi": 6, "step": 1.5}]}"#;
    let c = run(&config(&format!("{{{base}, {grid}}}")), Command::Confset).unwrap();
    let Payload::Confset(cp) = &c.payload else {
        panic!()
    };
    assert_eq!(cp.set.points.len(), 5);
    // the set agrees with point tests at each grid value under common draws
    for p in &cp.set.points {
        let cfg = config(&format!(r#"{{{base}, "beta": [1, {}]}}"#, p.params[1]));
        let Payload::Test(tp) = run(&cfg, Command::Test).unwrap().payload else {
            panic!()
        };
        assert_eq!(
            tp.outcome.reject, p.outcome.reject,
            "beta2 = {}",
            p.params[1]
        );
    }
    assert_reproducible(&c, Command::Confset);

    let joint = r#""grid": {"signs": [1], "free": [{"lo": 1.5, "hi": 3, "step": 1.5}], "t_axes": [{"lo": -1, "hi": 1, "step": 1}]}, "y_grid": [1.0]"#;
    let j = run(&config(&format!("{{{base}, {joint}}}")), Command::Joint).unwrap();
    let Payload::Joint(jp) = &j.payload else {
        panic!()
    };
    assert_eq!(jp.set.points.len(), 6);
    assert_eq!(jp.set.points[0].params.len(), 3);
    // the default normalisation point is the sample median, echoed in the config
    assert!(j.config.y_tilde.is_some());
    assert_eq!(jp.y_tilde, j.config.y_tilde);
    assert_reproducible(&j, Command::Joint);
}

#[test]
fn empirical_bundle_and_series_files() {
    let cfg = config(&format!(
        r#"{{
  "data": {{"path": "{}", "duration": "time", "event": "death", "continuous": ["age"], "discrete": ["transplant"]}},
  "grid": {{"signs": [-1, 1], "free": [{{"lo": -20, "hi": 100, "step": 30}}]}},
  "tuning": {{"n_reps": 200, "r_max": 2}}
}}"#,
        stanford()
    ));
    let b = run(&cfg, Command::Empirical).unwrap();
    let Payload::Empirical(p) = &b.payload else {
        panic!()
    };
    assert_eq!((p.ingest.rows, p.ingest.censored), (103, 28));
    assert_eq!(p.set.points.len(), 10);
    assert_eq!(b.config.y_tilde, Some(p.y_tilde));
    assert_eq!(p.y_tilde, 90.0);
    assert_reproducible(&b, Command::Empirical);

    let dir = tempfile::tempdir().unwrap();
    let files = b.write_to(dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|f| f.file_name().unwrap().to_string_lossy().into())
        .collect();
    assert_eq!(
        names,
        [
            "result.json",
            "run_meta.json",
            "confset_points.csv",
            "projections.csv"
        ]
    );
    let points = fs::read_to_string(dir.path().join("confset_points.csv")).unwrap();
    assert!(points.starts_with("beta1,beta2,statistic,critical_value,accepted\n"));
    assert_eq!(points.lines().count(), 11);
    for f in &files {
        let text = fs::read_to_string(f).unwrap();
        assert!(
            !text.to_lowercase().contains("infinity") && !text.contains("NaN"),
            "{}",
            f.display()
        );
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["command"], "empirical");
}

#[test]
fn median_of_durations() {
    let loaded = censorbound::load_csv(
        &PathBuf::from(stanford()),
        &censorbound::CsvSchema {
            duration: "time".into(),
            event: "death".into(),
            continuous: vec!["age".into()],
            discrete: vec![],
        },
    )
    .unwrap();
    assert_eq!(median_duration(&loaded.sample), 90.0);
}
