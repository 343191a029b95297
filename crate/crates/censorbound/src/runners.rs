//! One entry point per command. Each takes a config, resolves it, runs the
//! computation on the current rayon pool and returns a [`ResultBundle`].

use std::fs::File;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use censorbound_core::rng::derive_seed;
use censorbound_core::{
    beta_confidence_set, compute_bi, compute_tbi, joint_confidence_set, joint_lower_envelope,
    population_table, simulate_dgp, transform_continuous, validate_beta, InstrumentFamily, MiTest,
    Sample, TransformedSample,
};
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::csv_io::{read_csv, IngestError, IngestSummary};
use crate::error::RunError;
use crate::output::{
    ConfsetPayload, EmpiricalPayload, IdentifyPayload, MonteCarloPayload, Payload, RejectionRow,
    Replication, ResultBundle, RunMeta, SampleSummary, TestPayload,
};

/// Called with `(done, total)` as units of work finish.
pub type Progress<'a> = &'a (dyn Fn(usize, usize) + Sync);

fn no_progress(_: usize, _: usize) {}

pub fn run(config: &RunConfig, command: Command) -> Result<ResultBundle, RunError> {
    run_with_progress(config, command, &no_progress)
}

pub fn run_with_progress(
    config: &RunConfig,
    command: Command,
    progress: Progress,
) -> Result<ResultBundle, RunError> {
    match command {
        Command::Identify => run_identify(config),
        Command::Test => run_test(config),
        Command::Confset => run_confset(config),
        Command::Joint => run_joint(config),
        Command::Montecarlo => run_montecarlo_with_progress(config, progress),
        Command::Empirical => run_empirical(config),
    }
}

/// Population bounds `B_I` and the `T_{B_I}` envelope for a discrete design.
pub fn run_identify(config: &RunConfig) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let cfg = config.clone().resolve(Command::Identify, None)?;
    let mut spec = cfg.dgp.as_ref().expect("resolved").spec();
    let pop = cfg.population.as_ref().expect("resolved");
    spec.draws_per_point = pop.draws_per_point.expect("resolved");
    let table = population_table(&spec, spec.draws_per_point)?;
    let bound = compute_bi(
        &table,
        cfg.grid.as_ref().expect("resolved"),
        pop.tolerance.expect("resolved"),
    )?;
    let bound = compute_tbi(
        &table,
        &bound,
        Some(&spec),
        cfg.y_grid.as_deref().expect("resolved"),
        cfg.t_axis.as_ref().expect("resolved"),
        cfg.y_tilde.expect("resolved"),
    )?;
    let payload = Payload::Identify(IdentifyPayload {
        support_points: table.len(),
        censoring_rates: (0..table.len()).map(|s| table.censoring_rate(s)).collect(),
        bound,
    });
    Ok(finish(cfg, payload, start))
}

/// A single test of `β`, or of `β` jointly with `T(y_l) = t_l`.
pub fn run_test(config: &RunConfig) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let mut cfg = config.clone().resolve(Command::Test, None)?;
    let (sample, summary, _) = load_sample(&cfg)?;
    let beta = validate_beta(cfg.beta.as_ref().expect("resolved"))?;
    let test = MiTest::new(&sample, &cfg.tuning)?;
    let (y_grid, t) = (
        cfg.y_grid.clone().unwrap_or_default(),
        cfg.t.clone().unwrap_or_default(),
    );
    let outcome = if y_grid.is_empty() {
        test.test(&beta, 0)?
    } else {
        let y_tilde = *cfg
            .y_tilde
            .get_or_insert_with(|| median_duration(sample.sample()));
        test.joint_test(&beta, &y_grid, &t, y_tilde, 0)?
    };
    let payload = Payload::Test(TestPayload {
        sample: summary,
        beta: beta.as_slice().to_vec(),
        y_grid,
        t,
        y_tilde: cfg.y_tilde,
        outcome,
    });
    Ok(finish(cfg, payload, start))
}

/// Confidence set for β over the configured grid.
pub fn run_confset(config: &RunConfig) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let cfg = config.clone().resolve(Command::Confset, None)?;
    let (sample, summary, _) = load_sample(&cfg)?;
    let set = beta_confidence_set(&sample, cfg.grid.as_ref().expect("resolved"), &cfg.tuning)?;
    let payload = Payload::Confset(ConfsetPayload {
        sample: summary,
        instruments: instrument_count(&cfg, sample.sample())?,
        y_grid: Vec::new(),
        y_tilde: None,
        set,
    });
    Ok(finish(cfg, payload, start))
}

/// Joint confidence set for `(β, T(y_1), ..., T(y_q))`.
pub fn run_joint(config: &RunConfig) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let mut cfg = config.clone().resolve(Command::Joint, None)?;
    let (sample, summary, _) = load_sample(&cfg)?;
    let y_tilde = *cfg
        .y_tilde
        .get_or_insert_with(|| median_duration(sample.sample()));
    let y_grid = cfg.y_grid.clone().expect("resolved");
    let set = joint_confidence_set(
        &sample,
        cfg.grid.as_ref().expect("resolved"),
        &y_grid,
        y_tilde,
        &cfg.tuning,
    )?;
    let payload = Payload::Joint(ConfsetPayload {
        sample: summary,
        instruments: instrument_count(&cfg, sample.sample())?,
        y_grid,
        y_tilde: Some(y_tilde),
        set,
    });
    Ok(finish(cfg, payload, start))
}

pub fn run_montecarlo(config: &RunConfig) -> Result<ResultBundle, RunError> {
    run_montecarlo_with_progress(config, &no_progress)
}

/// Rejection frequencies over simulated samples. Replication `r` draws its
/// sample with seed `derive_seed(seed, 0, r)` and its critical values with
/// `derive_seed(seed, 1, r)`, so results do not depend on scheduling.
pub fn run_montecarlo_with_progress(
    config: &RunConfig,
    progress: Progress,
) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let cfg = config.clone().resolve(Command::Montecarlo, None)?;
    let seed = cfg.seed.expect("resolved");
    let reps = cfg.replications.expect("resolved");
    let n = cfg.sample_size();
    let base = cfg.dgp.as_ref().expect("resolved").spec();
    let betas = cfg
        .betas
        .as_ref()
        .expect("resolved")
        .iter()
        .map(|b| validate_beta(b))
        .collect::<Result<Vec<_>, _>>()?;
    let done = AtomicUsize::new(0);
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Replication, RunError> {
            let sample_seed = derive_seed(seed, 0, r as u64);
            let tuning_seed = derive_seed(seed, 1, r as u64);
            let sample = simulate_dgp(&base.clone().with_seed(sample_seed), n)?;
            let censoring_rate = sample.censoring_rate();
            let sample = transform_continuous(sample)?;
            let mut tuning = cfg.tuning.clone();
            tuning.seed = tuning_seed;
            let test = MiTest::new(&sample, &tuning)?;
            let reject = betas
                .iter()
                .enumerate()
                .map(|(b, beta)| Ok(test.test(beta, b as u64)?.reject))
                .collect::<Result<Vec<_>, censorbound_core::Error>>()?;
            progress(done.fetch_add(1, Ordering::Relaxed) + 1, reps);
            Ok(Replication {
                index: r,
                sample_seed,
                tuning_seed,
                censoring_rate,
                reject,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = betas
        .iter()
        .enumerate()
        .map(|(b, beta)| {
            let rejections = runs.iter().filter(|r| r.reject[b]).count();
            let p = rejections as f64 / reps as f64;
            RejectionRow {
                beta: beta.as_slice().to_vec(),
                rejections,
                frequency: p,
                std_error: (p * (1.0 - p) / reps as f64).sqrt(),
            }
        })
        .collect();
    let mean_censoring_rate = runs.iter().map(|r| r.censoring_rate).sum::<f64>() / reps as f64;
    let payload = Payload::Montecarlo(MonteCarloPayload {
        replications: reps,
        n,
        mean_censoring_rate,
        rows,
        runs,
    });
    Ok(finish(cfg, payload, start))
}

/// β confidence set on a data file, with optional marginal bounds on `T(y)`.
pub fn run_empirical(config: &RunConfig) -> Result<ResultBundle, RunError> {
    let start = Instant::now();
    let mut cfg = config.clone().resolve(Command::Empirical, None)?;
    let (sample, _, ingest) = load_sample(&cfg)?;
    let ingest = ingest.expect("empirical runs read a data file");
    let y_tilde = *cfg
        .y_tilde
        .get_or_insert_with(|| median_duration(sample.sample()));
    let set = beta_confidence_set(&sample, cfg.grid.as_ref().expect("resolved"), &cfg.tuning)?;
    let envelope = match &cfg.envelope {
        Some(env) => Some(joint_lower_envelope(
            &sample,
            env.grid.as_ref().expect("resolved"),
            &env.y_grid,
            env.t_axis.as_ref().expect("resolved"),
            y_tilde,
            &cfg.tuning,
        )?),
        None => None,
    };
    let payload = Payload::Empirical(EmpiricalPayload {
        ingest,
        instruments: instrument_count(&cfg, sample.sample())?,
        y_tilde,
        set,
        envelope,
    });
    Ok(finish(cfg, payload, start))
}

/// What a run would evaluate, without running it.
pub fn dry_run(config: &RunConfig, command: Command) -> Result<String, RunError> {
    let cfg = config.clone().resolve(command, None)?;
    let mut out = format!(
        "command: {command}\nseed: {}\n",
        cfg.seed.expect("resolved")
    );
    match command {
        Command::Identify => {
            let spec = cfg.dgp.as_ref().expect("resolved").spec();
            let pop = cfg.population.as_ref().expect("resolved");
            let support = spec.x1.points().map_or(0, |p| p.len()) * 2;
            out += &format!(
                "support points: {support}\nbeta grid points: {}\ny values: {}\ndraws per support point: {}\n",
                cfg.grid.as_ref().expect("resolved").beta_size(),
                cfg.y_grid.as_ref().map_or(0, Vec::len),
                pop.draws_per_point.expect("resolved"),
            );
        }
        Command::Montecarlo => {
            let n = cfg.sample_size();
            let base = cfg.dgp.as_ref().expect("resolved").spec();
            let sample = simulate_dgp(&base.with_seed(derive_seed(cfg.seed.unwrap(), 0, 0)), n)?;
            out += &format!(
                "replications: {}\nsample size: {n}\nbeta points: {}\ninstruments (first replication): {}\n",
                cfg.replications.expect("resolved"),
                cfg.betas.as_ref().map_or(0, Vec::len),
                instrument_count(&cfg, &sample)?,
            );
        }
        _ => {
            let (sample, summary, _) = load_sample(&cfg)?;
            out += &format!(
                "observations: {} ({} censored)\ninstruments: {}\n",
                summary.n,
                summary.censored,
                instrument_count(&cfg, sample.sample())?
            );
            let points = match command {
                Command::Test => 1,
                Command::Joint => cfg
                    .grid
                    .as_ref()
                    .expect("resolved")
                    .joint_size(cfg.y_grid.as_ref().map_or(0, Vec::len))?,
                _ => cfg.grid.as_ref().expect("resolved").beta_size(),
            };
            out += &format!("grid points: {points}\n");
            if let Some(env) = &cfg.envelope {
                let per_y = env.grid.as_ref().expect("resolved").beta_size()
                    * env.t_axis.expect("resolved").len();
                out += &format!(
                    "envelope: {} y values, at most {per_y} tests each\n",
                    env.y_grid.len()
                );
            }
        }
    }
    Ok(out)
}

fn finish(cfg: RunConfig, payload: Payload, start: Instant) -> ResultBundle {
    let seed = cfg.seed.expect("resolved");
    let command = cfg.command.expect("resolved").to_string();
    ResultBundle {
        config: cfg,
        seed,
        payload,
        meta: Some(RunMeta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            seed,
            threads: rayon::current_num_threads(),
            wall_seconds: start.elapsed().as_secs_f64(),
        }),
    }
}

fn summarize(sample: &Sample) -> SampleSummary {
    SampleSummary {
        n: sample.n(),
        censored: sample.censored_count(),
        censoring_rate: sample.censoring_rate(),
        p: sample.p(),
        discrete_support: sample.discrete_support().len(),
    }
}

/// The sample for a single-sample command: the data file, or one draw from
/// the design.
fn load_sample(
    cfg: &RunConfig,
) -> Result<(TransformedSample, SampleSummary, Option<IngestSummary>), RunError> {
    let (sample, ingest) = match (&cfg.data, &cfg.dgp) {
        (Some(data), _) => {
            let path = cfg.data_path().expect("data configured");
            let file = File::open(&path).map_err(|source| IngestError::Open {
                path: path.display().to_string(),
                source,
            })?;
            let loaded = read_csv(file, &data.schema(), data.support())?;
            (loaded.sample, Some(loaded.summary))
        }
        (None, Some(dgp)) => (simulate_dgp(&dgp.spec(), cfg.sample_size())?, None),
        (None, None) => unreachable!("resolve requires a sample source"),
    };
    let summary = summarize(&sample);
    Ok((transform_continuous(sample)?, summary, ingest))
}

fn instrument_count(cfg: &RunConfig, sample: &Sample) -> Result<usize, RunError> {
    Ok(InstrumentFamily::for_sample(cfg.tuning.mode, cfg.tuning.r_max, sample)?.len())
}

/// Median of the observed durations; the default normalisation point.
pub fn median_duration(sample: &Sample) -> f64 {
    let mut y: Vec<f64> = sample.observations().iter().map(|o| o.y0).collect();
    y.sort_by(f64::total_cmp);
    let m = y.len() / 2;
    if y.len() % 2 == 1 {
        y[m]
    } else {
        0.5 * (y[m - 1] + y[m])
    }
}
