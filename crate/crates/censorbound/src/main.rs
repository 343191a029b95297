use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use censorbound::config::{Command, RunConfig};
use censorbound::output::{Payload, ResultBundle};
use censorbound::runners::{dry_run, run_with_progress};
use censorbound::RunError;
use clap::Parser;

/// Bounds and confidence sets for duration models with endogenous censoring.
#[derive(Parser, Debug)]
#[command(name = "censorbound", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Base seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; overrides the config's `output_dir` (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the grid size and instrument count, then stop.
    #[arg(long)]
    dry_run: bool,
    /// No progress output.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<RunError>().map_or(1, RunError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let config = RunConfig::from_file(&cli.config)
        .and_then(|c| c.resolve(cli.command, cli.seed))
        .map_err(RunError::from)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .context("cannot start worker threads")?;
    if cli.dry_run {
        print!("{}", pool.install(|| dry_run(&config, cli.command))?);
        return Ok(());
    }

    let quiet = cli.quiet;
    let progress = move |done: usize, total: usize| {
        let step = (total / 20).max(1);
        if !quiet && (done % step == 0 || done == total) {
            eprintln!("{done}/{total}");
        }
    };
    let bundle = pool.install(|| run_with_progress(&config, cli.command, &progress))?;

    let out = match (&cli.out, &config.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_relative() => config.base_dir().map_or(o.clone(), |b| b.join(o)),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out"),
    };
    let files = bundle.write_to(&out)?;
    print!("{}", summary(&bundle));
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn summary(b: &ResultBundle) -> String {
    let mut s = String::new();
    match &b.payload {
        Payload::Identify(p) => {
            for (c, iv) in p.bound.projections.iter().enumerate() {
                match iv {
                    Some(iv) => s += &format!("beta{} in B_I: {iv}\n", c + 2),
                    None => s += &format!("beta{}: B_I is empty on the grid\n", c + 2),
                }
            }
            if p.bound.uninformative {
                s += "every grid point is in B_I (uninformative)\n";
            }
        }
        Payload::Test(p) => {
            let o = &p.outcome;
            let cv = o
                .critical_value
                .map_or("-".to_string(), |c| format!("{c:.6}"));
            s += &format!(
                "statistic {:.6}, critical value {cv}: {}\n",
                o.statistic,
                if o.reject { "reject" } else { "accept" }
            );
        }
        Payload::Confset(p) | Payload::Joint(p) => s += &projections(&p.set),
        Payload::Empirical(p) => {
            s += &format!(
                "{} observations, {} censored ({:.1}%)\n",
                p.ingest.rows,
                p.ingest.censored,
                100.0 * p.ingest.censoring_rate
            );
            s += &projections(&p.set);
        }
        Payload::Montecarlo(p) => {
            s += &format!("{} replications, n = {}\n", p.replications, p.n);
            for r in &p.rows {
                s += &format!(
                    "beta {:?}: rejection {:.3} (se {:.3})\n",
                    r.beta, r.frequency, r.std_error
                );
            }
        }
    }
    s
}

fn projections(set: &censorbound_core::ConfidenceSet) -> String {
    let mut s = String::new();
    for p in &set.projections {
        if set.ranges[p.coord].is_none() {
            continue;
        }
        match &p.hull {
            Some(h) => {
                s += &format!(
                    "coordinate {}: {h} ({} run(s))\n",
                    p.coord + 1,
                    p.runs.len()
                )
            }
            None => s += &format!("coordinate {}: empty\n", p.coord + 1),
        }
    }
    s
}
