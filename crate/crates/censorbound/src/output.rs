//! Result bundles and plot-ready CSV series.
//!
//! `result.json` holds the resolved config, seed and payload and is fully
//! determined by them. Wall-clock time and thread count go to a separate
//! `run_meta.json`. CSV files never contain infinities: an unbounded side is
//! an empty numeric cell plus `inf` in the matching flag column.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use censorbound_core::{BoundResult, ConfidenceSet, Interval, MarginalBound, TestOutcome};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csv_io::IngestSummary;
use crate::error::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    /// Resolved configuration, defaults filled in.
    pub config: RunConfig,
    pub seed: u64,
    pub payload: Payload,
    #[serde(skip)]
    pub meta: Option<RunMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Identify(IdentifyPayload),
    Test(TestPayload),
    Confset(ConfsetPayload),
    Joint(ConfsetPayload),
    Montecarlo(MonteCarloPayload),
    Empirical(EmpiricalPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub censored: usize,
    pub censoring_rate: f64,
    /// Continuous covariate count.
    pub p: usize,
    pub discrete_support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyPayload {
    pub support_points: usize,
    /// Censoring rate per support point.
    pub censoring_rates: Vec<f64>,
    pub bound: BoundResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPayload {
    pub sample: SampleSummary,
    pub beta: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub t: Vec<f64>,
    pub y_tilde: Option<f64>,
    pub outcome: TestOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfsetPayload {
    pub sample: SampleSummary,
    pub instruments: usize,
    pub y_grid: Vec<f64>,
    pub y_tilde: Option<f64>,
    pub set: ConfidenceSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub beta: Vec<f64>,
    pub rejections: usize,
    pub frequency: f64,
    /// Monte Carlo standard error `sqrt(p (1 - p) / R)`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub sample_seed: u64,
    pub tuning_seed: u64,
    pub censoring_rate: f64,
    pub reject: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloPayload {
    pub replications: usize,
    pub n: usize,
    pub mean_censoring_rate: f64,
    pub rows: Vec<RejectionRow>,
    pub runs: Vec<Replication>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPayload {
    pub ingest: IngestSummary,
    pub instruments: usize,
    pub y_tilde: f64,
    pub set: ConfidenceSet,
    pub envelope: Option<Vec<MarginalBound>>,
}

impl ResultBundle {
    /// Pretty JSON, newline terminated.
    pub fn to_json(&self) -> Result<String, RunError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `result.json`, `run_meta.json` (if timing is known) and the
    /// payload's CSV series into `dir`. Returns the files written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        let mut written = Vec::new();
        let path = dir.join("result.json");
        fs::write(&path, self.to_json()?).map_err(|e| RunError::io(&path, e))?;
        written.push(path);
        if let Some(meta) = &self.meta {
            let path = dir.join("run_meta.json");
            fs::write(&path, serde_json::to_string_pretty(meta)? + "\n")
                .map_err(|e| RunError::io(&path, e))?;
            written.push(path);
        }
        for (name, table) in self.series() {
            let path = dir.join(name);
            table.write(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Plot-ready tables, by file name.
    pub fn series(&self) -> Vec<(&'static str, Table)> {
        match &self.payload {
            Payload::Identify(p) => vec![
                ("bi_grid.csv", bi_grid(&p.bound)),
                ("bi_projections.csv", bi_projections(&p.bound)),
                ("envelope.csv", envelope(&p.bound)),
            ],
            Payload::Test(p) => vec![("test.csv", test_row(p))],
            Payload::Confset(p) | Payload::Joint(p) => {
                let names = param_names(&self.config, p.set.ranges.len());
                vec![
                    ("confset_points.csv", set_points(&p.set, &names)),
                    ("projections.csv", set_projections(&p.set, &names)),
                ]
            }
            Payload::Montecarlo(p) => vec![
                ("rejection.csv", rejection(p)),
                ("replications.csv", replications(p)),
            ],
            Payload::Empirical(p) => {
                let names = param_names(&self.config, p.set.ranges.len());
                let mut out = vec![
                    ("confset_points.csv", set_points(&p.set, &names)),
                    ("projections.csv", set_projections(&p.set, &names)),
                ];
                if let Some(env) = &p.envelope {
                    out.push(("t_bounds.csv", marginal(env)));
                }
                out
            }
        }
    }
}

/// A CSV table of preformatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), RunError> {
        let file = fs::File::create(path).map_err(|e| RunError::io(path, e))?;
        self.write_to(file).map_err(|e| RunError::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.header)?;
        for r in &self.rows {
            wr.write_record(r)?;
        }
        wr.flush()
    }
}

/// Finite numbers only; anything else becomes an empty cell.
fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn flag(unbounded: bool) -> String {
    if unbounded { "inf" } else { "" }.to_string()
}

fn interval_cells(iv: Option<&Interval>) -> [String; 4] {
    match iv {
        None => Default::default(),
        Some(iv) => [
            if iv.unbounded_below {
                String::new()
            } else {
                num(iv.lo)
            },
            flag(iv.unbounded_below),
            if iv.unbounded_above {
                String::new()
            } else {
                num(iv.hi)
            },
            flag(iv.unbounded_above),
        ],
    }
}

fn param_names(config: &RunConfig, len: usize) -> Vec<String> {
    let k = config.grid.as_ref().map_or(len, |g| g.k());
    let mut names: Vec<String> = (1..=k).map(|i| format!("beta{i}")).collect();
    names.extend((1..=len.saturating_sub(k)).map(|l| format!("t{l}")));
    names
}

fn bi_grid(b: &BoundResult) -> Table {
    let mut t = Table::new(&["beta1", "beta2", "member"]);
    for (beta, &m) in b.betas.iter().zip(&b.member) {
        let mut row: Vec<String> = beta.iter().map(|&v| num(v)).collect();
        row.push(u8::from(m).to_string());
        t.rows.push(row);
    }
    t
}

fn bi_projections(b: &BoundResult) -> Table {
    let mut t = Table::new(&[
        "coordinate",
        "empty",
        "lower",
        "lower_unbounded",
        "upper",
        "upper_unbounded",
    ]);
    for (c, iv) in b.projections.iter().enumerate() {
        let mut row = vec![format!("beta{}", c + 2), u8::from(iv.is_none()).to_string()];
        row.extend(interval_cells(iv.as_ref()));
        t.rows.push(row);
    }
    t
}

fn envelope(b: &BoundResult) -> Table {
    let mut t = Table::new(&["y", "lower", "lower_unbounded", "grid_lower", "truth"]);
    for e in &b.envelope {
        t.rows.push(vec![
            num(e.y),
            opt(e.lower),
            flag(e.unbounded_below),
            opt(e.grid_lower),
            opt(e.truth),
        ]);
    }
    t
}

fn test_row(p: &TestPayload) -> Table {
    let mut t = Table::new(&[
        "statistic",
        "critical_value",
        "reject",
        "selected",
        "moments",
    ]);
    let o = &p.outcome;
    t.rows.push(vec![
        num(o.statistic),
        opt(o.critical_value),
        u8::from(o.reject).to_string(),
        o.diagnostics.selected.to_string(),
        o.diagnostics.moments.to_string(),
    ]);
    t
}

fn set_points(set: &ConfidenceSet, names: &[String]) -> Table {
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.extend(["statistic", "critical_value", "accepted"]);
    let mut t = Table::new(&header);
    for p in &set.points {
        let mut row: Vec<String> = p.params.iter().map(|&v| num(v)).collect();
        row.push(num(p.outcome.statistic));
        row.push(opt(p.outcome.critical_value));
        row.push(u8::from(p.accepted()).to_string());
        t.rows.push(row);
    }
    t
}

fn set_projections(set: &ConfidenceSet, names: &[String]) -> Table {
    let mut t = Table::new(&[
        "coordinate",
        "part",
        "lower",
        "lower_unbounded",
        "upper",
        "upper_unbounded",
    ]);
    for p in &set.projections {
        let name = names
            .get(p.coord)
            .cloned()
            .unwrap_or_else(|| p.coord.to_string());
        let mut row = vec![
            name.clone(),
            if p.hull.is_some() { "hull" } else { "empty" }.to_string(),
        ];
        row.extend(interval_cells(p.hull.as_ref()));
        t.rows.push(row);
        for (i, run) in p.runs.iter().enumerate() {
            let mut row = vec![name.clone(), format!("run{}", i + 1)];
            row.extend(interval_cells(Some(run)));
            t.rows.push(row);
        }
    }
    t
}

fn rejection(p: &MonteCarloPayload) -> Table {
    let k = p.rows.first().map_or(0, |r| r.beta.len());
    let names: Vec<String> = (1..=k).map(|i| format!("beta{i}")).collect();
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.extend(["replications", "rejections", "frequency", "std_error"]);
    let mut t = Table::new(&header);
    for r in &p.rows {
        let mut row: Vec<String> = r.beta.iter().map(|&v| num(v)).collect();
        row.extend([
            p.replications.to_string(),
            r.rejections.to_string(),
            num(r.frequency),
            num(r.std_error),
        ]);
        t.rows.push(row);
    }
    t
}

fn replications(p: &MonteCarloPayload) -> Table {
    let names: Vec<String> = (1..=p.rows.len()).map(|i| format!("reject{i}")).collect();
    let mut header = vec![
        "replication",
        "sample_seed",
        "tuning_seed",
        "censoring_rate",
    ];
    header.extend(names.iter().map(String::as_str));
    let mut t = Table::new(&header);
    for r in &p.runs {
        let mut row = vec![
            r.index.to_string(),
            r.sample_seed.to_string(),
            r.tuning_seed.to_string(),
            num(r.censoring_rate),
        ];
        row.extend(r.reject.iter().map(|&b| u8::from(b).to_string()));
        t.rows.push(row);
    }
    t
}

fn marginal(env: &[MarginalBound]) -> Table {
    let mut t = Table::new(&["y", "lower", "lower_unbounded", "upper_unbounded", "tests"]);
    for m in env {
        // `lower` is a grid value; an acceptance at the axis bottom is unbounded
        let lower = if m.unbounded_below { None } else { m.lower };
        t.rows.push(vec![
            num(m.y),
            opt(lower),
            flag(m.unbounded_below),
            flag(m.unbounded_above),
            m.tests.to_string(),
        ]);
    }
    t
}
