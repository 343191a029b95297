//! Run configuration: a JSON file, optionally overridden from the command
//! line, resolved into a fully explicit form that is echoed into the output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use censorbound_core::population::X1Law;
use censorbound_core::{
    default_tolerance, validate_beta, Axis, DgpSpec, DiscreteTuple, ModelId, ParamGrid,
    TuningParams,
};
use serde::{Deserialize, Serialize};

use crate::csv_io::CsvSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Identify,
    Test,
    Confset,
    Joint,
    Montecarlo,
    Empirical,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Identify => "identify",
            Command::Test => "test",
            Command::Confset => "confset",
            Command::Joint => "joint",
            Command::Montecarlo => "montecarlo",
            Command::Empirical => "empirical",
        };
        f.write_str(s)
    }
}

/// A configuration problem, located in the source file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    /// Dotted path of the offending field.
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source_name)?;
        if let Some(l) = self.line {
            write!(f, ":{l}")?;
            if let Some(c) = self.column {
                write!(f, ":{c}")?;
            }
        }
        if let Some(field) = &self.field {
            write!(f, ": `{field}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Censoring intercept: a number, or `"inf"` (alias `"none"`) for no
/// censoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alpha0 {
    Value(f64),
    Label(NoCensoring),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoCensoring {
    #[serde(rename = "inf", alias = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file; relative paths are taken from the config file's directory.
    pub path: PathBuf,
    pub duration: String,
    pub event: String,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub discrete: Vec<String>,
    /// Declared support of the discrete covariates (superset of the data).
    pub discrete_support: Option<Vec<Vec<f64>>>,
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            duration: self.duration.clone(),
            event: self.event.clone(),
            continuous: self.continuous.clone(),
            discrete: self.discrete.clone(),
        }
    }

    pub fn support(&self) -> Option<Vec<DiscreteTuple>> {
        self.discrete_support
            .as_ref()
            .map(|s| s.iter().map(|t| DiscreteTuple::new(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub model: ModelId,
    /// Preset `X1` support: `"i"`, `"ii"` or `"iii"`.
    pub support: Option<String>,
    pub x1: Option<X1Law>,
    pub alpha0: Option<Alpha0>,
    pub beta: Option<[f64; 2]>,
    pub gamma: Option<[f64; 3]>,
    /// Sample size for sample-based commands.
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

impl DgpConfig {
    /// The simulation design (after [`RunConfig::resolve`] every field is set).
    pub fn spec(&self) -> DgpSpec {
        let mut spec = DgpSpec::new(self.model);
        if let Some(x1) = self.x1 {
            spec.x1 = x1;
        }
        match self.alpha0 {
            Some(Alpha0::Value(a)) => spec.alpha0 = Some(a),
            Some(Alpha0::Label(NoCensoring::None)) => spec.alpha0 = None,
            None => {}
        }
        if let Some(b) = self.beta {
            spec.beta = b;
        }
        if let Some(g) = self.gamma {
            spec.gamma = g;
        }
        spec.seed = self.seed.unwrap_or(0);
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub draws_per_point: Option<usize>,
    pub tolerance: Option<f64>,
}

/// Marginal lower bounds of `T(y)` from the joint test (empirical runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub y_grid: Vec<f64>,
    pub t_axis: Option<Axis>,
    /// β grid for the joint search; defaults to the run's grid.
    pub grid: Option<ParamGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub data: Option<DataConfig>,
    pub dgp: Option<DgpConfig>,
    #[serde(default)]
    pub tuning: TuningParams,
    pub grid: Option<ParamGrid>,
    /// Hypothesised β for `test`.
    pub beta: Option<Vec<f64>>,
    /// β points for `montecarlo`.
    pub betas: Option<Vec<Vec<f64>>>,
    pub y_grid: Option<Vec<f64>>,
    /// Hypothesised `T(y)` values for a joint `test`.
    pub t: Option<Vec<f64>>,
    pub y_tilde: Option<f64>,
    pub t_axis: Option<Axis>,
    pub population: Option<PopulationConfig>,
    pub replications: Option<usize>,
    pub envelope: Option<EnvelopeConfig>,
    pub output_dir: Option<PathBuf>,

    #[serde(skip)]
    origin: Origin,
}

/// Where a config was read from: used for error locations and relative
/// paths, and ignored by equality.
#[derive(Debug, Clone, Default)]
struct Origin {
    source: Option<Arc<str>>,
    source_name: Option<String>,
    base_dir: Option<PathBuf>,
}

impl PartialEq for Origin {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

const DEFAULT_N: usize = 250;

impl RunConfig {
    pub fn from_json_str(
        text: &str,
        source_name: &str,
        base_dir: Option<&Path>,
    ) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError {
            source_name: source_name.to_string(),
            line: (e.line() > 0).then_some(e.line()),
            column: (e.column() > 0).then_some(e.column()),
            field: None,
            message: strip_position(&e.to_string()),
        })?;
        cfg.origin = Origin {
            source: Some(Arc::from(text)),
            source_name: Some(source_name.to_string()),
            base_dir: base_dir.map(Path::to_path_buf),
        };
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: path.display().to_string(),
            line: None,
            column: None,
            field: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_json_str(&text, &path.display().to_string(), path.parent())
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.origin.base_dir.as_deref()
    }

    /// Sets the directory relative data paths are resolved against.
    pub fn set_base_dir(&mut self, dir: Option<&Path>) {
        self.origin.base_dir = dir.map(Path::to_path_buf);
    }

    /// Error at a dotted field path, located in the source text if any.
    pub fn error(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            source_name: self
                .origin
                .source_name
                .clone()
                .unwrap_or_else(|| "<config>".into()),
            line: self.origin.source.as_deref().and_then(|s| locate(s, field)),
            column: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    /// Data file path, resolved against the config file's directory.
    pub fn data_path(&self) -> Option<PathBuf> {
        let d = self.data.as_ref()?;
        Some(match (&self.origin.base_dir, d.path.is_relative()) {
            (Some(b), true) => b.join(&d.path),
            _ => d.path.clone(),
        })
    }

    pub fn sample_size(&self) -> usize {
        self.dgp.as_ref().and_then(|d| d.n).unwrap_or(DEFAULT_N)
    }

    /// Checks the configuration for `command` and fills every default, so
    /// the result records exactly what was run. `seed` overrides the
    /// configured base seed.
    pub fn resolve(mut self, command: Command, seed: Option<u64>) -> Result<Self, ConfigError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(self.error(
                    "command",
                    format!("config is for `{c}` but `{command}` was requested"),
                ));
            }
        }
        self.command = Some(command);
        let seed = seed.or(self.seed).unwrap_or(self.tuning.seed);
        self.seed = Some(seed);
        if command != Command::Montecarlo {
            self.tuning.seed = seed;
        }
        self.tuning
            .validate()
            .map_err(|e| self.error("tuning", e.to_string()))?;

        let needs_sample = !matches!(command, Command::Identify | Command::Montecarlo);
        match (&self.data, &self.dgp, command) {
            (Some(_), Some(_), _) => {
                return Err(self.error("data", "give either `data` or `dgp`, not both"))
            }
            (None, None, _) => return Err(self.error("data", "one of `data` or `dgp` is required")),
            (Some(_), None, Command::Identify | Command::Montecarlo) => {
                return Err(self.error(
                    "data",
                    format!("`{command}` needs a simulation design (`dgp`)"),
                ))
            }
            (None, Some(_), Command::Empirical) => {
                return Err(self.error("dgp", "`empirical` needs a data file (`data`)"))
            }
            _ => {}
        }
        if let Some(path) = self.data_path() {
            if !path.is_file() {
                return Err(self.error("data.path", format!("no such file: {}", path.display())));
            }
            let d = self.data.as_ref().unwrap();
            if d.continuous.is_empty() && d.discrete.is_empty() {
                return Err(self.error(
                    "data",
                    "list at least one covariate in `continuous` or `discrete`",
                ));
            }
        }
        if self.dgp.is_some() {
            self.resolve_dgp(seed, needs_sample)?;
        }

        match command {
            Command::Identify => self.resolve_identify()?,
            Command::Test => {
                let Some(beta) = &self.beta else {
                    return Err(self.error("beta", "`test` needs the hypothesised `beta`"));
                };
                validate_beta(beta).map_err(|e| self.error("beta", e.to_string()))?;
                match (&self.y_grid, &self.t) {
                    (None, None) => {}
                    (Some(y), Some(t)) if y.len() == t.len() && !y.is_empty() => {
                        self.check_durations("y_grid", y)?
                    }
                    _ => {
                        return Err(self.error(
                            "t",
                            "`y_grid` and `t` must be given together, with equal lengths",
                        ))
                    }
                }
            }
            Command::Confset | Command::Empirical => {
                self.check_grid()?;
                if let Some(env) = &self.envelope {
                    if env.y_grid.is_empty() {
                        return Err(self.error("envelope.y_grid", "needs at least one value"));
                    }
                    self.check_durations("envelope.y_grid", &env.y_grid)?;
                    let env = self.envelope.as_mut().unwrap();
                    env.t_axis.get_or_insert(Axis {
                        lo: -10.0,
                        hi: 3.0,
                        step: 0.1,
                    });
                    if env.grid.is_none() {
                        env.grid = self.grid.clone();
                    }
                    let env = self.envelope.as_ref().unwrap();
                    env.t_axis
                        .unwrap()
                        .validate()
                        .map_err(|e| self.error("envelope.t_axis", e.to_string()))?;
                    env.grid
                        .as_ref()
                        .unwrap()
                        .validate()
                        .map_err(|e| self.error("envelope.grid", e.to_string()))?;
                }
            }
            Command::Joint => {
                self.check_grid()?;
                let Some(y) = &self.y_grid else {
                    return Err(self.error("y_grid", "`joint` needs a `y_grid`"));
                };
                if y.is_empty() {
                    return Err(self.error("y_grid", "needs at least one value"));
                }
                self.check_durations("y_grid", y)?;
                let grid = self.grid.as_ref().unwrap();
                grid.joint_size(y.len())
                    .map_err(|e| self.error("grid.t_axes", e.to_string()))?;
            }
            Command::Montecarlo => {
                match self.replications {
                    Some(r) if r >= 1 => {}
                    Some(_) => return Err(self.error("replications", "must be at least 1")),
                    None => {
                        return Err(self.error("replications", "`montecarlo` needs `replications`"))
                    }
                }
                let betas = self
                    .betas
                    .get_or_insert_with(|| vec![vec![1.0, 3.0], vec![1.0, 0.0]])
                    .clone();
                if betas.is_empty() {
                    return Err(self.error("betas", "needs at least one point"));
                }
                for b in &betas {
                    validate_beta(b).map_err(|e| self.error("betas", e.to_string()))?;
                    if b.len() != 2 {
                        return Err(self.error("betas", "simulation designs have two covariates"));
                    }
                }
            }
        }
        if let Some(y) = self.y_tilde {
            if !(y > 0.0 && y.is_finite()) {
                return Err(self.error("y_tilde", "must be finite and positive"));
            }
        }
        Ok(self)
    }

    fn resolve_dgp(&mut self, seed: u64, needs_sample: bool) -> Result<(), ConfigError> {
        let d = self.dgp.as_ref().unwrap();
        let preset = match &d.support {
            Some(s) => Some(X1Law::preset(s).ok_or_else(|| {
                self.error(
                    "dgp.support",
                    format!("unknown support `{s}` (use i, ii or iii)"),
                )
            })?),
            None => None,
        };
        let x1 = match (preset, d.x1) {
            (Some(p), Some(x)) if p != x => {
                return Err(self.error("dgp.support", "`support` and `x1` disagree; give only one"))
            }
            (p, x) => p.or(x),
        };
        let d = self.dgp.as_mut().unwrap();
        let base = DgpSpec::new(d.model);
        d.x1 = Some(x1.unwrap_or(base.x1));
        d.alpha0.get_or_insert(match base.alpha0 {
            Some(a) => Alpha0::Value(a),
            None => Alpha0::Label(NoCensoring::None),
        });
        d.beta.get_or_insert(base.beta);
        d.gamma.get_or_insert(base.gamma);
        d.seed.get_or_insert(seed);
        if needs_sample {
            d.n.get_or_insert(DEFAULT_N);
        }
        let (n, spec) = (d.n, d.spec());
        spec.validate()
            .map_err(|e| self.error("dgp", e.to_string()))?;
        if n == Some(0) {
            return Err(self.error("dgp.n", "must be positive"));
        }
        Ok(())
    }

    fn resolve_identify(&mut self) -> Result<(), ConfigError> {
        let spec = self.dgp.as_ref().unwrap().spec();
        if spec.x1.points().is_none() {
            return Err(self.error(
                "dgp.x1",
                "population bounds need a discrete X1 support (a grid law)",
            ));
        }
        self.grid.get_or_insert_with(|| ParamGrid {
            signs: vec![1.0],
            free: vec![Axis {
                lo: -2.0,
                hi: 8.0,
                step: 0.01,
            }],
            t_axes: Vec::new(),
        });
        self.check_grid()?;
        if self.grid.as_ref().unwrap().k() != 2 {
            return Err(self.error(
                "grid.free",
                "simulation designs have two covariates: give one free axis",
            ));
        }
        let y = self
            .y_grid
            .get_or_insert_with(|| (1..=100).map(|i| i as f64 / 10.0).collect())
            .clone();
        self.check_durations("y_grid", &y)?;
        self.y_tilde.get_or_insert(0.77);
        let t = *self.t_axis.get_or_insert(Axis {
            lo: -10.0,
            hi: 10.0,
            step: 0.01,
        });
        t.validate()
            .map_err(|e| self.error("t_axis", e.to_string()))?;
        let pop = self.population.get_or_insert(PopulationConfig {
            draws_per_point: None,
            tolerance: None,
        });
        let draws = *pop.draws_per_point.get_or_insert(20_000);
        let tol = *pop.tolerance.get_or_insert(default_tolerance(draws.max(1)));
        if draws == 0 {
            return Err(self.error("population.draws_per_point", "must be positive"));
        }
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(self.error("population.tolerance", "must be nonnegative"));
        }
        Ok(())
    }

    fn check_grid(&self) -> Result<(), ConfigError> {
        let Some(grid) = &self.grid else {
            return Err(self.error("grid", "a finite search grid is required"));
        };
        grid.validate()
            .map_err(|e| self.error("grid", e.to_string()))
    }

    fn check_durations(&self, field: &str, y: &[f64]) -> Result<(), ConfigError> {
        if y.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(self.error(field, "durations must be finite and positive"));
        }
        Ok(())
    }
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}

/// 1-based line of the key at the end of a dotted path, found by searching
/// for each key in turn after the previous one.
fn locate(text: &str, path: &str) -> Option<usize> {
    let mut pos = 0;
    let mut found = None;
    for seg in path.split('.') {
        let key = format!("\"{seg}\"");
        let mut from = pos;
        loop {
            let i = from + text[from..].find(&key)?;
            let after = text[i + key.len()..].trim_start();
            if after.starts_with(':') {
                found = Some(i);
                pos = i + key.len();
                break;
            }
            from = i + key.len();
        }
    }
    found.map(|i| text[..i].matches('\n').count() + 1)
}
