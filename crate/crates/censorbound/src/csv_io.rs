//! CSV ingestion and export of duration samples.
//!
//! A header row is required. The schema names the duration column, the event
//! column (1 = event observed, 0 = censored) and the covariate columns;
//! continuous covariates come first in `x`, then the discrete ones.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use censorbound_core::{DiscreteTuple, Observation, Sample};
use serde::{Deserialize, Serialize};

/// Column mapping for a duration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub duration: String,
    pub event: String,
    #[serde(default)]
    pub continuous: Vec<String>,
    #[serde(default)]
    pub discrete: Vec<String>,
}

impl CsvSchema {
    pub fn covariates(&self) -> impl Iterator<Item = &String> {
        self.continuous.iter().chain(&self.discrete)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("missing column `{column}` in the header")]
    MissingColumn { column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: duration {value} is not positive")]
    NonPositiveDuration {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: event indicator `{value}` must be 0 or 1")]
    BadIndicator {
        row: usize,
        column: String,
        value: String,
    },
    #[error("no data rows")]
    NoRows,
    #[error("schema needs at least one covariate")]
    NoCovariates,
    #[error("invalid sample: {0}")]
    Sample(#[from] censorbound_core::Error),
}

/// Censoring counts for one value of one discrete covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub column: String,
    pub value: f64,
    pub rows: usize,
    pub censored: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub censored: usize,
    pub uncensored: usize,
    pub censoring_rate: f64,
    pub groups: Vec<GroupRate>,
}

#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub sample: Sample,
    pub summary: IngestSummary,
}

/// Reads a sample from a file.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedSample, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema, None)
}

/// Reads a sample from any reader. `support` optionally declares the
/// discrete support (a superset of the observed tuples).
pub fn read_csv<R: Read>(
    reader: R,
    schema: &CsvSchema,
    support: Option<Vec<DiscreteTuple>>,
) -> Result<LoadedSample, IngestError> {
    if schema.continuous.is_empty() && schema.discrete.is_empty() {
        return Err(IngestError::NoCovariates);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(malformed)?.clone();
    let col = |name: &String| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                column: name.clone(),
            })
    };
    let dur = col(&schema.duration)?;
    let ev = col(&schema.event)?;
    let cov: Vec<(usize, &String)> = schema
        .covariates()
        .map(|c| Ok((col(c)?, c)))
        .collect::<Result<_, IngestError>>()?;

    let mut obs = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(malformed)?;
        let row = r + 1;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let number = |i: usize, name: &String| -> Result<f64, IngestError> {
            let v = field(i);
            match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(IngestError::NonNumeric {
                    row,
                    column: name.clone(),
                    value: v.to_string(),
                }),
            }
        };
        let y0 = number(dur, &schema.duration)?;
        if y0 <= 0.0 {
            return Err(IngestError::NonPositiveDuration {
                row,
                column: schema.duration.clone(),
                value: field(dur).to_string(),
            });
        }
        let d = match field(ev).parse::<f64>() {
            Ok(1.0) => true,
            Ok(0.0) => false,
            _ => {
                return Err(IngestError::BadIndicator {
                    row,
                    column: schema.event.clone(),
                    value: field(ev).to_string(),
                })
            }
        };
        let x = cov
            .iter()
            .map(|&(i, name)| number(i, name))
            .collect::<Result<Vec<_>, _>>()?;
        obs.push(Observation { y0, d, x });
    }
    if obs.is_empty() {
        return Err(IngestError::NoRows);
    }
    let summary = summarize(&obs, schema);
    let p = schema.continuous.len();
    let sample = match support {
        Some(s) => Sample::with_support(obs, p, s)?,
        None => Sample::new(obs, p)?,
    };
    Ok(LoadedSample { sample, summary })
}

fn malformed(e: csv::Error) -> IngestError {
    IngestError::Malformed {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

fn summarize(obs: &[Observation], schema: &CsvSchema) -> IngestSummary {
    let censored = obs.iter().filter(|o| !o.d).count();
    let p = schema.continuous.len();
    let mut groups = Vec::new();
    for (u, name) in schema.discrete.iter().enumerate() {
        let mut by: BTreeMap<DiscreteTuple, (usize, usize)> = BTreeMap::new();
        for o in obs {
            let e = by.entry(DiscreteTuple::new(&[o.x[p + u]])).or_default();
            e.0 += 1;
            e.1 += (!o.d) as usize;
        }
        for (v, (rows, cens)) in by {
            groups.push(GroupRate {
                column: name.clone(),
                value: v.values()[0],
                rows,
                censored: cens,
                rate: cens as f64 / rows as f64,
            });
        }
    }
    IngestSummary {
        rows: obs.len(),
        censored,
        uncensored: obs.len() - censored,
        censoring_rate: censored as f64 / obs.len() as f64,
        groups,
    }
}

/// Writes a sample with the schema's column names. Values use the shortest
/// representation that parses back to the same `f64`, so reading the output
/// reproduces the observations bit for bit.
pub fn write_csv<W: Write>(writer: W, sample: &Sample, schema: &CsvSchema) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.duration.clone(), schema.event.clone()];
    header.extend(schema.covariates().cloned());
    w.write_record(&header)?;
    for o in sample.observations() {
        let mut rec = vec![o.y0.to_string(), if o.d { "1" } else { "0" }.to_string()];
        rec.extend(o.x.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()
}
