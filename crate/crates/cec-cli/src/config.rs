//! The JSON run configuration consumed by every subcommand.
//!
//! A config names the machine pool (`n`, `speeds`), the split factor `l`,
//! and the availability timeline (`events`). Optional fields fix the data
//! shape (`q` rows, `r` columns, or a `data` file), the seed, and the
//! output directory. Unknown keys are rejected.

use crate::CliError;
use cec_core::codec::DataMatrix;
use cec_core::frac::{format_frac, frac_int, parse_frac, Frac};
use cec_core::optimizer::{AvailableSet, SpeedVector};
use cec_core::simulator::{ElasticEvent, Timeline};
use cec_core::MachineId;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub const DEFAULT_COLS: usize = 8;
pub const DEFAULT_SEED: u64 = 0;

/// A machine speed: a plain integer or an exact `"num/den"` string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpeedEntry {
    Int(i64),
    Text(String),
}

impl SpeedEntry {
    fn to_frac(&self) -> Result<Frac, CliError> {
        match self {
            SpeedEntry::Int(v) => Ok(frac_int(*v)),
            SpeedEntry::Text(text) => parse_frac(text)
                .map_err(|e| CliError::invalid(format!("speed \"{text}\": {e}"))),
        }
    }
}

/// One availability change: from time `t` on, exactly the listed machines
/// compute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub t: u64,
    pub available: Vec<u32>,
}

/// The full run description, as read from the `--config` file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Size of the machine pool.
    pub n: usize,
    /// Split factor: every data row is recoverable from any `l` machines.
    pub l: usize,
    /// One speed per machine, in machine-id order.
    pub speeds: Vec<SpeedEntry>,
    pub events: Vec<EventConfig>,
    /// Data row count. Defaults to the smallest count every event can
    /// split exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Data column count. Defaults to 8 when no data file is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Path to a data matrix in text form; its shape wins over `q`/`r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::invalid(format!("cannot read config {}: {e}", path.display()))
    })?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::invalid(format!("config {}: {e}", path.display()))
    })?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    /// Structural validation; everything instance-dependent (step
    /// feasibility, row divisibility) is left to the run itself.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::invalid("machine count n must be at least 1"));
        }
        if self.l == 0 {
            return Err(CliError::invalid("split factor l must be at least 1"));
        }
        if self.l > self.n {
            return Err(CliError::invalid(format!(
                "split factor l={} exceeds the machine count n={}",
                self.l, self.n
            )));
        }
        if self.speeds.len() != self.n {
            return Err(CliError::invalid(format!(
                "{} speeds given for n={} machines",
                self.speeds.len(),
                self.n
            )));
        }
        for (i, entry) in self.speeds.iter().enumerate() {
            let speed = entry.to_frac()?;
            if speed <= frac_int(0) {
                return Err(CliError::invalid(format!(
                    "machine {}: speed {} is not positive",
                    i + 1,
                    format_frac(&speed)
                )));
            }
        }
        let mut last_t: Option<u64> = None;
        for event in &self.events {
            if let Some(prev) = last_t {
                if event.t <= prev {
                    return Err(CliError::invalid(format!(
                        "event times must strictly increase, saw {prev} then {}",
                        event.t
                    )));
                }
            }
            last_t = Some(event.t);
            let mut seen = std::collections::BTreeSet::new();
            for &id in &event.available {
                if id == 0 || id as usize > self.n {
                    return Err(CliError::invalid(format!(
                        "event t={}: machine id {id} is outside 1..={}",
                        event.t, self.n
                    )));
                }
                if !seen.insert(id) {
                    return Err(CliError::invalid(format!(
                        "event t={}: machine id {id} is listed twice",
                        event.t
                    )));
                }
            }
        }
        if self.q == Some(0) {
            return Err(CliError::invalid("row count q must be at least 1"));
        }
        if self.r == Some(0) {
            return Err(CliError::invalid("column count r must be at least 1"));
        }
        Ok(())
    }

    pub fn speed_vector(&self) -> Result<SpeedVector, CliError> {
        let speeds = self
            .speeds
            .iter()
            .map(|e| e.to_frac())
            .collect::<Result<Vec<Frac>, CliError>>()?;
        SpeedVector::new(speeds).map_err(CliError::from)
    }

    pub fn elastic_events(&self) -> Result<Vec<ElasticEvent>, CliError> {
        self.events
            .iter()
            .map(|event| {
                let ids = event.available.iter().map(|&id| MachineId(id));
                let available = AvailableSet::new(ids).map_err(|e| {
                    CliError::from(e).at_step(event.t)
                })?;
                Ok(ElasticEvent {
                    t: event.t,
                    available,
                })
            })
            .collect()
    }

    /// Builds the executable timeline. Loads the data file when one is
    /// named; `seed_override` wins over the config seed.
    pub fn to_timeline(&self, seed_override: Option<u64>) -> Result<Timeline, CliError> {
        self.validate()?;
        let data = match &self.data {
            Some(path) => {
                let file = File::open(path).map_err(|e| {
                    CliError::invalid(format!("cannot open data file {path}: {e}"))
                })?;
                let matrix =
                    DataMatrix::from_text(BufReader::new(file), self.l).map_err(|e| {
                        CliError::from(e).with_context(format!("data file {path}"))
                    })?;
                Some(matrix)
            }
            None => None,
        };
        let cols = match (self.r, &data) {
            (Some(r), _) => r,
            (None, Some(matrix)) => matrix.cols(),
            (None, None) => DEFAULT_COLS,
        };
        Ok(Timeline {
            split_factor: self.l,
            speeds: self.speed_vector()?,
            events: self.elastic_events()?,
            rows: self.q,
            cols,
            seed: seed_override.or(self.seed).unwrap_or(DEFAULT_SEED),
            data,
            queries: None,
        })
    }

    /// The config as embedded in a run summary: the data shape and seed
    /// pinned to their resolved values, speeds as exact fractions, no
    /// output directory. Re-running from it reproduces the run.
    pub fn resolved(&self, rows: usize, cols: usize, seed: u64) -> RunConfig {
        let speeds = self
            .speeds
            .iter()
            .map(|entry| {
                let frac = entry.to_frac().expect("speeds were validated");
                SpeedEntry::Text(format_frac(&frac))
            })
            .collect();
        RunConfig {
            n: self.n,
            l: self.l,
            speeds,
            events: self.events.clone(),
            q: Some(rows),
            r: Some(cols),
            data: self.data.clone(),
            seed: Some(seed),
            out_dir: None,
        }
    }
}
