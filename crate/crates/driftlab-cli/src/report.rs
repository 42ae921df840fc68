//! Report shapes and file emission.  All floats go through serde_json or
//! `{:?}` formatting, i.e. the shortest representation that round-trips
//! losslessly, so artifacts are byte-stable.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use driftlab::lab::{write_samples_csv, HittingSummary, ScalingFit, TailReport};
use driftlab::neutral::NeutralProcessSpec;
use driftlab::stopping::HittingRecord;

#[derive(Debug, Serialize)]
pub struct ExactReport {
    pub algorithm: &'static str,
    /// K for the cGA, mu for UMDA.
    pub parameter: u32,
    pub stop: &'static str,
    pub start: f64,
    pub expected: f64,
}

#[derive(Debug, Serialize)]
pub struct ScalingPointReport {
    pub value: f64,
    pub time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<HittingSummary>,
}

#[derive(Debug, Serialize)]
pub struct ScalingReport {
    pub mode: &'static str,
    pub points: Vec<ScalingPointReport>,
    pub fit: ScalingFit,
}

/// Declarative tail-check input, mirroring the experiment config shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailCheckConfig {
    pub spec: NeutralProcessSpec,
    pub gamma: f64,
    pub horizons: Vec<u64>,
    pub replicas: u32,
    pub master_seed: u64,
}

#[derive(Debug, Serialize)]
pub struct TailcheckReport {
    pub monte_carlo: TailReport,
    /// Largest horizon covered by the exact-chain comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_horizon: Option<u64>,
    /// Largest exact CDF minus bound over all horizons; at most 0 when the
    /// bound holds everywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_max_excess: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct MomentsReport {
    pub kernel_rows_checked: u64,
    pub max_relative_error: f64,
    pub sqrt_pairs_checked: u64,
    pub sqrt_failures: u64,
    /// Largest lhs - rhs over all pairs; within tolerance of 0 when the
    /// expansion bound holds.
    pub worst_sqrt_slack: f64,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("config file {} is invalid", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write output file {}", path.display()))
}

/// Prints the effective config (or writes it to `out`), for --dump-config.
pub fn dump_config<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

pub fn write_samples(path: &Path, records: &[HittingRecord]) -> Result<()> {
    let file = fs::File::create(path)
        .with_context(|| format!("cannot create samples file {}", path.display()))?;
    write_samples_csv(BufWriter::new(file), records)
        .with_context(|| format!("cannot write samples file {}", path.display()))
}
