use blangevin_core::oracle::OracleDiagnostics;
use blangevin_core::{ComparisonReport, PhaseResult, RateSet};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::Result;

pub const TOOL: &str = "blangevin";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Column names of trajectory tables.
pub const TRAJECTORY_COLUMNS: [&str; 6] = ["t", "s_x", "s_y", "s_z", "abs_s_plus", "arg_s_plus"];

/// Everything one invocation produced. Floats are written in shortest
/// round-trip form, so re-reading the JSON reproduces them bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical configuration.
    pub fingerprint: String,
    /// `SOURCE_DATE_EPOCH` when set, so repeated runs stay byte-identical.
    pub timestamp: Option<u64>,
    pub config: RunConfig,
    pub rates: RateSet,
    pub phases: PhaseResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepPoint>>,
}

/// Rows of `(t, s_x, s_y, s_z, |s_+|, arg s_+)` with the phase unwrapped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub columns: Vec<String>,
    pub rows: Vec<[f64; 6]>,
}

impl Trajectory {
    pub fn new(rows: Vec<[f64; 6]>) -> Self {
        Self {
            columns: TRAJECTORY_COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub seed: Option<u64>,
    pub closed_phase: f64,
    pub diagnostics: OracleDiagnostics<f64>,
    pub comparison: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub rates: RateSet,
    pub phases: PhaseResult,
}

impl ResultRecord {
    pub fn new(command: &str, config: &RunConfig, rates: RateSet, phases: PhaseResult) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            fingerprint: config.fingerprint()?,
            timestamp: source_date_epoch(),
            config: config.clone(),
            rates,
            phases,
            trajectory: None,
            oracle: None,
            sweep: None,
        })
    }
}

fn source_date_epoch() -> Option<u64> {
    let raw = std::env::var("SOURCE_DATE_EPOCH").ok()?;
    match raw.trim().parse() {
        Ok(t) => Some(t),
        Err(_) => {
            log::warn!("ignoring SOURCE_DATE_EPOCH='{raw}': not a non-negative integer");
            None
        }
    }
}
