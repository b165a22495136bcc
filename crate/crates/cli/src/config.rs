//! TOML run configuration with dotted-path overrides.
//!
//! Frequencies are in units of the field magnitude; `B0 = 1` is the usual
//! choice.

use std::fs;
use std::path::{Path, PathBuf};

use blangevin_core::oracle::{Frame, DIMENSION_LIMIT};
use blangevin_core::spectral::SpectralKind;
use blangevin_core::{FieldProtocol, SpectralModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `flat`, `ohmic` or `lorentzian`.
    pub kind: String,
    pub alpha: f64,
    pub omega_c: f64,
    /// Inverse temperature; `inf` for zero temperature.
    #[serde(default = "infinite", with = "beta_repr")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    #[serde(rename = "B0", default = "one")]
    pub b0: f64,
    pub theta: f64,
    #[serde(rename = "Omega")]
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    /// Bloch step; when absent, the largest step below the stability limit
    /// `0.01/fastest rate` that keeps a free precession's length to 1e-13.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Oracle steps per field cycle; enough for 64 steps per fastest
    /// period when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps_per_cycle: Option<usize>,
    pub cycles: f64,
    pub record_every: usize,
    pub s0: [f64; 3],
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: None,
            steps_per_cycle: None,
            cycles: 1.0,
            record_every: 1,
            s0: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub modes: usize,
    pub n_max: usize,
    /// `linear` or `resonance`.
    pub grid: String,
    pub samples: usize,
    pub seed: u64,
    /// `lab` or `adiabatic`.
    pub frame: String,
    pub cycles: f64,
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_end: Option<f64>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            modes: 6,
            n_max: 2,
            grid: "resonance".into(),
            samples: 32,
            seed: 1,
            frame: "lab".into(),
            cycles: 1.0,
            record_every: 1,
            fit_start: None,
            fit_end: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Dotted path of a numeric field, e.g. `protocol.theta`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn one() -> f64 {
    1.0
}

/// `beta` as a number, or the string `"inf"` where JSON has no infinity.
mod beta_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(beta: &f64, s: S) -> Result<S::Ok, S::Error> {
        if beta.is_infinite() && *beta > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*beta)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => other
                    .parse()
                    .map_err(|_| serde::de::Error::custom(format!("beta must be a number or \"inf\", got '{t}'"))),
            },
        }
    }
}

/// Core objects built from a validated configuration.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub model: SpectralModel,
    pub protocol: FieldProtocol,
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    pub fn from_toml(text: &str, origin: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        for entry in overrides {
            let (path, value) = entry
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("override '{entry}' is not of the form key=value")))?;
            set_path(&mut table, path.trim(), parse_value(value.trim()))?;
        }
        let config = Self::from_table(table, origin)?;
        config.validate()?;
        Ok(config)
    }

    fn from_table(table: toml::Table, origin: &str) -> Result<Self> {
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Copy with one numeric field replaced by dotted path.
    pub fn with_value(&self, path: &str, value: f64) -> Result<Self> {
        let mut table = match toml::Value::try_from(self).map_err(|e| CliError::Encode(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        let current = get_path(&table, path)
            .ok_or_else(|| CliError::Invalid(format!("sweep parameter '{path}' does not name a set field")))?;
        let replacement = match current {
            toml::Value::Float(_) => toml::Value::Float(value),
            // beta = inf serializes as a string
            toml::Value::String(_) if path == "model.beta" => toml::Value::Float(value),
            toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9.0e15 => {
                toml::Value::Integer(value as i64)
            }
            toml::Value::Integer(_) => {
                return Err(CliError::Invalid(format!("sweep parameter '{path}' takes integers, got {value}")))
            }
            _ => return Err(CliError::Invalid(format!("sweep parameter '{path}' is not numeric"))),
        };
        set_path(&mut table, path, replacement)?;
        let config = Self::from_table(table, path)?;
        config.validate_point()?;
        Ok(config)
    }

    pub fn setup(&self) -> Result<Setup> {
        let m = &self.model;
        let kind = match m.kind.trim().to_ascii_lowercase().as_str() {
            "flat" => SpectralKind::Flat,
            "ohmic" => SpectralKind::Ohmic,
            "lorentzian" => {
                let (Some(center), Some(width)) = (m.center, m.width) else {
                    return Err(CliError::Invalid("lorentzian model needs model.center and model.width".into()));
                };
                SpectralKind::lorentzian(center, width).map_err(invalid)?
            }
            other => return Err(CliError::Invalid(format!("unknown model.kind '{other}'"))),
        };
        if !matches!(kind, SpectralKind::Lorentzian { .. }) && (m.center.is_some() || m.width.is_some()) {
            return Err(CliError::Invalid("model.center and model.width apply to lorentzian only".into()));
        }
        let model = SpectralModel::new(kind, m.alpha, m.omega_c, m.beta).map_err(invalid)?;
        let p = &self.protocol;
        let protocol = FieldProtocol::new(p.b0, p.theta, p.omega).map_err(invalid)?;
        Ok(Setup { model, protocol })
    }

    pub fn frame(&self) -> Result<Frame> {
        match self.oracle.frame.trim().to_ascii_lowercase().as_str() {
            "lab" => Ok(Frame::Lab),
            "adiabatic" => Ok(Frame::Adiabatic),
            other => Err(CliError::Invalid(format!("oracle.frame must be lab or adiabatic, got '{other}'"))),
        }
    }

    /// Whether the oracle bath uses the resonance-refined grid.
    pub fn refined_grid(&self) -> Result<bool> {
        match self.oracle.grid.trim().to_ascii_lowercase().as_str() {
            "resonance" => Ok(true),
            "linear" => Ok(false),
            other => Err(CliError::Invalid(format!("oracle.grid must be linear or resonance, got '{other}'"))),
        }
    }

    /// Oracle steps per cycle, filling in the automatic choice.
    pub fn steps_per_cycle(&self) -> usize {
        self.integrator.steps_per_cycle.unwrap_or_else(|| {
            let fastest = self.protocol.b0.max(self.model.omega_c);
            (64.0 * fastest / self.protocol.omega).ceil() as usize
        })
    }

    fn validate(&self) -> Result<()> {
        self.validate_point()?;
        if let Some(path) = &self.sweep.parameter {
            if self.sweep.values.is_empty() {
                return Err(CliError::Invalid("sweep.values is empty".into()));
            }
            for &v in &self.sweep.values {
                self.with_value(path, v)?;
            }
        }
        Ok(())
    }

    /// Everything except the sweep block.
    fn validate_point(&self) -> Result<()> {
        self.setup()?;
        let i = &self.integrator;
        if let Some(dt) = i.dt {
            positive("integrator.dt", dt)?;
        }
        if i.steps_per_cycle == Some(0) {
            return Err(CliError::Invalid("integrator.steps_per_cycle must be at least 1".into()));
        }
        positive("integrator.cycles", i.cycles)?;
        at_least_one("integrator.record_every", i.record_every)?;
        let len = i.s0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(len <= 1.0 + 1e-12) {
            return Err(CliError::Invalid(format!("integrator.s0 has length {len} > 1")));
        }
        let o = &self.oracle;
        at_least_one("oracle.modes", o.modes)?;
        at_least_one("oracle.n_max", o.n_max)?;
        at_least_one("oracle.samples", o.samples)?;
        at_least_one("oracle.record_every", o.record_every)?;
        positive("oracle.cycles", o.cycles)?;
        let dimension = (o.n_max as f64 + 1.0).powi(o.modes as i32) * 2.0;
        if dimension > DIMENSION_LIMIT as f64 {
            return Err(CliError::Invalid(format!(
                "oracle state dimension 2·({}+1)^{} exceeds {DIMENSION_LIMIT}",
                o.n_max, o.modes
            )));
        }
        if let (Some(a), Some(b)) = (o.fit_start, o.fit_end) {
            if !(a < b) {
                return Err(CliError::Invalid("oracle.fit_start must be below oracle.fit_end".into()));
            }
        }
        self.frame()?;
        self.refined_grid()?;
        Ok(())
    }

    /// SHA-256 over the sorted-key JSON of everything but the output block.
    pub fn fingerprint(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| CliError::Encode(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("output");
        }
        let canonical = serde_json::to_vec(&value).map_err(|e| CliError::Encode(e.to_string()))?;
        Ok(hex::encode(Sha256::digest(&canonical)))
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_toml(&text, &path.display().to_string(), overrides)
}

fn invalid(e: blangevin_core::Error) -> CliError {
    CliError::Invalid(e.to_string())
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn at_least_one(name: &str, n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(CliError::Invalid(format!("{name} must be at least 1")))
    }
}

/// A TOML literal if it parses as one, else the raw text as a string.
fn parse_value(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn get_path<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut parts = path.split('.');
    let mut current = table.get(parts.next()?)?;
    for part in parts {
        current = current.as_table()?.get(part)?;
    }
    Some(current)
}

/// Inserts `value` at `path`, creating intermediate tables; unknown leaves
/// are rejected later by deserialization.
fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Invalid(format!("malformed key '{path}'")));
    }
    let (leaf, parents) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Invalid(format!("'{part}' in '{path}' is not a section")))?;
    }
    current.insert(leaf.to_string(), value);
    Ok(())
}
