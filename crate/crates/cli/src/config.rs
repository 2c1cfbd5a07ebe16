//! Declarative experiment configuration: a TOML document with `[kernel]`,
//! `[spectrum]` and `[run]` tables, overridable key by key from the command
//! line.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use needlet_core::spectra::Modulation;
use needlet_core::{NeedletKernel, PowerSpectrum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("override `{0}`: expected section.key=value")]
    Override(String),
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
    #[error(transparent)]
    Core(#[from] needlet_core::Error),
}

impl ConfigError {
    fn field(field: &'static str, message: impl Into<String>) -> Self {
        ConfigError::Field { field, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must name the command being run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_order")]
    pub order: u32,
}

fn default_kind() -> String {
    "mexican".into()
}
fn default_base() -> f64 {
    2.0
}
fn default_order() -> u32 {
    1
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { kind: default_kind(), base: default_base(), order: default_order() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// `alpha_regular`, `exponential` or `tabulated`.
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<Modulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    /// Two-column `l C_l` file for the tabulated variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    /// Inline `C_1, C_2, ...` for the tabulated variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "one")]
    pub cg: f64,
}

fn default_variant() -> String {
    "alpha_regular".into()
}
fn default_alpha() -> f64 {
    3.0
}
fn one() -> f64 {
    1.0
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            variant: default_variant(),
            alpha: default_alpha(),
            modulation: None,
            poly: None,
            exponent: None,
            table: None,
            values: None,
            c0: 1.0,
            cg: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_j_min")]
    pub j_min: u32,
    #[serde(default = "default_j_max")]
    pub j_max: u32,
    /// Single scale for simulation commands.
    #[serde(default = "default_j")]
    pub j: u32,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Single angle: decay fit angle and Monte Carlo point separation.
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_omega_replicates")]
    pub omega_replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_theta_cap")]
    pub theta_cap: f64,
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    /// Explicit `w_uq` rows; overrides `orders`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_fit_points")]
    pub fit_points: usize,
    #[serde(default)]
    pub write_replicates: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn default_j_min() -> u32 {
    4
}
fn default_j_max() -> u32 {
    9
}
fn default_j() -> u32 {
    6
}
fn default_thetas() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.5, 1.0]
}
fn default_theta() -> f64 {
    0.2
}
fn default_tolerance() -> f64 {
    1e-13
}
fn default_seed() -> u64 {
    1
}
fn default_replicates() -> usize {
    2000
}
fn default_omega_replicates() -> usize {
    3000
}
fn default_epsilon() -> f64 {
    0.3
}
fn default_theta_cap() -> f64 {
    0.05
}
fn default_orders() -> Vec<usize> {
    vec![2, 4]
}
fn default_fit_points() -> usize {
    401
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    /// Reads `path` (or starts from defaults) and applies `section.key=value`
    /// overrides in order. Values parse as TOML, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.clone()))?;
            let path: Vec<&str> = key.trim().split('.').collect();
            if path.is_empty() || path.len() > 2 || path.iter().any(|s| s.is_empty()) {
                return Err(ConfigError::Override(item.clone()));
            }
            let value = parse_value(raw.trim());
            let mut slot = &mut table;
            if path.len() == 2 {
                slot = slot
                    .entry(path[0])
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| ConfigError::Override(item.clone()))?;
            }
            slot.insert(path[path.len() - 1].to_string(), value);
        }
        let cfg: ExperimentConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Checks the fields every command relies on.
    pub fn validate(&self, command: &str) -> Result<(), ConfigError> {
        if let Some(e) = &self.experiment {
            if e != command {
                return Err(ConfigError::field("experiment", format!("config is for `{e}`, command is `{command}`")));
            }
        }
        let r = &self.run;
        if r.j_min > r.j_max {
            return Err(ConfigError::field("run.j_min", format!("j_min = {} exceeds j_max = {}", r.j_min, r.j_max)));
        }
        if r.j_max > 30 {
            return Err(ConfigError::field("run.j_max", "scales above 30 are out of range"));
        }
        if r.thetas.is_empty() {
            return Err(ConfigError::field("run.thetas", "at least one angle is required"));
        }
        if let Some(t) = r.thetas.iter().find(|t| !(0.0..=PI).contains(*t)) {
            return Err(ConfigError::field("run.thetas", format!("angle {t} outside [0, pi]")));
        }
        if !(0.0..=PI).contains(&r.theta) {
            return Err(ConfigError::field("run.theta", format!("angle {} outside [0, pi]", r.theta)));
        }
        if !(r.tolerance > 0.0 && r.tolerance < 1.0) {
            return Err(ConfigError::field("run.tolerance", "must lie in (0, 1)"));
        }
        if !(r.epsilon > 0.0 && r.epsilon < 1.0) {
            return Err(ConfigError::field("run.epsilon", "must lie in (0, 1)"));
        }
        if !(r.theta_cap > 0.0 && r.theta_cap <= PI) {
            return Err(ConfigError::field("run.theta_cap", "must lie in (0, pi]"));
        }
        if r.fit_points < 2 {
            return Err(ConfigError::field("run.fit_points", "need at least 2 points"));
        }
        if r.threads == Some(0) {
            return Err(ConfigError::field("run.threads", "must be at least 1"));
        }
        if !(self.spectrum.c0 > 0.0) {
            return Err(ConfigError::field("spectrum.c0", "must be positive"));
        }
        if !(self.spectrum.cg > 0.0) {
            return Err(ConfigError::field("spectrum.cg", "must be positive"));
        }
        self.kernel()?;
        self.spectrum()?;
        Ok(())
    }

    pub fn kernel(&self) -> Result<NeedletKernel, ConfigError> {
        let k = &self.kernel;
        let kernel = match k.kind.as_str() {
            "mexican" => NeedletKernel::mexican(k.base, k.order),
            "npw" => NeedletKernel::npw(k.base),
            other => return Err(ConfigError::field("kernel.kind", format!("unknown kind `{other}` (mexican, npw)"))),
        };
        kernel.map_err(|e| ConfigError::Core(e.into()))
    }

    pub fn spectrum(&self) -> Result<PowerSpectrum, ConfigError> {
        let s = &self.spectrum;
        let spectrum = match s.variant.as_str() {
            "alpha_regular" | "power_law" => PowerSpectrum::alpha_regular(
                s.alpha,
                s.modulation.clone().unwrap_or_else(Modulation::unit),
                self.kernel.base,
            ),
            "exponential" => PowerSpectrum::exponential(
                s.poly.clone().unwrap_or_else(|| vec![1.0]),
                s.exponent.ok_or_else(|| ConfigError::field("spectrum.exponent", "required for the exponential variant"))?,
            ),
            "tabulated" => match (&s.table, &s.values) {
                (Some(path), None) => PowerSpectrum::load_tabulated(path),
                (None, Some(values)) => PowerSpectrum::tabulated(values.clone()),
                _ => return Err(ConfigError::field("spectrum.table", "give exactly one of `table` or `values`")),
            },
            other => {
                return Err(ConfigError::field(
                    "spectrum.variant",
                    format!("unknown variant `{other}` (alpha_regular, exponential, tabulated)"),
                ))
            }
        };
        spectrum.map_err(|e| ConfigError::Core(e.into()))
    }

    pub fn scales(&self) -> Vec<u32> {
        (self.run.j_min..=self.run.j_max).collect()
    }

    /// SHA-256 of the command and the canonical configuration, leaving out
    /// settings that cannot change results (output directory, threads).
    pub fn digest(&self, command: &str) -> String {
        let mut canonical = self.clone();
        canonical.run.out = PathBuf::new();
        canonical.run.threads = None;
        canonical.experiment = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update([0u8]);
        h.update(json.as_bytes());
        hex::encode(h.finalize())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
