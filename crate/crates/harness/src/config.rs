//! TOML experiment configs with `--set section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::HarnessError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub experiment: Option<ExperimentConfig>,
    #[serde(default)]
    pub run: Option<RunConfig>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default)]
    pub selection: Option<SelectionSection>,
    #[serde(default)]
    pub var_fit: Option<VarFitConfig>,
    #[serde(default)]
    pub mixing: Option<MixingConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tabular,
    Td0,
    Tdlambda,
    Var,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tabular => "tabular",
            Family::Td0 => "td0",
            Family::Tdlambda => "tdlambda",
            Family::Var => "var",
        }
    }
}

/// One flat table for every family; which keys are required depends on `family`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub kernel: Option<Vec<Vec<f64>>>,
    /// Path relative to the config file; `.toml` with a `probs` array or plain rows.
    pub kernel_file: Option<String>,
    // tabular
    pub l_table: Option<Vec<Vec<Vec<f64>>>>,
    pub b_table: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub l_half_width: f64,
    #[serde(default)]
    pub b_half_width: f64,
    // td0 / tdlambda
    pub features: Option<Vec<Vec<f64>>>,
    pub rewards: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    #[serde(default)]
    pub reward_half_width: f64,
    pub lambda: Option<f64>,
    pub warmup: Option<usize>,
    // var
    pub coefficients: Option<Vec<Vec<Vec<f64>>>>,
    pub noise_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Theorem1,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorNorm {
    Euclidean,
    /// `(θ̂ − θ̄)ᵀQ(θ̂ − θ̄)` with the model's natural weight (`B` for TD).
    Weighted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub horizons: Vec<usize>,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "theorem1")]
    pub schedule: ScheduleKind,
    /// Constant of the theorem-1 stepsize rule.
    #[serde(default = "unit")]
    pub c: f64,
    pub stepsize: Option<f64>,
    #[serde(default = "half")]
    pub burn_in_fraction: f64,
    #[serde(default = "euclidean")]
    pub norm: ErrorNorm,
    /// Constant in front of the theorem-1 bound.
    #[serde(default = "unit")]
    pub c_prime: f64,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_diag_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "unit")]
    pub c_prime: f64,
    pub csv: Option<String>,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            horizons: default_diag_horizons(),
            c_prime: 1.0,
            csv: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub grid: Option<Vec<f64>>,
    #[serde(default = "eleven")]
    pub grid_points: usize,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    pub approx_error_prior: f64,
    #[serde(default = "unit")]
    pub c: f64,
    #[serde(default = "unit")]
    pub stepsize_c: f64,
    pub t_mix: Option<usize>,
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarFitConfig {
    pub horizon: usize,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    pub stepsize: f64,
    #[serde(default = "half")]
    pub burn_in_fraction: f64,
    /// Largest lag in the autocovariance report.
    pub max_lag: Option<usize>,
    pub csv: Option<String>,
    pub gamma_csv: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    #[serde(default = "half")]
    pub threshold: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    pub csv: Option<String>,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig {
            threshold: 0.5,
            cap: default_cap(),
            csv: None,
        }
    }
}

fn one() -> usize {
    1
}
fn eleven() -> usize {
    11
}
fn unit() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn theorem1() -> ScheduleKind {
    ScheduleKind::Theorem1
}
fn euclidean() -> ErrorNorm {
    ErrorNorm::Euclidean
}
fn default_diag_horizons() -> Vec<usize> {
    vec![1 << 16]
}
fn default_cap() -> usize {
    markov_lsa::markov::DEFAULT_MIX_CAP
}

/// A parsed config together with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: Config,
}

impl LoadedConfig {
    pub fn error(&self, section: &str, key: &str, message: impl Into<String>) -> HarnessError {
        HarnessError::config(&self.path, locate(&self.text, section, key), message)
    }

    /// Resolves a path given in the config relative to the config file.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }

    pub fn experiment(&self) -> Result<&ExperimentConfig, HarnessError> {
        self.config
            .experiment
            .as_ref()
            .ok_or_else(|| HarnessError::config(&self.path, None, "missing [experiment] table"))
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    parse(path, text, overrides)
}

pub fn parse(path: &Path, text: String, overrides: &[String]) -> Result<LoadedConfig, HarnessError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| HarnessError::config(path, span_line(&text, e.span()), e.message()))?;
    for o in overrides {
        apply_override(&mut table, o).map_err(|m| HarnessError::config(path, None, m))?;
    }
    let config = match Config::deserialize(toml::Value::Table(table)) {
        Ok(c) => c,
        Err(e) => {
            // Re-parse the untouched text to recover a line number.
            let line = match toml::from_str::<Config>(&text) {
                Err(raw) => span_line(&text, raw.span()),
                Ok(_) => None,
            };
            let msg = if line.is_none() && !overrides.is_empty() {
                format!("{} (after --set overrides)", e.message())
            } else {
                e.message().to_string()
            };
            return Err(HarnessError::config(path, line, msg));
        }
    };
    let loaded = LoadedConfig {
        path: path.to_path_buf(),
        text,
        config,
    };
    validate(&loaded)?;
    Ok(loaded)
}

fn span_line(text: &str, span: Option<std::ops::Range<usize>>) -> Option<usize> {
    span.map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
}

/// Line of `key = …` inside `[section]`, or of the section header.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// `a.b.c=value`; the value is read as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override `{spec}` is not of the form key=value"))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or(toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("bad override key `{key}`"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("override `{key}`: `{p}` is not a table"))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn validate(cfg: &LoadedConfig) -> Result<(), HarnessError> {
    if let Some(e) = &cfg.config.experiment {
        if e.horizons.is_empty() {
            return Err(cfg.error("experiment", "horizons", "horizons must not be empty"));
        }
        if e.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg.error("experiment", "horizons", "horizons must be strictly increasing"));
        }
        if e.horizons[0] < 2 {
            return Err(cfg.error("experiment", "horizons", "horizons must be at least 2"));
        }
        if e.replications == 0 {
            return Err(cfg.error("experiment", "replications", "replications must be at least 1"));
        }
        if e.schedule == ScheduleKind::Explicit && e.stepsize.is_none() {
            return Err(cfg.error("experiment", "schedule", "explicit schedule needs `stepsize`"));
        }
        if !(0.0..1.0).contains(&e.burn_in_fraction) {
            return Err(cfg.error("experiment", "burn_in_fraction", "burn_in_fraction must lie in [0, 1)"));
        }
        if !(e.c > 0.0) || !(e.c_prime > 0.0) {
            return Err(cfg.error("experiment", "c", "constants must be positive"));
        }
    }
    if let Some(s) = &cfg.config.selection {
        if s.horizon < 2 {
            return Err(cfg.error("selection", "horizon", "horizon must be at least 2"));
        }
        if !(s.approx_error_prior >= 0.0) {
            return Err(cfg.error("selection", "approx_error_prior", "prior must be nonnegative"));
        }
    }
    if let Some(v) = &cfg.config.var_fit {
        if v.horizon < 2 || v.replications == 0 {
            return Err(cfg.error("var_fit", "horizon", "need horizon >= 2 and at least one replication"));
        }
        if !(0.0..1.0).contains(&v.burn_in_fraction) {
            return Err(cfg.error("var_fit", "burn_in_fraction", "burn_in_fraction must lie in [0, 1)"));
        }
    }
    Ok(())
}

/// Reads a kernel from a `.toml` file (`probs = [[…]]`) or from plain
/// whitespace/comma separated rows with `#` comments.
pub fn read_kernel_file(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct KernelToml {
            probs: Vec<Vec<f64>>,
        }
        return toml::from_str::<KernelToml>(&text)
            .map(|k| k.probs)
            .map_err(|e| HarnessError::config(path, span_line(&text, e.span()), e.message()));
    }
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let row = body
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::config(path, Some(i + 1), format!("bad number: {e}")))?;
        rows.push(row);
    }
    Ok(rows)
}
