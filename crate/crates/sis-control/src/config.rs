//! Run configuration: one self-describing record covering the model, the
//! grid, the solver, and the experiment knobs.
//!
//! Configs load from JSON and then take `key=value` overrides. An override
//! key is a dotted path, matched against the *suffix* of the full path, so
//! `delta=0.1` reaches `model.delta` and `mc.seed=42` reaches
//! `pia.mc.seed` as long as the suffix is unambiguous. Later overrides win.
//! Unknown keys — in the file or in an override — are errors, not warnings:
//! a silently ignored typo in an experiment config is a corrupted study.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bvp::Grid;
use crate::error::{Error, Result};
use crate::model::{CostParams, ModelParams, Problem};
use crate::pia::PiaConfig;

/// Grid section of a config file; bounds-checked when turned into a [`Grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            lo: 0.01,
            hi: 0.99,
            n: 1000,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.lo, self.hi, self.n)
    }
}

/// Experiment-specific knobs; harmless to leave at defaults for plain solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentOptions {
    /// Parameter a sweep varies: one of `alpha`, `beta`, `sigma`, `a_i`,
    /// `a_m_i`, `a_m_s`, `a_r`.
    pub sweep_parameter: Option<String>,
    /// Explicit sweep values; omitted means the per-parameter default grid.
    pub sweep_values: Option<Vec<f64>>,
    /// Magnitudes of the policy offsets tried in each direction.
    pub perturb_offsets: Vec<f64>,
    /// States where tabulated values are cross-checked by simulation.
    pub probes: Vec<f64>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            sweep_parameter: None,
            sweep_values: None,
            perturb_offsets: vec![0.05, 0.10, 0.15],
            probes: vec![0.2, 0.5, 0.8],
        }
    }
}

/// The full parameter record for one run. Serializes to the config-file
/// schema verbatim, so an echoed config is itself a valid input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelParams,
    pub cost: CostParams,
    pub rho_max: f64,
    pub grid: GridConfig,
    pub pia: PiaConfig,
    /// Output directory for experiment artifacts.
    pub out_dir: String,
    /// Worker-pool size; 0 means one worker per available core.
    pub workers: usize,
    pub experiment: ExperimentOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelParams::default(),
            cost: CostParams::default(),
            rho_max: Problem::default().rho_max,
            grid: GridConfig::default(),
            pia: PiaConfig::default(),
            out_dir: "runs".to_string(),
            workers: 0,
            experiment: ExperimentOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn problem(&self) -> Problem {
        Problem {
            model: self.model,
            cost: self.cost,
            rho_max: self.rho_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem().validate()?;
        self.grid.build()?;
        self.pia.validate()?;
        for &p in &self.experiment.probes {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::invalid(
                    "experiment.probes",
                    "probe states must lie in (0, 1)",
                ));
            }
        }
        for &o in &self.experiment.perturb_offsets {
            if !o.is_finite() || o <= 0.0 {
                return Err(Error::invalid(
                    "experiment.perturb_offsets",
                    "offsets must be finite and > 0",
                ));
            }
        }
        if let Some(values) = &self.experiment.sweep_values {
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "experiment.sweep_values",
                    "must be a nonempty list of finite values",
                ));
            }
        }
        Ok(())
    }

    /// Pretty JSON of the effective record — what gets echoed next to
    /// experiment outputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Content hash of the effective record (hex SHA-256 of the canonical
    /// JSON), stored in run manifests so outputs are traceable to inputs.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        sha256_hex(canonical.as_bytes())
    }
}

/// Hex SHA-256, used for config identity and artifact manifests.
pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").unwrap();
    }
    hex
}

fn deserialize_tree(tree: Value) -> Result<RunConfig> {
    let mut track = serde_path_to_error::Track::new();
    let de = serde_path_to_error::Deserializer::new(tree, &mut track);
    RunConfig::deserialize(de)
        .map_err(|e| Error::invalid(&track.path().to_string(), e.to_string()))
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn collect_paths(value: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = value {
        for (k, v) in map {
            prefix.push(k.clone());
            out.push(prefix.clone());
            collect_paths(v, prefix, out);
            prefix.pop();
        }
    }
}

/// Set `key=value` in the tree, resolving `key` as an unambiguous path
/// suffix. The value side is parsed as JSON when possible (numbers, bools,
/// null, arrays) and taken as a string otherwise.
fn apply_override(tree: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::BadOverride {
        key: spec.to_string(),
        reason: "expected key=value".into(),
    })?;
    let key = key.trim();
    let segments: Vec<&str> = key.split('.').collect();
    if key.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::BadOverride {
            key: spec.to_string(),
            reason: "empty key segment".into(),
        });
    }

    let mut paths = Vec::new();
    collect_paths(tree, &mut Vec::new(), &mut paths);
    let matches: Vec<&Vec<String>> = paths
        .iter()
        .filter(|p| p.len() >= segments.len() && p[p.len() - segments.len()..] == segments[..])
        .collect();
    let path = match matches.as_slice() {
        [one] => (*one).clone(),
        [] => {
            return Err(Error::BadOverride {
                key: key.to_string(),
                reason: "no configuration key matches".into(),
            })
        }
        many => {
            return Err(Error::BadOverride {
                key: key.to_string(),
                reason: format!(
                    "ambiguous, matches {}",
                    many.iter()
                        .map(|p| p.join("."))
                        .collect::<Vec<_>>()
                        .join(" and ")
                ),
            })
        }
    };

    let parsed: Value = serde_json::from_str(raw.trim())
        .unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut slot = tree;
    for seg in &path {
        slot = slot
            .as_object_mut()
            .and_then(|m| m.get_mut(seg))
            .expect("collected path stays valid");
    }
    *slot = parsed;
    Ok(())
}

/// Load a config: defaults, then the file (if any), then overrides in
/// order, then full validation.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("default serializes");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("read config", path, e))?;
        let file_tree: Value = serde_json::from_str(&text)?;
        merge(&mut tree, file_tree);
    }
    for spec in overrides {
        apply_override(&mut tree, spec)?;
    }
    let cfg = deserialize_tree(tree)?;
    cfg.validate()?;
    Ok(cfg)
}
