//! Scenario files: one JSON document naming the command and its
//! parameters. Flags given on the command line override file values.
//!
//! ```json
//! {
//!   "kind": "elem",
//!   "command": "steady",
//!   "params": { "p": 0.5, "mstar": 2, "cutoff": 2, "f": "ones" },
//!   "format": "csv",
//!   "seed": 1,
//!   "tolerances": { "feasibility": 1e-8, "optimality": 1e-9 }
//! }
//! ```

use std::path::Path;

use qnet::lp::Tolerances;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{config_err, CliResult};
use crate::output::Format;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub feasibility: Option<f64>,
    pub optimality: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Option<String>,
    pub command: Option<String>,
    #[serde(default)]
    pub params: Map<String, Value>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub tolerances: Option<ToleranceOverrides>,
}

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> CliResult<Scenario> {
    serde_json::from_str(text).map_err(|e| config_err(format!("scenario file: {e}")))
}

/// Resolves tolerances: defaults, then file values, then flags.
pub fn resolve_tolerances(file: Option<&ToleranceOverrides>, feas: Option<f64>, opt: Option<f64>) -> CliResult<Tolerances> {
    let mut tol = Tolerances::default();
    if let Some(f) = file {
        tol.feasibility = f.feasibility.unwrap_or(tol.feasibility);
        tol.optimality = f.optimality.unwrap_or(tol.optimality);
    }
    tol.feasibility = feas.unwrap_or(tol.feasibility);
    tol.optimality = opt.unwrap_or(tol.optimality);
    if !(tol.feasibility > 0.0 && tol.feasibility < 1.0) || !(tol.optimality > 0.0 && tol.optimality < 1.0) {
        return Err(config_err(format!(
            "tolerances must lie in (0, 1), got feasibility {} and optimality {}",
            tol.feasibility, tol.optimality
        )));
    }
    Ok(tol)
}

/// Overlays the flags that were set onto the file parameters and decodes
/// the result. Unset flags (null, or `false` for switches) do not override.
/// Keys the command does not know are rejected.
pub fn merge_params<T>(file: &Map<String, Value>, flags: &T) -> CliResult<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("parameter blocks serialise to objects"),
    };
    if let Some(k) = file.keys().find(|k| !known.contains_key(*k)) {
        let mut names: Vec<&String> = known.keys().collect();
        names.sort();
        let names: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        return Err(config_err(format!("unknown parameter \"{k}\" (expected one of: {})", names.join(", "))));
    }
    let mut merged = file.clone();
    if let Ok(Value::Object(set)) = serde_json::to_value(flags) {
        for (k, v) in set {
            if !(v.is_null() || v == Value::Bool(false)) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| config_err(format!("parameters: {e}")))
}
