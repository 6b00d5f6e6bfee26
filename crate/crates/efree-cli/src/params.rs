//! Flat `section.key = value` parameter sets.

use crate::error::{CliError, CliResult};
use std::collections::BTreeMap;
use std::path::Path;
use toml::Value;

/// Resolved parameters of one experiment, keyed by dotted names.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params {
    values: BTreeMap<String, Value>,
}

impl Params {
    pub fn from_defaults(defaults: Vec<(&str, Value)>) -> Self {
        Self { values: defaults.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    /// Replace known keys; unknown keys and type changes are rejected.
    pub fn apply(&mut self, overrides: &BTreeMap<String, Value>) -> CliResult<()> {
        for (k, v) in overrides {
            let slot = self.values.get_mut(k).ok_or_else(|| CliError::Usage(format!("unknown parameter `{k}`")))?;
            if !compatible(slot, v) {
                return Err(CliError::param(k, format!("expected {}, got {}", slot.type_str(), v.type_str())));
            }
            *slot = v.clone();
        }
        Ok(())
    }

    fn get(&self, key: &str) -> CliResult<&Value> {
        self.values.get(key).ok_or_else(|| CliError::param(key, "not defined for this experiment"))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        as_f64(self.get(key)?).ok_or_else(|| CliError::param(key, "expected a number"))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        let v = self.f64(key)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(CliError::param(key, format!("expected a nonnegative integer, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        self.get(key)?.as_bool().ok_or_else(|| CliError::param(key, "expected true or false"))
    }

    pub fn str(&self, key: &str) -> CliResult<&str> {
        self.get(key)?.as_str().ok_or_else(|| CliError::param(key, "expected a string"))
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Vec<f64>> {
        let arr = self.get(key)?.as_array().ok_or_else(|| CliError::param(key, "expected a list of numbers"))?;
        arr.iter().map(|v| as_f64(v).ok_or_else(|| CliError::param(key, "expected a list of numbers"))).collect()
    }

    pub fn str_list(&self, key: &str) -> CliResult<Vec<String>> {
        let arr = self.get(key)?.as_array().ok_or_else(|| CliError::param(key, "expected a list of strings"))?;
        arr.iter()
            .map(|v| v.as_str().map(String::from).ok_or_else(|| CliError::param(key, "expected a list of strings")))
            .collect()
    }

    /// Evenly spaced grid `min, min + step, ..., max`.
    pub fn grid(&self, prefix: &str) -> CliResult<Vec<f64>> {
        let (lo, hi, step) =
            (self.f64(&format!("{prefix}_min"))?, self.f64(&format!("{prefix}_max"))?, self.f64(&format!("{prefix}_step"))?);
        if !(step > 0.0) || !(hi >= lo) {
            return Err(CliError::param(&format!("{prefix}_step"), format!("need step > 0 and max >= min, got {lo}..{hi} by {step}")));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| lo + i as f64 * step).collect())
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn compatible(old: &Value, new: &Value) -> bool {
    match (old, new) {
        (Value::Float(_) | Value::Integer(_), Value::Float(_) | Value::Integer(_)) => true,
        (Value::Array(_), Value::Array(_)) => true,
        (a, b) => a.same_type(b),
    }
}

/// Parse `key=value`; the value is read as a TOML literal, or as a bare string.
pub fn parse_assignment(s: &str) -> CliResult<(String, Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Usage(format!("expected key=value, got `{s}`")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(CliError::Usage(format!("empty key in `{s}`")));
    }
    Ok((key.to_string(), parse_value(v.trim())))
}

fn parse_value(v: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(v.to_string())),
        Err(_) => Value::String(v.to_string()),
    }
}

/// Flatten nested tables into dotted keys.
pub fn flatten(table: &toml::Table) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    flatten_into(table, "", &mut out);
    out
}

fn flatten_into(table: &toml::Table, prefix: &str, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten_into(t, &key, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

/// Read overrides from a TOML config, or from the `params` of a run manifest (`.json`).
pub fn read_config(path: &Path) -> CliResult<BTreeMap<String, Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let fmt = |reason: String| CliError::Format { path: path.display().to_string(), reason };
    if path.extension().is_some_and(|e| e == "json") {
        let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| fmt(e.to_string()))?;
        let params = doc.get("params").cloned().ok_or_else(|| fmt("no `params` object".into()))?;
        let map: BTreeMap<String, Value> = serde_json::from_value(params).map_err(|e| fmt(e.to_string()))?;
        return Ok(map);
    }
    let table: toml::Table = toml::from_str(&text).map_err(|e| fmt(e.to_string()))?;
    Ok(flatten(&table))
}
