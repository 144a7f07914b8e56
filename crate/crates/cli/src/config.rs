//! Flat `key = value` configuration.
//!
//! Every command owns a serializable config struct whose `Default` holds the
//! built-in values. Overrides are applied as strings on top of the struct's
//! flattened JSON form, parsed according to the type of the default value,
//! so an unknown key or an ill-typed value is rejected before any work runs.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::exit::UsageError;

/// Parses `key = value` lines. Blank lines and lines starting with `#` are skipped.
pub fn parse_flat(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected key = value, got {line:?}", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_flat(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_flat(&text).with_context(|| format!("in config {}", path.display()))
}

fn parse_like(template: &Value, key: &str, raw: &str) -> Result<Value> {
    let bad = || UsageError(format!("invalid value {raw:?} for {key}"));
    Ok(match template {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad())?),
        Value::Number(n) if n.is_f64() => Value::from(raw.parse::<f64>().map_err(|_| bad())?),
        Value::Number(_) => Value::from(raw.parse::<u64>().map_err(|_| bad())?),
        Value::String(_) => Value::String(raw.to_string()),
        Value::Null => match raw {
            "" | "none" => Value::Null,
            _ => Value::from(raw.parse::<f64>().map_err(|_| bad())?),
        },
        Value::Array(items) => {
            if raw.trim().is_empty() {
                return Ok(Value::Array(Vec::new()));
            }
            // Element type comes from the first default element; empty
            // defaults take integers.
            let elem = items.first().cloned().unwrap_or(Value::from(0u64));
            Value::Array(
                raw.split(',')
                    .map(|p| parse_like(&elem, key, p.trim()))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        Value::Object(_) => bail!(UsageError(format!("{key} cannot be set from a flat config"))),
    })
}

/// Applies `overrides` in order on top of `base` and returns the resolved value.
pub fn resolve<T: Serialize + DeserializeOwned>(base: T, overrides: &[(String, String)]) -> Result<T> {
    let mut map: Map<String, Value> = match serde_json::to_value(&base)? {
        Value::Object(m) => m,
        _ => return Err(anyhow!("config must serialize to a map")),
    };
    for (k, raw) in overrides {
        let template = map
            .get(k)
            .ok_or_else(|| UsageError(format!("unknown setting {k:?}; known: {}", known_keys(&map))))?;
        let v = parse_like(template, k, raw)?;
        map.insert(k.clone(), v);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| UsageError(format!("invalid configuration: {e}")).into())
}

fn known_keys(map: &Map<String, Value>) -> String {
    map.keys().cloned().collect::<Vec<_>>().join(", ")
}

/// The flat text form of a resolved config, one key per line in sorted order.
pub fn to_flat<T: Serialize>(cfg: &T) -> Result<String> {
    let Value::Object(map) = serde_json::to_value(cfg)? else {
        return Err(anyhow!("config must serialize to a map"));
    };
    let mut out = String::new();
    for (k, v) in &map {
        let text = match v {
            Value::Null => "none".to_string(),
            Value::String(s) => s.clone(),
            Value::Array(a) => a.iter().map(scalar).collect::<Vec<_>>().join(","),
            other => scalar(other),
        };
        writeln!(out, "{k} = {text}").expect("string write");
    }
    Ok(out)
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
