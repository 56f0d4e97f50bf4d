//! Plain-text `key = value` configuration files.
//!
//! Any serde structure is flattened into dotted keys, one per line. Values
//! are written as JSON literals, so numbers keep full precision and a file
//! read back yields the identical structure.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}

/// Renders `value` as sorted `key = value` lines.
pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut flat = BTreeMap::new();
    flatten("", &v, &mut flat);
    let mut out = String::new();
    for (k, v) in flat {
        out.push_str(&format!("{k} = {v}\n"));
    }
    Ok(out)
}

/// Parses a value literal; bare words are taken as strings.
fn literal(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Sets `key` (dotted) inside `root`, refusing keys the structure lacks.
fn set(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("`{key}`: `{}` is not a section", parts[..i].join(".")))?;
        let slot = map.get_mut(*part).ok_or_else(|| anyhow!("unknown key `{key}`"))?;
        if i + 1 == parts.len() {
            if slot.is_object() {
                bail!("`{key}` is a section, not a value");
            }
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split yields at least one part")
}

/// Applies `key=value` overrides on top of `base`.
pub fn apply<T: Serialize + DeserializeOwned>(base: &T, pairs: &[(String, String)]) -> Result<T> {
    let mut v = serde_json::to_value(base)?;
    for (k, raw) in pairs {
        set(&mut v, k, literal(raw))?;
    }
    serde_json::from_value(v).context("invalid configuration value")
}

/// Parses `key = value` lines (blank lines and `#` comments ignored).
pub fn parse_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`", n + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Reads a full structure from text produced by [`to_string`], starting from `base`.
pub fn from_str<T: Serialize + DeserializeOwned>(base: &T, text: &str) -> Result<T> {
    apply(base, &parse_lines(text)?)
}

/// Splits a command-line `key=value` override.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}
