//! Layered JSON configuration: built-in defaults, then a config file (or a
//! previous run's manifest), then command-line flags, then `--set` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::CliError;

/// Recursively merges `top` into `base`; objects merge key by key, any other
/// value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, t) => *slot = t,
    }
}

/// Sets `a.b.c` inside `root`, creating objects along the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed override path `{path}`")));
    }
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            let done = parts[..i].join(".");
            return Err(CliError::Config(format!("`{done}` is not an object, cannot set `{path}`")));
        }
        let obj = cur.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("loop returns on the last segment")
}

/// Parses `key=value`; the value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Reads a config file. A manifest written by an earlier run is accepted
/// too; its resolved config is used, provided the command matches.
pub fn load_file(path: &Path, command: &str) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))?;
    if !value.is_object() {
        return Err(CliError::Config(format!("{}: top level must be an object", path.display())));
    }
    match (value.get("command"), value.get("config")) {
        (Some(Value::String(cmd)), Some(cfg)) => {
            if cmd != command {
                return Err(CliError::Config(format!(
                    "{}: manifest was written by `{cmd}`, not `{command}`",
                    path.display()
                )));
            }
            Ok(cfg.clone())
        }
        _ => Ok(value),
    }
}

/// Deserializes with the offending field path in the error message.
pub fn resolve<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.inner()))
    })
}
