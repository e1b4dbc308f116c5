//! Flat key-value config files merged under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Usage;

/// Reads a TOML table of `key = value` pairs, or the `config` object of a
/// manifest written by an earlier run (any `.json` file).
pub fn read_config(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        v.get("config").cloned().unwrap_or(v)
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t)?
    };
    match value {
        Value::Object(m) => {
            if let Some((k, _)) = m.iter().find(|(_, v)| v.is_object()) {
                return Err(Usage(format!("{}: key '{k}' is a table; config is flat", path.display())).into());
            }
            Ok(m)
        }
        _ => Err(Usage(format!("{}: expected a key-value table", path.display())).into()),
    }
}

/// Flags win over config values; keys are the long flag names with
/// dashes or underscores.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, config: Option<&Path>) -> Result<T> {
    let Value::Object(mut merged) = serde_json::to_value(flags)? else {
        unreachable!("argument structs serialize to objects")
    };
    if let Some(path) = config {
        for (k, v) in read_config(path)? {
            let key = k.replace('-', "_");
            match merged.get(&key) {
                Some(Value::Null) => {
                    merged.insert(key, v);
                }
                Some(_) => {}
                None => return Err(Usage(format!("{}: unknown key '{k}'", path.display())).into()),
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Usage(format!("config: {e}")).into())
}

/// Fails unless every path exists.
pub fn require_exists<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<()> {
    for p in paths {
        if !p.exists() {
            anyhow::bail!("{} does not exist", p.display());
        }
    }
    Ok(())
}

pub fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| Usage(format!("--{flag} is required")).into())
}
