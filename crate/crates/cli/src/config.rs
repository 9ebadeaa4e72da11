//! Settings resolution: JSON config file overlaid by command-line flags.

use anyhow::{bail, Context, Result};
use percept_core::io::Provenance;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Loads a config file as a JSON object.
pub fn load_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("config file {}", path.display()))? {
        Value::Object(map) => Ok(map),
        _ => bail!("config file {} must contain a JSON object", path.display()),
    }
}

/// Deserialises settings from `config` with every flag that was given on
/// the command line taking precedence. `flags` must serialise to an object
/// whose absent flags are skipped.
pub fn resolve<F: Serialize, S: DeserializeOwned>(mut config: Map<String, Value>, flags: &F) -> Result<S> {
    let Value::Object(given) = serde_json::to_value(flags)? else {
        bail!("flags did not serialise to an object");
    };
    for (k, v) in given {
        if !v.is_null() {
            config.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(config)).context("invalid settings")
}

/// Hex SHA-256 of the settings' canonical JSON (object keys sorted).
pub fn config_hash<S: Serialize>(settings: &S) -> Result<String> {
    // serde_json's default map is ordered, so this form is canonical.
    let canonical = serde_json::to_string(&serde_json::to_value(settings)?)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Provenance record for settings and a seed.
pub fn provenance<S: Serialize>(seed: u64, settings: &S) -> Result<Provenance> {
    Ok(Provenance::new(seed, config_hash(settings)?))
}

/// Provenance plus the resolved settings, as stored in model files.
pub fn provenance_map<S: Serialize>(p: &Provenance, settings: &S) -> Result<BTreeMap<String, Value>> {
    let mut map = BTreeMap::new();
    map.insert("tool".into(), Value::from(p.tool.clone()));
    map.insert("version".into(), Value::from(p.version.clone()));
    map.insert("seed".into(), Value::from(p.seed));
    map.insert("config_hash".into(), Value::from(p.config_hash.clone()));
    map.insert("config".into(), serde_json::to_value(settings)?);
    Ok(map)
}
