//! Layered configuration: built-in defaults, then one section of a TOML
//! file, then command-line flags.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Parsed TOML config file, or an empty one.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile(toml::Table);

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("config", format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::new("config", format!("{}: {}", path.display(), e.message())))?;
        Ok(Self(table))
    }

    fn section(&self, name: &str) -> Result<Option<Value>, CliError> {
        self.0
            .get(name)
            .map(|v| serde_json::to_value(v).map_err(|e| CliError::new("config", e.to_string())))
            .transpose()
    }
}

/// Flags that were given, keyed like the config fields.
#[derive(Clone, Debug, Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }

    /// Adds `sub` as a nested table under `key` when it holds any flag.
    pub fn nest(&mut self, key: &str, sub: Flags) -> &mut Self {
        if !sub.0.is_empty() {
            self.0.insert(key.to_string(), Value::Object(sub.0));
        }
        self
    }
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), CliError> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => return Err(CliError::new("config", format!("unknown config key {key:?}"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            *slot = v;
            Ok(())
        }
    }
}

/// `defaults` overridden by `[section]` of the file, then by `flags`.
pub fn layered<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: &ConfigFile,
    section: &str,
    flags: Flags,
) -> Result<T, CliError> {
    let mut value = serde_json::to_value(defaults).map_err(|e| CliError::new("config", e.to_string()))?;
    if let Some(s) = file.section(section)? {
        merge(&mut value, s, section)?;
    }
    merge(&mut value, Value::Object(flags.0), "")?;
    serde_json::from_value(value).map_err(|e| CliError::new("config", format!("[{section}]: {e}")))
}

/// Hex SHA-256 of the compact JSON form of an effective config.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("configs serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}
