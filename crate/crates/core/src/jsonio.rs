//! Strict JSON reading and deterministic writing for every interchange file.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `text`, reporting the failing field path and position.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            field,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Parse {
        field: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(value)
}

/// Checks `schema_version` before the typed parse so version drift is
/// reported as such rather than as an unknown-field error.
pub fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let probe: serde_json::Value = parse(text)?;
    match probe.get("schema_version") {
        None => return Err(Error::Schema("missing `schema_version`".into())),
        Some(v) if v.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::SchemaVersion {
                expected: SCHEMA_VERSION,
                found: v.to_string(),
            })
        }
    }
    parse(text)
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_versioned(&read_text(path)?)
}

pub fn to_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_string(value)?.as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn schema_version_default() -> u32 {
    SCHEMA_VERSION
}
