//! Result records: one JSON document per run holding the full resolved
//! config, its provenance hash, every scalar output, and the list of sibling
//! artifact files.  Keys are emitted sorted and floats through the shortest
//! round-trip formatter, so re-running a config reproduces the record byte
//! for byte except for the timestamp field (which the hash excludes).

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{Map, Value};

use crate::config::Config;
use crate::CliError;

pub const SCHEMA: &str = "graphnls-record-v1";

/// JSON number from a float; non-finite values become null (JSON has no nan).
pub fn jf(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// JSON number from an optional float.
pub fn jof(x: Option<f64>) -> Value {
    x.map(jf).unwrap_or(Value::Null)
}

/// Assembles and writes `record.json` into `dir`.
pub fn write_record(
    dir: &Path,
    cfg: &Config,
    results: Map<String, Value>,
    diagnostics: Map<String, Value>,
    artifacts: &[String],
    error: Option<&str>,
) -> Result<(), CliError> {
    let mut doc = Map::new();
    doc.insert(
        "command".into(),
        Value::String(cfg.command.name().to_string()),
    );
    doc.insert("schema".into(), Value::String(SCHEMA.into()));
    doc.insert("config".into(), cfg.to_json());
    doc.insert("config_hash".into(), Value::String(cfg.hash_hex()));
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    doc.insert("timestamp_unix".into(), Value::from(stamp));
    doc.insert("results".into(), Value::Object(results));
    doc.insert("diagnostics".into(), Value::Object(diagnostics));
    let mut names: Vec<Value> = artifacts
        .iter()
        .map(|a| Value::String(a.clone()))
        .collect();
    names.sort_by(|a, b| a.as_str().cmp(&b.as_str()));
    doc.insert("artifacts".into(), Value::Array(names));
    doc.insert(
        "error".into(),
        error.map(|e| Value::String(e.into())).unwrap_or(Value::Null),
    );

    let text = serde_json::to_string_pretty(&Value::Object(doc))
        .map_err(|e| CliError::Io(format!("record serialization: {e}")))?;
    let path = dir.join("record.json");
    std::fs::write(&path, text + "\n")
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    Ok(())
}
