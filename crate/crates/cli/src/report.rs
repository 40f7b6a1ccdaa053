//! Report envelopes and output files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

/// Keys holding wall-clock measurements; they are the only report content
/// allowed to differ between identical runs.
pub const TIMING_KEYS: [&str; 3] = ["timing", "wall_times", "wall_secs"];

#[derive(Debug, Default)]
pub struct Timing(pub BTreeMap<String, f64>);

impl Timing {
    pub fn record(&mut self, phase: &str, secs: f64) {
        self.0.insert(phase.to_string(), secs);
    }
}

/// `{schema_version, command, status, config, result, timing}`.
pub fn envelope(command: &str, config: Value, result: Value, timing: &Timing) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "ok",
        "config": config,
        "result": result,
        "timing": timing.0,
    })
}

pub fn error_envelope(command: &str, kind: &str, message: &str, details: &[String]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "status": "error",
        "error": { "kind": kind, "message": message, "details": details },
    })
}

/// Removes every timing key, recursively.
pub fn strip_timing(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(
            m.iter()
                .filter(|(k, _)| !TIMING_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), strip_timing(v)))
                .collect::<Map<_, _>>(),
        ),
        Value::Array(a) => Value::Array(a.iter().map(strip_timing).collect()),
        other => other.clone(),
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub fn write_json(path: &Path, v: &Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(v).expect("json serializes");
    text.push('\n');
    std::fs::write(path, text)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
