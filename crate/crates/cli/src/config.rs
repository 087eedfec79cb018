//! Resolved run configuration: echoed to stdout and embedded in outputs.

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;
use shadecal::WhitePoint;

/// Build the resolved-config JSON for a subcommand and echo it to stdout.
pub fn echo(subcommand: &str, fields: Value) -> Value {
    let mut config = json!({ "subcommand": subcommand });
    if let (Value::Object(dst), Value::Object(src)) = (&mut config, fields) {
        for (k, v) in src {
            dst.insert(k, v);
        }
    }
    println!("config: {config}");
    config
}

/// Serialize a value with an attached config object and write it atomically.
pub fn write_json_with_config<T: Serialize>(
    path: &std::path::Path,
    value: &T,
    config: &Value,
) -> Result<(), CliError> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::input(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.insert("config".into(), config.clone());
    }
    let text = serde_json::to_string_pretty(&v).map_err(|e| CliError::input(e.to_string()))?;
    shadecal::write_atomic(path, text.as_bytes()).map_err(CliError::from)
}

pub fn parse_white_point(s: &str) -> Result<WhitePoint, CliError> {
    let v = parse_floats(s, 3, "white point")?;
    WhitePoint::new(v[0], v[1], v[2]).map_err(CliError::from)
}

pub fn parse_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(CliError::input(format!("{what} needs {n} comma-separated values, got '{s}'")));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|e| CliError::input(format!("{what}: '{p}': {e}")))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(CliError::input(format!("{what}: '{p}' is not finite")))
                    }
                })
        })
        .collect()
}
