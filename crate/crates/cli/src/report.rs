//! Deterministic JSON run reports and float formatting shared with CSV output.

use serde::Serialize;
use serde_json::{Map, Value};

/// Significant digits kept for every reported float.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("formatted float parses")
}

/// Shortest text that reads back as the rounded value.
pub fn format_float(x: f64) -> String {
    format!("{:?}", round_sig(x))
}

/// Rebuilds a JSON value with sorted object keys and rounded floats.
pub fn canonical(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonical(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonical).collect()),
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub command: &'static str,
    pub config: Value,
    pub results: Value,
    pub seed: u64,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn new(
        command: &'static str,
        config: &impl Serialize,
        results: &impl Serialize,
        seed: u64,
        wall_seconds: f64,
    ) -> Self {
        Self {
            command,
            config: serde_json::to_value(config).expect("config serializes"),
            results: serde_json::to_value(results).expect("results serialize"),
            seed,
            wall_seconds,
        }
    }

    pub fn to_value(&self) -> Value {
        canonical(serde_json::json!({
            "command": self.command,
            "config": self.config,
            "results": self.results,
            "seed": self.seed,
            "timings": { "wall_seconds": self.wall_seconds },
            "version": env!("CARGO_PKG_VERSION"),
        }))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report serializes");
        s.push('\n');
        s
    }
}
