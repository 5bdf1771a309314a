mod metrics;
mod ood;
mod plans;

pub use metrics::{calib, segmetrics, uncertainty};
pub use ood::{ood_eval, ood_score, signature_build};
pub use plans::{sample_plan, synth, tile_plan};

use serde::Serialize;
use serde_json::{json, Map, Value};

/// What a command prints on stdout.
pub enum Output {
    Json(Value),
    Text(String),
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Report envelope: command name, tool version and resolved config, followed
/// by the command's own fields.
pub fn report<C: Serialize>(command: &str, config: &C, body: Value) -> Value {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(VERSION));
    m.insert("config".into(), serde_json::to_value(config).unwrap_or(Value::Null));
    if let Value::Object(fields) = body {
        m.extend(fields);
    }
    Value::Object(m)
}
