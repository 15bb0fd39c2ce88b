//! Line-delimited JSON events on stderr.

use std::time::Instant;

use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy)]
pub struct Log {
    quiet: bool,
}

impl Log {
    pub fn new(quiet: bool) -> Self {
        Log { quiet }
    }

    pub fn event(&self, stage: &str, fields: Value) {
        if self.quiet {
            return;
        }
        let mut obj = Map::new();
        obj.insert("stage".into(), Value::from(stage));
        if let Value::Object(extra) = fields {
            obj.extend(extra);
        }
        eprintln!("{}", Value::Object(obj));
    }

    /// Event with the elapsed wall time since `start` as `ms`.
    pub fn done(&self, stage: &str, start: Instant, fields: Value) {
        let mut fields = fields;
        if let Value::Object(obj) = &mut fields {
            obj.insert("ms".into(), Value::from(start.elapsed().as_secs_f64() * 1e3));
        }
        self.event(stage, fields);
    }
}
