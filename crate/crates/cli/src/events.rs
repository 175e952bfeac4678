//! Line-oriented JSON events on stderr. Library log records are forwarded
//! as `{"event": "log", ...}` lines.

use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};

use log::{Level, LevelFilter, Log, Metadata, Record};
use serde_json::{json, Value};

static QUIET: AtomicBool = AtomicBool::new(false);

struct JsonLogger;

impl Log for JsonLogger {
    fn enabled(&self, m: &Metadata) -> bool {
        m.level() <= Level::Info && !QUIET.load(Ordering::Relaxed)
    }

    fn log(&self, r: &Record) {
        if self.enabled(r.metadata()) {
            emit("log", json!({ "level": r.level().as_str(), "target": r.target(), "message": r.args().to_string() }));
        }
    }

    fn flush(&self) {}
}

static LOGGER: JsonLogger = JsonLogger;

pub fn init(quiet: bool) {
    QUIET.store(quiet, Ordering::Relaxed);
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(LevelFilter::Info);
    }
}

/// Writes `{"event": name, ...fields}` as one line.
pub fn emit(name: &str, fields: Value) {
    if QUIET.load(Ordering::Relaxed) {
        return;
    }
    let mut obj = serde_json::Map::new();
    obj.insert("event".into(), Value::from(name));
    if let Value::Object(f) = fields {
        obj.extend(f);
    }
    let line = Value::Object(obj).to_string();
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}
