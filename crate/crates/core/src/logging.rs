//! Minimal leveled logging controlled by the `TABATTACK_LOG` environment
//! variable (`error`, `warn`, `info`, `debug`).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Warn = 1,
    Info = 2,
    Debug = 3,
}

static LEVEL: OnceLock<Level> = OnceLock::new();

pub fn level() -> Level {
    *LEVEL.get_or_init(|| {
        match std::env::var("TABATTACK_LOG")
            .unwrap_or_default()
            .to_lowercase()
            .as_str()
        {
            "error" => Level::Error,
            "info" => Level::Info,
            "debug" => Level::Debug,
            _ => Level::Warn,
        }
    })
}

fn log(at: Level, tag: &str, message: &str) {
    if at <= level() {
        eprintln!("[{tag}] {message}");
    }
}

pub fn log_error(message: &str) {
    log(Level::Error, "error", message);
}

pub fn log_warn(message: &str) {
    log(Level::Warn, "warn", message);
}

pub fn log_info(message: &str) {
    log(Level::Info, "info", message);
}

pub fn log_debug(message: &str) {
    log(Level::Debug, "debug", message);
}
