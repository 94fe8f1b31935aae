//! Structured key-value run reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// Ordered key-value report; sections render as `[name]` headers.
#[derive(Default)]
pub struct RunReport {
    lines: Vec<String>,
}

impl RunReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section(&mut self, name: &str) {
        if !self.lines.is_empty() {
            self.lines.push(String::new());
        }
        self.lines.push(format!("[{name}]"));
    }

    pub fn entry(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    pub fn entry_f64(&mut self, key: &str, value: f64) {
        self.lines.push(format!("{key} = {}", crate::io::format_g10(value)));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut out = String::new();
        for line in &self.lines {
            let _ = writeln!(out, "{line}");
        }
        std::fs::write(path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}
