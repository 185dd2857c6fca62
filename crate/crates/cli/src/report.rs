//! Versioned JSON reports plus flat CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA: &str = "vnlab-report/1";

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub passed: bool,
    pub config: BTreeMap<String, String>,
    pub summary: Value,
    pub cases: Vec<Value>,
    pub notes: Vec<String>,
    /// `(suffix, csv text)`; written as `<command><suffix>.csv`.
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
    #[serde(skip)]
    pub lines: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> Self {
        Self {
            schema: SCHEMA,
            command: command.to_string(),
            passed: true,
            config,
            summary: Value::Null,
            cases: Vec::new(),
            notes: Vec::new(),
            tables: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn fail(&mut self, why: impl Into<String>) {
        self.passed = false;
        let why = why.into();
        self.lines.push(format!("FAIL: {why}"));
        self.notes.push(why);
    }

    pub fn table<R: Serialize>(&mut self, suffix: &str, rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.tables
            .push((suffix.to_string(), String::from_utf8(bytes).expect("csv is utf-8")));
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialise")
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join(format!("{}.json", self.command)), self.to_json() + "\n")
            .map_err(io)?;
        for (suffix, text) in &self.tables {
            std::fs::write(dir.join(format!("{}{suffix}.csv", self.command)), text).map_err(io)?;
        }
        Ok(())
    }
}
