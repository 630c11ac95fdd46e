//! Report assembly: every run emits one JSON document carrying the echoed
//! configuration, all computed scalars, and one entry per checked assertion
//! with its measured value and tolerance. Wall times live in a separate
//! `timing` subtree so report bodies are byte-identical across reruns with
//! the same config and seed.

use crate::config::RunConfig;
use anyhow::{Context, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs: Vec<String>,
    pub version: String,
    pub config: RunConfig,
    pub scalars: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
    pub notes: Vec<String>,
    pub timing: BTreeMap<String, f64>,
    #[serde(skip)]
    started: Instant,
}

impl Report {
    pub fn new(command: &str, inputs: &[String], config: &RunConfig) -> Report {
        Report {
            command: command.to_string(),
            inputs: inputs.to_vec(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            scalars: BTreeMap::new(),
            assertions: Vec::new(),
            notes: Vec::new(),
            timing: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    /// Record a "measured <= tolerance" check.
    pub fn check_le(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            measured,
            tolerance,
            pass: measured <= tolerance && measured.is_finite(),
        });
    }

    /// Record a check that must simply hold, with a measured witness.
    pub fn check(&mut self, name: &str, pass: bool, measured: f64, tolerance: f64) {
        self.assertions.push(Assertion {
            name: name.to_string(),
            measured,
            tolerance,
            pass,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn time(&mut self, name: &str, seconds: f64) {
        self.timing.insert(name.to_string(), seconds);
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }

    /// Serialize, print to stdout, optionally write `report.json` in the out
    /// directory; returns the process exit code (0 pass, 2 any failed check).
    pub fn finish(mut self, out: Option<&Path>) -> Result<u8> {
        self.time("total_secs", self.started.elapsed().as_secs_f64());
        let body = serde_json::to_string_pretty(&self).context("serializing report")?;
        println!("{body}");
        if let Some(dir) = out {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
            std::fs::write(dir.join("report.json"), format!("{body}\n"))
                .context("writing report.json")?;
        }
        Ok(if self.all_pass() { 0 } else { 2 })
    }
}

/// Write a CSV table with a header row into the output directory.
pub fn write_csv(
    out: Option<&Path>,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<()> {
    let Some(dir) = out else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    std::fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
    Ok(())
}
