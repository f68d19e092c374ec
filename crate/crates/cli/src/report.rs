//! Run reports, assertions and serialized artifact writing.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{ExperimentConfig, CONFIG_VERSION};
use crate::error::CliError;

/// Schema identifier embedded in every JSON report.
pub const REPORT_SCHEMA: &str = "wavescope-report";

/// A declared check of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub value: f64,
    /// `"<="`, `">="`, `"in"` or `"is"`.
    pub comparison: &'static str,
    pub limit: Value,
    pub passed: bool,
}

impl Assertion {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "<=",
            limit: json!(limit),
            passed: value <= limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: ">=",
            limit: json!(limit),
            passed: value >= limit,
        }
    }

    pub fn between(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            comparison: "in",
            limit: json!([lo, hi]),
            passed: (lo..=hi).contains(&value),
        }
    }

    /// A count that must equal `want`.
    pub fn count(name: &str, value: usize, want: usize) -> Self {
        Self {
            name: name.into(),
            value: value as f64,
            comparison: "is",
            limit: json!(want),
            passed: value == want,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "value": self.value,
            "comparison": self.comparison,
            "limit": self.limit,
            "passed": self.passed,
        })
    }
}

/// A file produced by a run, held in memory until the report is emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            bytes: bytes.into(),
        }
    }
}

/// Everything a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub medium: Option<Value>,
    pub results: Value,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<Artifact>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            command: config.command.name().into(),
            config_hash: config.hash(),
            seed: config.seed,
            medium: config.medium.as_ref().map(|m| m.descriptor()),
            results: json!({}),
            assertions: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    /// Report document; keys are emitted in sorted order.
    pub fn to_json(&self) -> Value {
        let mut names: Vec<&str> = self.artifacts.iter().map(|a| a.name.as_str()).collect();
        names.push(REPORT_FILE);
        json!({
            "schema": REPORT_SCHEMA,
            "schema_version": CONFIG_VERSION,
            "generator": concat!("wavescope ", env!("CARGO_PKG_VERSION")),
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "medium": self.medium,
            "results": self.results,
            "assertions": self.assertions.iter().map(Assertion::to_json).collect::<Vec<_>>(),
            "failures": self.failures().map(|a| a.name.clone()).collect::<Vec<_>>(),
            "passed": self.passed(),
            "artifacts": names,
        })
    }

    /// Writes every artifact, then the report, into `dir`; returns the paths.
    pub fn emit(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::with_capacity(self.artifacts.len() + 1);
        let report = pretty(&self.to_json());
        let all = self
            .artifacts
            .iter()
            .map(|a| (a.name.as_str(), a.bytes.as_slice()))
            .chain(std::iter::once((REPORT_FILE, report.as_bytes())));
        for (name, bytes) in all {
            let path = dir.join(name);
            let mut f = fs::File::create(&path).map_err(io(&path))?;
            f.write_all(bytes).map_err(io(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

/// File name of the JSON report.
pub const REPORT_FILE: &str = "report.json";

/// Pretty JSON with a trailing newline.
pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// RFC 4180 table: CRLF line ends, quoting only where needed.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

/// Shortest round-trip decimal form of a float.
pub fn num(v: f64) -> String {
    v.to_string()
}
