//! Versioned JSON experiment configuration.
//!
//! Every value is read through a [`Node`] that knows its JSON-pointer path, so
//! schema violations name the offending location.

use std::fmt;
use std::path::PathBuf;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::medium::MediumSpec;

/// Schema version understood by this build.
pub const CONFIG_VERSION: u64 = 1;

/// One schema violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    /// RFC 6901 pointer; empty for the document root.
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "/" } else { &self.pointer };
        write!(f, "{at}: {}", self.message)
    }
}

/// Schema violations found while reading a config.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config schema violation: {}", join(.issues))]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

fn join(issues: &[Issue]) -> String {
    issues.iter().map(Issue::to_string).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    pub fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![Issue {
                pointer: pointer.into(),
                message: message.into(),
            }],
        }
    }

    /// Pointers of every issue, in report order.
    pub fn pointers(&self) -> Vec<&str> {
        self.issues.iter().map(|i| i.pointer.as_str()).collect()
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

/// A JSON value together with its pointer.
#[derive(Debug, Clone)]
pub struct Node<'a> {
    value: &'a Value,
    pointer: String,
}

impl<'a> Node<'a> {
    pub fn root(value: &'a Value) -> Self {
        Self {
            value,
            pointer: String::new(),
        }
    }

    pub fn pointer(&self) -> &str {
        &self.pointer
    }

    pub fn value(&self) -> &'a Value {
        self.value
    }

    pub fn error(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::at(self.pointer.clone(), message)
    }

    fn child(&self, key: &str, value: &'a Value) -> Node<'a> {
        Node {
            value,
            pointer: format!("{}/{}", self.pointer, escape(key)),
        }
    }

    pub fn object(&self) -> ConfigResult<&'a Map<String, Value>> {
        self.value.as_object().ok_or_else(|| self.error("expected an object"))
    }

    /// Checks that every `required` key is present and no key outside
    /// `required ∪ optional` appears. All violations are reported together.
    pub fn expect_keys(&self, required: &[&str], optional: &[&str]) -> ConfigResult<()> {
        let map = self.object()?;
        let mut issues: Vec<Issue> = required
            .iter()
            .filter(|k| map.get(**k).is_none_or(Value::is_null))
            .map(|k| Issue {
                pointer: format!("{}/{}", self.pointer, escape(k)),
                message: "missing required field".into(),
            })
            .collect();
        issues.extend(
            map.keys()
                .filter(|k| !required.contains(&k.as_str()) && !optional.contains(&k.as_str()))
                .map(|k| Issue {
                    pointer: format!("{}/{}", self.pointer, escape(k)),
                    message: "unknown field".into(),
                }),
        );
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { issues })
        }
    }

    /// The member `key`, treating `null` as absent.
    pub fn get(&self, key: &str) -> Option<Node<'a>> {
        self.value
            .as_object()
            .and_then(|m| m.get(key))
            .filter(|v| !v.is_null())
            .map(|v| self.child(key, v))
    }

    pub fn req(&self, key: &str) -> ConfigResult<Node<'a>> {
        self.get(key)
            .ok_or_else(|| ConfigError::at(format!("{}/{}", self.pointer, escape(key)), "missing required field"))
    }

    pub fn f64(&self) -> ConfigResult<f64> {
        self.value
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.error("expected a finite number"))
    }

    pub fn positive(&self) -> ConfigResult<f64> {
        let v = self.f64()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.error(format!("expected a positive number, got {v}")))
        }
    }

    pub fn u64(&self) -> ConfigResult<u64> {
        self.value.as_u64().ok_or_else(|| self.error("expected a non-negative integer"))
    }

    pub fn usize_in(&self, lo: usize, hi: usize) -> ConfigResult<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|v| (lo..=hi).contains(v))
            .ok_or_else(|| self.error(format!("expected an integer in [{lo}, {hi}], got {v}")))
    }

    pub fn str(&self) -> ConfigResult<&'a str> {
        self.value.as_str().ok_or_else(|| self.error("expected a string"))
    }

    pub fn items(&self) -> ConfigResult<Vec<Node<'a>>> {
        let arr = self.value.as_array().ok_or_else(|| self.error("expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, v)| self.child(&i.to_string(), v))
            .collect())
    }

    pub fn f64_vec(&self) -> ConfigResult<Vec<f64>> {
        self.items()?.iter().map(Node::f64).collect()
    }

    pub fn f64_array<const N: usize>(&self) -> ConfigResult<[f64; N]> {
        let v = self.f64_vec()?;
        v.try_into()
            .map_err(|v: Vec<f64>| self.error(format!("expected {N} numbers, got {}", v.len())))
    }

    pub fn opt_f64(&self, key: &str, default: f64) -> ConfigResult<f64> {
        self.get(key).map_or(Ok(default), |n| n.f64())
    }

    pub fn opt_positive(&self, key: &str, default: f64) -> ConfigResult<f64> {
        self.get(key).map_or(Ok(default), |n| n.positive())
    }

    pub fn opt_usize_in(&self, key: &str, default: usize, lo: usize, hi: usize) -> ConfigResult<usize> {
        self.get(key).map_or(Ok(default), |n| n.usize_in(lo, hi))
    }

    pub fn opt_str(&self, key: &str, default: &'a str) -> ConfigResult<&'a str> {
        self.get(key).map_or(Ok(default), |n| n.str())
    }

    /// A string that must be one of `choices`.
    pub fn choice(&self, choices: &[&str]) -> ConfigResult<&'a str> {
        let s = self.str()?;
        if choices.contains(&s) {
            Ok(s)
        } else {
            Err(self.error(format!("unknown value {s:?}, expected one of {}", choices.join(", "))))
        }
    }
}

/// Pipelines the runner can dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum CommandKind {
    Simulate,
    Dn,
    Linearize,
    GaugeCheck,
    Trace,
    Frames,
    Coeffs,
    Recover,
    TimeIndependence,
}

impl CommandKind {
    pub const ALL: [CommandKind; 9] = [
        CommandKind::Simulate,
        CommandKind::Dn,
        CommandKind::Linearize,
        CommandKind::GaugeCheck,
        CommandKind::Trace,
        CommandKind::Frames,
        CommandKind::Coeffs,
        CommandKind::Recover,
        CommandKind::TimeIndependence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::Dn => "dn",
            CommandKind::Linearize => "linearize",
            CommandKind::GaugeCheck => "gauge-check",
            CommandKind::Trace => "trace",
            CommandKind::Frames => "frames",
            CommandKind::Coeffs => "coeffs",
            CommandKind::Recover => "recover",
            CommandKind::TimeIndependence => "time-independence",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Command-specific top-level sections: `(required, optional)`.
    fn sections(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            CommandKind::Simulate | CommandKind::Dn => (&["medium", "grid", "source"], &["picard", "tolerances"]),
            CommandKind::Linearize => (&["medium", "grid", "sources"], &["epsilon", "picard", "tolerances"]),
            CommandKind::GaugeCheck => (
                &["medium", "gauge", "source", "grids"],
                &["control", "picard", "tolerances"],
            ),
            CommandKind::Trace => (&["medium", "ray"], &["tolerances"]),
            CommandKind::Frames => (&["frames"], &["betas", "tolerances"]),
            CommandKind::Coeffs => (&["frames"], &["tolerances"]),
            CommandKind::Recover => (&["medium", "gauge", "points"], &["recovery", "tolerances"]),
            CommandKind::TimeIndependence => (&["rho", "betas", "points"], &["frames", "expect"]),
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Command-line settings that override or extend the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Overrides {
    /// Spatial refinement factor applied to every grid and ray step.
    pub grid_refine: usize,
    pub seed: Option<u64>,
    pub strict: bool,
}

impl Default for Overrides {
    fn default() -> Self {
        Self {
            grid_refine: 1,
            seed: None,
            strict: false,
        }
    }
}

/// A validated experiment: the command, its document and the resolved
/// cross-cutting settings. Command sections are parsed by the runners from
/// [`ExperimentConfig::node`], which keeps their pointers intact.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub version: u64,
    pub seed: u64,
    pub grid_refine: usize,
    pub strict: bool,
    /// `output.dir` from the file, if any.
    pub output: Option<PathBuf>,
    pub description: Option<String>,
    /// Medium section resolved against the presets, when the command has one.
    pub medium: Option<MediumSpec>,
    document: Value,
}

const COMMON_REQUIRED: [&str; 1] = ["version"];
const COMMON_OPTIONAL: [&str; 4] = ["command", "seed", "output", "description"];

impl ExperimentConfig {
    /// Validates `document` for `command`.
    pub fn from_value(command: CommandKind, document: Value, overrides: Overrides) -> ConfigResult<Self> {
        let root = Node::root(&document);
        let (required, optional) = command.sections();
        let required: Vec<&str> = COMMON_REQUIRED.iter().chain(required).copied().collect();
        let optional: Vec<&str> = COMMON_OPTIONAL.iter().chain(optional).copied().collect();
        root.expect_keys(&required, &optional)?;
        let version_node = root.req("version")?;
        let version = version_node.u64()?;
        if version != CONFIG_VERSION {
            return Err(version_node.error(format!("unsupported schema version {version}, expected {CONFIG_VERSION}")));
        }
        if let Some(n) = root.get("command") {
            let named = n.str()?;
            if named != command.name() {
                return Err(n.error(format!("config is for {named:?} but {:?} was requested", command.name())));
            }
        }
        let seed = match overrides.seed {
            Some(s) => s,
            None => root.get("seed").map_or(Ok(0), |n| n.u64())?,
        };
        let output = match root.get("output") {
            None => None,
            Some(n) => {
                n.expect_keys(&["dir"], &[])?;
                Some(PathBuf::from(n.req("dir")?.str()?))
            }
        };
        let description = root.get("description").map(|n| n.str().map(str::to_owned)).transpose()?;
        if overrides.grid_refine == 0 {
            return Err(ConfigError::at("", "grid refinement factor must be at least 1"));
        }
        let dim = match command {
            CommandKind::Trace | CommandKind::Recover => 3,
            _ => 1,
        };
        let medium = root.get("medium").map(|n| MediumSpec::parse(&n, dim)).transpose()?;
        Ok(Self {
            command,
            version,
            seed,
            grid_refine: overrides.grid_refine,
            strict: overrides.strict,
            output,
            description,
            medium,
            document,
        })
    }

    /// Parses JSON text and validates it.
    pub fn from_str(command: CommandKind, text: &str, overrides: Overrides) -> ConfigResult<Self> {
        let document: Value = serde_json::from_str(text)
            .map_err(|e| ConfigError::at("", format!("invalid JSON at line {}, column {}: {e}", e.line(), e.column())))?;
        Self::from_value(command, document, overrides)
    }

    pub fn node(&self) -> Node<'_> {
        Node::root(&self.document)
    }

    /// SHA-256 over the canonical (key-sorted, compact) document together
    /// with the settings that change results.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::json!({
            "command": self.command.name(),
            "document": self.document,
            "grid_refine": self.grid_refine,
            "seed": self.seed,
            "strict": self.strict,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_config_names_every_missing_field() {
        let err = ExperimentConfig::from_value(CommandKind::Coeffs, json!({}), Overrides::default()).unwrap_err();
        assert_eq!(err.pointers(), ["/version", "/frames"]);
        assert!(err.to_string().contains("/version: missing required field"));
    }

    #[test]
    fn unknown_and_mistyped_fields_carry_pointers() {
        let err = ExperimentConfig::from_value(
            CommandKind::Coeffs,
            json!({"version": 1, "frames": {}, "colour": 3}),
            Overrides::default(),
        )
        .unwrap_err();
        assert_eq!(err.pointers(), ["/colour"]);
        let doc = json!({"a": [{"b/c": "x"}]});
        let n = Node::root(&doc).req("a").unwrap().items().unwrap()[0].req("b/c").unwrap();
        assert_eq!(n.f64().unwrap_err().pointers(), ["/a/0/b~1c"]);
    }

    #[test]
    fn version_and_command_are_checked() {
        let bad = ExperimentConfig::from_value(CommandKind::Coeffs, json!({"version": 2, "frames": {}}), Overrides::default());
        assert_eq!(bad.unwrap_err().pointers(), ["/version"]);
        let wrong = ExperimentConfig::from_value(
            CommandKind::Coeffs,
            json!({"version": 1, "command": "dn", "frames": {}}),
            Overrides::default(),
        );
        assert_eq!(wrong.unwrap_err().pointers(), ["/command"]);
    }

    #[test]
    fn hash_ignores_key_order_but_not_overrides() {
        let a = json!({"version": 1, "frames": {"phi": 1.0, "theta": 2.0}});
        let b: Value = serde_json::from_str(r#"{"frames": {"theta": 2.0, "phi": 1.0}, "version": 1}"#).unwrap();
        let ca = ExperimentConfig::from_value(CommandKind::Coeffs, a.clone(), Overrides::default()).unwrap();
        let cb = ExperimentConfig::from_value(CommandKind::Coeffs, b, Overrides::default()).unwrap();
        assert_eq!(ca.hash(), cb.hash());
        let seeded = Overrides {
            seed: Some(7),
            ..Overrides::default()
        };
        let cs = ExperimentConfig::from_value(CommandKind::Coeffs, a, seeded).unwrap();
        assert_ne!(ca.hash(), cs.hash());
    }

    #[test]
    fn command_names_round_trip() {
        for c in CommandKind::ALL {
            assert_eq!(CommandKind::parse(c.name()), Some(c));
        }
    }
}
