//! Host configuration and whole-configuration validation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device_sim::{Fleet, Roster};
use crate::diagnostics::Diagnostic;
use crate::mapping::{parse_rules, validate};
use crate::runtime_model::{runtime_metamodel, DeviceDescriptor};
use crate::scenario::load_scenario;
use crate::xml::Location;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for unreadable or missing files.
pub const EXIT_IO: i32 = 1;
/// Exit code for documents that do not parse or validate.
pub const EXIT_INVALID: i32 = 2;

fn default_tick_ms() -> u64 {
    1000
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_true() -> bool {
    true
}

/// `serve` settings. Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub roster: PathBuf,
    pub rules: PathBuf,
    pub scenario: PathBuf,
    /// Wall-clock milliseconds between ticks.
    #[serde(default = "default_tick_ms")]
    pub tick_ms: u64,
    /// Overrides the roster's `sim.sim_hours_per_tick`.
    #[serde(default)]
    pub sim_hours_per_tick: Option<f64>,
    /// Address of the host API.
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Address at which an embedded simulator also serves the device protocol.
    #[serde(default)]
    pub sim_listen: Option<String>,
    /// Run the device fleet in-process. Otherwise every roster entry needs a `base_url`.
    #[serde(default = "default_true")]
    pub embed_simulator: bool,
    /// Stop the wall-clock ticker and enable `POST /api/tick`.
    #[serde(default)]
    pub test_mode: bool,
}

impl HostConfig {
    pub fn from_toml(text: &str) -> Result<Self, HostError> {
        toml::from_str(text).map_err(|e| HostError::Invalid(vec![Diagnostic::new(e.message().to_owned()).at(toml_location(text, &e))]))
    }

    /// Reads a config file and resolves its paths.
    pub fn load(path: &Path) -> Result<Self, HostError> {
        let text = read(path)?;
        let mut config = Self::from_toml(&text).map_err(|e| e.in_document(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.roster, &mut config.rules, &mut config.scenario] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn check(&self) -> Result<(), HostError> {
        if self.tick_ms == 0 {
            return Err(HostError::Invalid(vec![Diagnostic::new("tick_ms must be greater than 0")]));
        }
        if let Some(h) = self.sim_hours_per_tick {
            if !(h.is_finite() && h > 0.0) {
                return Err(HostError::Invalid(vec![Diagnostic::new("sim_hours_per_tick must be greater than 0")]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HostError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
}

impl HostError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HostError::Io { .. } => EXIT_IO,
            HostError::Invalid(_) => EXIT_INVALID,
        }
    }

    fn in_document(self, path: &Path) -> Self {
        match self {
            HostError::Invalid(d) => {
                HostError::Invalid(d.into_iter().map(|d| d.in_document(path.display().to_string())).collect())
            }
            io => io,
        }
    }
}

pub fn read(path: &Path) -> Result<String, HostError> {
    fs::read_to_string(path).map_err(|e| HostError::Io { path: path.to_owned(), message: e.to_string() })
}

fn toml_location(text: &str, e: &toml::de::Error) -> Location {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() as u32 + 1;
    let col = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) as u32 + 1;
    Location { line, col }
}

/// Parses a roster, reporting syntax errors with their location.
pub fn parse_roster(text: &str) -> Result<Roster, Vec<Diagnostic>> {
    let roster: Roster =
        toml::from_str(text).map_err(|e| vec![Diagnostic::new(e.message().to_owned()).at(toml_location(text, &e))])?;
    let mut out = Vec::new();
    if let Err(e) = Fleet::from_roster(&roster) {
        out.push(Diagnostic::new(e.to_string()));
    }
    for entry in &roster.devices {
        let d = DeviceDescriptor::from_entry(entry);
        if d.poll_interval == 0 || d.offline_after == 0 {
            out.push(Diagnostic::new("poll_interval_ticks and offline_after must be at least 1").element(&entry.dev_id));
        }
    }
    if out.is_empty() {
        Ok(roster)
    } else {
        Err(out)
    }
}

/// Names attached to diagnostics from [`validate_documents`].
pub struct DocumentNames<'a> {
    pub roster: &'a str,
    pub rules: &'a str,
    pub scenario: &'a str,
}

/// Checks a roster, a rule document and a scenario document together.
/// Rules are validated against the scenario's classes when the scenario loads.
pub fn validate_documents(roster: &str, rules: &str, scenario: &str, names: &DocumentNames<'_>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let tag = |ds: Vec<Diagnostic>, name: &str| ds.into_iter().map(|d| d.in_document(name)).collect::<Vec<_>>();
    if let Err(ds) = parse_roster(roster) {
        out.extend(tag(ds, names.roster));
    }
    let engine = match load_scenario(scenario) {
        Ok(engine) => Some(engine),
        Err(e) => {
            out.extend(tag(e.diagnostics(), names.scenario));
            None
        }
    };
    match parse_rules(rules) {
        Err(e) => out.extend(tag(vec![e.into()], names.rules)),
        Ok(rs) => {
            if let Some(engine) = &engine {
                out.extend(tag(validate(&rs, &runtime_metamodel(), engine.metamodel()), names.rules));
            }
        }
    }
    out
}
