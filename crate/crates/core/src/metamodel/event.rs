use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Runtime,
    Scenario,
}

/// Who caused a change. The synchronizer uses this to suppress echoes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Origin {
    External,
    Synchronizer,
    ScenarioEngine,
    Console,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::External => "external",
            Origin::Synchronizer => "synchronizer",
            Origin::ScenarioEngine => "scenarioEngine",
            Origin::Console => "console",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChangeKind {
    /// Carries the complete initial attribute map so a replay can rebuild the element.
    Created { class: String, attrs: BTreeMap<String, Value> },
    Deleted { class: String },
    AttrChanged { attr: String, old: Value, new: Value },
    LinkAdded { reference: String, target: String },
    LinkRemoved { reference: String, target: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub model: ModelTag,
    pub element_id: String,
    #[serde(flatten)]
    pub kind: ChangeKind,
    pub origin: Origin,
}

impl ChangeEvent {
    /// Name of the changed attribute for `AttrChanged` events.
    pub fn attr(&self) -> Option<&str> {
        match &self.kind {
            ChangeKind::AttrChanged { attr, .. } => Some(attr),
            _ => None,
        }
    }

    pub fn new_value(&self) -> Option<&Value> {
        match &self.kind {
            ChangeKind::AttrChanged { new, .. } => Some(new),
            _ => None,
        }
    }
}
