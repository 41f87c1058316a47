use std::fmt;

use serde::{Deserialize, Serialize};

use crate::xml::{DocError, Location};

/// A located problem report. Validation returns these instead of failing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub document: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Self {
        Self { document: None, rule_id: None, element_id: None, location: None, message: message.into() }
    }

    pub fn rule(mut self, rule_id: impl Into<String>) -> Self {
        self.rule_id = Some(rule_id.into());
        self
    }

    pub fn element(mut self, element_id: impl Into<String>) -> Self {
        self.element_id = Some(element_id.into());
        self
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }

    pub fn in_document(mut self, document: impl Into<String>) -> Self {
        self.document = Some(document.into());
        self
    }
}

impl From<DocError> for Diagnostic {
    fn from(e: DocError) -> Self {
        Diagnostic::new(e.message).at(e.location)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(doc) = &self.document {
            write!(f, "{doc}:")?;
        }
        if let Some(loc) = &self.location {
            write!(f, "{loc}: ")?;
        } else if self.document.is_some() {
            f.write_str(" ")?;
        }
        if let Some(rule) = &self.rule_id {
            write!(f, "[{rule}] ")?;
        }
        if let Some(el) = &self.element_id {
            write!(f, "({el}) ")?;
        }
        f.write_str(&self.message)
    }
}
