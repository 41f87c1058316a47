//! Typing-and-instance kernel shared by the device runtime model and the
//! scenario model.
//!
//! A [`Metamodel`] is a registry of [`MetaClass`]es. A [`Model`] holds typed
//! [`ModelElement`]s that conform to one metamodel, and every mutation of a
//! model yields a [`ChangeEvent`] that can be replayed with [`Model::apply`].
//! There is no inheritance; attribute and reference names share one namespace
//! per class.

mod event;
mod model;
mod text;
mod value;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

pub use event::{ChangeEvent, ChangeKind, ModelTag, Origin};
pub use model::{diff, Model, ModelElement};
pub use text::{parse_metamodel, MetamodelParseError};
pub use value::{AttrType, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeDef {
    pub name: String,
    pub ty: AttrType,
    pub writable: bool,
}

impl AttributeDef {
    pub fn new(name: impl Into<String>, ty: AttrType) -> Self {
        Self { name: name.into(), ty, writable: true }
    }

    pub fn readonly(name: impl Into<String>, ty: AttrType) -> Self {
        Self { name: name.into(), ty, writable: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Multiplicity {
    /// `0..1`
    Optional,
    /// `1`
    One,
    /// `0..*`
    Many,
}

impl Multiplicity {
    pub fn upper(self) -> Option<usize> {
        match self {
            Multiplicity::Optional | Multiplicity::One => Some(1),
            Multiplicity::Many => None,
        }
    }

    pub fn lower(self) -> usize {
        match self {
            Multiplicity::One => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Multiplicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Multiplicity::Optional => "0..1",
            Multiplicity::One => "1",
            Multiplicity::Many => "0..*",
        })
    }
}

impl std::str::FromStr for Multiplicity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "0..1" => Ok(Multiplicity::Optional),
            "1" => Ok(Multiplicity::One),
            "0..*" | "*" => Ok(Multiplicity::Many),
            other => Err(format!("unknown multiplicity `{other}` (expected 0..1, 1 or 0..*)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceDef {
    pub name: String,
    pub target: String,
    pub multiplicity: Multiplicity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaClass {
    pub name: String,
    pub attributes: Vec<AttributeDef>,
    pub references: Vec<ReferenceDef>,
}

impl MetaClass {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), attributes: Vec::new(), references: Vec::new() }
    }

    pub fn attr(mut self, name: impl Into<String>, ty: AttrType) -> Self {
        self.attributes.push(AttributeDef::new(name, ty));
        self
    }

    pub fn readonly_attr(mut self, name: impl Into<String>, ty: AttrType) -> Self {
        self.attributes.push(AttributeDef::readonly(name, ty));
        self
    }

    pub fn reference(
        mut self,
        name: impl Into<String>,
        target: impl Into<String>,
        multiplicity: Multiplicity,
    ) -> Self {
        self.references.push(ReferenceDef { name: name.into(), target: target.into(), multiplicity });
        self
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn reference_def(&self, name: &str) -> Option<&ReferenceDef> {
        self.references.iter().find(|r| r.name == name)
    }

    fn check_members(&self) -> Result<(), ModelError> {
        let mut seen = BTreeSet::new();
        let names = self.attributes.iter().map(|a| &a.name).chain(self.references.iter().map(|r| &r.name));
        for name in names {
            if !seen.insert(name) {
                return Err(ModelError::DuplicateMember { class: self.name.clone(), member: name.clone() });
            }
        }
        for attr in &self.attributes {
            if let AttrType::Enum(values) = &attr.ty {
                if values.is_empty() {
                    return Err(ModelError::EmptyEnum { class: self.name.clone(), attr: attr.name.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Registry of classes. Declaration order is preserved for serialization.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metamodel {
    classes: Vec<MetaClass>,
}

impl Metamodel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a batch of classes whose references may point at each other.
    pub fn from_classes(classes: impl IntoIterator<Item = MetaClass>) -> Result<Self, ModelError> {
        let classes: Vec<MetaClass> = classes.into_iter().collect();
        let mut names = BTreeSet::new();
        for class in &classes {
            if !names.insert(class.name.as_str()) {
                return Err(ModelError::DuplicateClass(class.name.clone()));
            }
            class.check_members()?;
        }
        for class in &classes {
            for reference in &class.references {
                if !names.contains(reference.target.as_str()) {
                    return Err(ModelError::UnknownTargetClass {
                        class: class.name.clone(),
                        reference: reference.name.clone(),
                        target: reference.target.clone(),
                    });
                }
            }
        }
        Ok(Self { classes })
    }

    /// Registers one class. References must target already registered classes
    /// or the class itself.
    pub fn define_class(&mut self, class: MetaClass) -> Result<&MetaClass, ModelError> {
        if self.class(&class.name).is_some() {
            return Err(ModelError::DuplicateClass(class.name));
        }
        class.check_members()?;
        for reference in &class.references {
            if reference.target != class.name && self.class(&reference.target).is_none() {
                return Err(ModelError::UnknownTargetClass {
                    class: class.name.clone(),
                    reference: reference.name.clone(),
                    target: reference.target.clone(),
                });
            }
        }
        self.classes.push(class);
        Ok(self.classes.last().expect("just pushed"))
    }

    pub fn class(&self, name: &str) -> Option<&MetaClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn classes(&self) -> impl Iterator<Item = &MetaClass> {
        self.classes.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Serializes to the textual definition format read by [`parse_metamodel`].
    pub fn to_text(&self) -> String {
        text::serialize(self)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("class `{0}` is already registered")]
    DuplicateClass(String),
    #[error("class `{class}`: reference `{reference}` targets unknown class `{target}`")]
    UnknownTargetClass { class: String, reference: String, target: String },
    #[error("class `{class}` declares `{member}` more than once")]
    DuplicateMember { class: String, member: String },
    #[error("class `{class}`: enum attribute `{attr}` has no values")]
    EmptyEnum { class: String, attr: String },
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("element id `{0}` is already in use")]
    DuplicateId(String),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("class `{class}` has no attribute `{attr}`")]
    UnknownAttribute { class: String, attr: String },
    #[error("class `{class}` has no reference `{reference}`")]
    UnknownReference { class: String, reference: String },
    #[error("{class}.{attr} expects {expected}, got {found}")]
    TypeMismatch { class: String, attr: String, expected: String, found: String },
    #[error("{class}.{attr} is read-only")]
    ReadOnlyAttribute { class: String, attr: String },
    #[error("{class}.{reference} allows at most {max} link(s)")]
    MultiplicityExceeded { class: String, reference: String, max: usize },
    #[error("{class}.{reference} expects a `{expected}` element, `{target}` is a `{found}`")]
    WrongTargetClass { class: String, reference: String, target: String, expected: String, found: String },
    #[error("the root element `{0}` cannot be deleted")]
    CannotDeleteRoot(String),
    #[error("models do not share a metamodel")]
    MetamodelMismatch,
    #[error("event does not apply: {0}")]
    InvalidEvent(String),
}
