//! Line-oriented metamodel definition format.
//!
//! ```text
//! # comment
//! class SmartHomeOS {
//!   ref devices -> Device [0..*]
//! }
//! class Device {
//!   attr dev_id: String: readonly
//!   attr mode: Enum(auto, manual)
//! }
//! ```

use std::fmt::Write;

use thiserror::Error;

use super::{AttrType, AttributeDef, MetaClass, Metamodel, Multiplicity, ReferenceDef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct MetamodelParseError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> MetamodelParseError {
    MetamodelParseError { line, message: message.into() }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn identifier(line: usize, s: &str, what: &str) -> Result<String, MetamodelParseError> {
    if is_identifier(s) {
        Ok(s.to_owned())
    } else {
        Err(err(line, format!("invalid {what} `{s}`")))
    }
}

fn parse_type(line: usize, s: &str) -> Result<AttrType, MetamodelParseError> {
    match s {
        "Int" => Ok(AttrType::Int),
        "Float" => Ok(AttrType::Float),
        "Bool" => Ok(AttrType::Bool),
        "String" => Ok(AttrType::String),
        _ => {
            let inner = s
                .strip_prefix("Enum(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| err(line, format!("unknown type `{s}`")))?;
            let values = inner
                .split(',')
                .map(|v| identifier(line, v.trim(), "enum literal"))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(AttrType::Enum(values))
        }
    }
}

fn parse_attr(line: usize, rest: &str) -> Result<AttributeDef, MetamodelParseError> {
    let mut parts = rest.splitn(2, ':');
    let name = identifier(line, parts.next().unwrap_or("").trim(), "attribute name")?;
    let ty_part = parts.next().ok_or_else(|| err(line, "expected `attr name: Type`"))?.trim();
    // the type may itself contain no colon, so a trailing `: readonly` is split off last
    let (ty_text, writable) = match ty_part.rsplit_once(':') {
        Some((ty, flag)) if flag.trim() == "readonly" => (ty.trim(), false),
        Some((_, flag)) => return Err(err(line, format!("unknown attribute flag `{}`", flag.trim()))),
        None => (ty_part, true),
    };
    Ok(AttributeDef { name, ty: parse_type(line, ty_text)?, writable })
}

fn parse_ref(line: usize, rest: &str) -> Result<ReferenceDef, MetamodelParseError> {
    let (name, rest) = rest.split_once("->").ok_or_else(|| err(line, "expected `ref name -> Class [mult]`"))?;
    let name = identifier(line, name.trim(), "reference name")?;
    let rest = rest.trim();
    let (target, multiplicity) = match rest.split_once('[') {
        Some((target, mult)) => {
            let mult = mult.trim().strip_suffix(']').ok_or_else(|| err(line, "unclosed `[`"))?;
            (target.trim(), mult.trim().parse::<Multiplicity>().map_err(|m| err(line, m))?)
        }
        None => (rest, Multiplicity::Many),
    };
    Ok(ReferenceDef { name, target: identifier(line, target, "class name")?, multiplicity })
}

/// Parses the definition text. Line numbers in errors are 1-based.
pub fn parse_metamodel(text: &str) -> Result<Metamodel, MetamodelParseError> {
    let mut classes: Vec<(usize, MetaClass)> = Vec::new();
    let mut open: Option<(usize, MetaClass)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("class ") {
            if open.is_some() {
                return Err(err(line, "nested `class` (missing `}`?)"));
            }
            let name = rest.trim().strip_suffix('{').ok_or_else(|| err(line, "expected `class Name {`"))?;
            open = Some((line, MetaClass::new(identifier(line, name.trim(), "class name")?)));
        } else if content == "}" {
            let class = open.take().ok_or_else(|| err(line, "`}` without open class"))?;
            classes.push(class);
        } else {
            let (_, class) = open.as_mut().ok_or_else(|| err(line, "member outside of a class"))?;
            if let Some(rest) = content.strip_prefix("attr ") {
                class.attributes.push(parse_attr(line, rest)?);
            } else if let Some(rest) = content.strip_prefix("ref ") {
                class.references.push(parse_ref(line, rest)?);
            } else {
                return Err(err(line, format!("expected `attr` or `ref`, found `{content}`")));
            }
        }
    }
    if let Some((line, class)) = open {
        return Err(err(line, format!("class `{}` is not closed", class.name)));
    }
    let lines: Vec<usize> = classes.iter().map(|(l, _)| *l).collect();
    Metamodel::from_classes(classes.into_iter().map(|(_, c)| c)).map_err(|e| {
        let name = match &e {
            super::ModelError::DuplicateClass(n) => n.clone(),
            super::ModelError::UnknownTargetClass { class, .. }
            | super::ModelError::DuplicateMember { class, .. }
            | super::ModelError::EmptyEnum { class, .. } => class.clone(),
            _ => String::new(),
        };
        let line = text
            .lines()
            .enumerate()
            .filter(|(i, l)| lines.contains(&(i + 1)) && l.contains(&format!("class {name}")))
            .map(|(i, _)| i + 1)
            .last()
            .unwrap_or(1);
        err(line, e.to_string())
    })
}

pub(super) fn serialize(metamodel: &Metamodel) -> String {
    let mut out = String::new();
    for class in metamodel.classes() {
        let _ = writeln!(out, "class {} {{", class.name);
        for a in &class.attributes {
            let flag = if a.writable { "" } else { ": readonly" };
            let _ = writeln!(out, "  attr {}: {}{}", a.name, a.ty, flag);
        }
        for r in &class.references {
            let _ = writeln!(out, "  ref {} -> {} [{}]", r.name, r.target, r.multiplicity);
        }
        out.push_str("}\n");
    }
    out
}
