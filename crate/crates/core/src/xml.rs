//! Shared helpers for the XML documents (mapping rules, scenarios).

use std::fmt;

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapping::{parse_expr, Expr};

/// 1-based line and column in a source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DocErrorKind {
    XmlMalformed,
    UnknownElementTag,
    MissingAttribute,
    InvalidAttribute,
    ExprSyntax,
    Metamodel,
}

/// A located parse failure in an XML document.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{location}: {message}")]
pub struct DocError {
    pub kind: DocErrorKind,
    pub location: Location,
    pub message: String,
}

pub(crate) fn parse_document(text: &str) -> Result<Document<'_>, DocError> {
    Document::parse(text).map_err(|e| {
        let pos = e.pos();
        let text = e.to_string();
        // the location is reported separately
        let message = text.strip_suffix(&format!(" at {pos}")).unwrap_or(&text).to_owned();
        DocError { kind: DocErrorKind::XmlMalformed, location: Location { line: pos.row, col: pos.col }, message }
    })
}

pub(crate) fn location_at(doc: &Document<'_>, offset: usize) -> Location {
    let pos = doc.text_pos_at(offset);
    Location { line: pos.row, col: pos.col }
}

pub(crate) fn node_location(node: Node<'_, '_>) -> Location {
    location_at(node.document(), node.range().start)
}

pub(crate) fn error(node: Node<'_, '_>, kind: DocErrorKind, message: impl Into<String>) -> DocError {
    DocError { kind, location: node_location(node), message: message.into() }
}

/// Element children, skipping text, comments and processing instructions.
pub(crate) fn children<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children().filter(Node::is_element)
}

pub(crate) fn expect_tag(node: Node<'_, '_>, tags: &[&str]) -> Result<(), DocError> {
    let name = node.tag_name().name();
    if tags.contains(&name) {
        Ok(())
    } else {
        Err(error(
            node,
            DocErrorKind::UnknownElementTag,
            format!("unknown element <{name}> (expected {})", tags.iter().map(|t| format!("<{t}>")).collect::<Vec<_>>().join(", ")),
        ))
    }
}

/// Rejects attributes outside `allowed`, so typos do not pass silently.
pub(crate) fn check_attributes(node: Node<'_, '_>, allowed: &[&str]) -> Result<(), DocError> {
    for attr in node.attributes() {
        if !allowed.contains(&attr.name()) {
            return Err(DocError {
                kind: DocErrorKind::InvalidAttribute,
                location: location_at(node.document(), attr.range().start),
                message: format!("<{}> does not take attribute `{}`", node.tag_name().name(), attr.name()),
            });
        }
    }
    Ok(())
}

pub(crate) fn required<'a>(node: Node<'a, '_>, name: &str) -> Result<&'a str, DocError> {
    node.attribute(name).ok_or_else(|| {
        error(
            node,
            DocErrorKind::MissingAttribute,
            format!("<{}> is missing attribute `{name}`", node.tag_name().name()),
        )
    })
}

pub(crate) fn invalid(node: Node<'_, '_>, name: &str, message: impl Into<String>) -> DocError {
    let location = node
        .attribute_node(name)
        .map(|a| location_at(node.document(), a.range_value().start))
        .unwrap_or_else(|| node_location(node));
    DocError { kind: DocErrorKind::InvalidAttribute, location, message: message.into() }
}

/// Parses an attribute as an expression; syntax errors point into the attribute value.
pub(crate) fn expr_attribute(node: Node<'_, '_>, name: &str) -> Result<Option<Expr>, DocError> {
    let Some(attr) = node.attribute_node(name) else { return Ok(None) };
    parse_expr(attr.value()).map(Some).map_err(|e| {
        // offsets inside the raw value only drift when entities precede the error
        let char_offset: usize =
            attr.value().chars().take(e.position).map(char::len_utf8).sum::<usize>();
        DocError {
            kind: DocErrorKind::ExprSyntax,
            location: location_at(node.document(), attr.range_value().start + char_offset),
            message: format!("in `{name}`: {e}"),
        }
    })
}

pub(crate) fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}
