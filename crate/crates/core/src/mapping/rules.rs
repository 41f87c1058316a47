//! Mapping-rule documents.
//!
//! ```xml
//! <mappings>
//!   <map id="lamp" source="Socket" where="source.dev_id = 'mi-plug-01'"
//!        target="Lamp" direction="bidirectional">
//!     <attr target="on" expr="source.power"/>
//!     <writeback source="power" target="on"/>
//!   </map>
//! </mappings>
//! ```

use std::collections::BTreeSet;
use std::fmt::Write;

use roxmltree::Node;

use super::check::{type_of, ExprType, Scope};
use super::expr::Expr;
use crate::diagnostics::Diagnostic;
use crate::metamodel::Metamodel;
use crate::xml::{self, DocError, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToScenario,
    Bidirectional,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::ToScenario => "toScenario",
            Direction::Bidirectional => "bidirectional",
        }
    }
}

/// `target attribute := expr` evaluated with `source` bound to the runtime element.
#[derive(Debug, Clone, PartialEq)]
pub struct AttrMap {
    pub target: String,
    pub expr: Expr,
    pub location: Location,
}

/// Identity pair through which scenario writes reach the device.
#[derive(Debug, Clone, PartialEq)]
pub struct Writeback {
    pub source: String,
    pub target: String,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingRule {
    pub id: String,
    pub source_class: String,
    pub predicate: Option<Expr>,
    pub target_class: String,
    pub direction: Direction,
    pub attr_maps: Vec<AttrMap>,
    pub writebacks: Vec<Writeback>,
    pub location: Location,
}

impl MappingRule {
    /// Attributes of the source element that the predicate or any attribute map reads.
    pub fn source_reads(&self) -> BTreeSet<&str> {
        let exprs = self.predicate.iter().chain(self.attr_maps.iter().map(|m| &m.expr));
        exprs
            .flat_map(Expr::navigations)
            .filter(|(root, _)| *root == "source")
            .map(|(_, attr)| attr)
            .collect()
    }

    pub fn writeback_for_target(&self, target_attr: &str) -> Option<&Writeback> {
        if self.direction != Direction::Bidirectional {
            return None;
        }
        self.writebacks.iter().find(|w| w.target == target_attr)
    }
}

/// An ordered list of rules. `version` is assigned when the set is activated.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    pub rules: Vec<MappingRule>,
    pub version: u64,
}

impl RuleSet {
    pub fn rule(&self, id: &str) -> Option<&MappingRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Renders the rule document. Parsing the output yields the same rules.
    pub fn to_xml(&self) -> String {
        let mut out = String::from("<mappings>\n");
        for rule in &self.rules {
            let _ = write!(out, "  <map id=\"{}\" source=\"{}\"", xml::escape_attr(&rule.id), rule.source_class);
            if let Some(p) = &rule.predicate {
                let _ = write!(out, " where=\"{}\"", xml::escape_attr(&p.to_string()));
            }
            let _ = writeln!(out, " target=\"{}\" direction=\"{}\">", rule.target_class, rule.direction.as_str());
            for m in &rule.attr_maps {
                let _ = writeln!(
                    out,
                    "    <attr target=\"{}\" expr=\"{}\"/>",
                    m.target,
                    xml::escape_attr(&m.expr.to_string())
                );
            }
            for w in &rule.writebacks {
                let _ = writeln!(out, "    <writeback source=\"{}\" target=\"{}\"/>", w.source, w.target);
            }
            out.push_str("  </map>\n");
        }
        out.push_str("</mappings>\n");
        out
    }
}

fn parse_map(node: Node<'_, '_>) -> Result<MappingRule, DocError> {
    xml::check_attributes(node, &["id", "source", "where", "target", "direction"])?;
    let direction = match xml::required(node, "direction")? {
        "toScenario" => Direction::ToScenario,
        "bidirectional" => Direction::Bidirectional,
        other => {
            return Err(xml::invalid(
                node,
                "direction",
                format!("direction must be `toScenario` or `bidirectional`, not `{other}`"),
            ))
        }
    };
    let mut rule = MappingRule {
        id: xml::required(node, "id")?.to_owned(),
        source_class: xml::required(node, "source")?.to_owned(),
        predicate: xml::expr_attribute(node, "where")?,
        target_class: xml::required(node, "target")?.to_owned(),
        direction,
        attr_maps: Vec::new(),
        writebacks: Vec::new(),
        location: xml::node_location(node),
    };
    for child in xml::children(node) {
        xml::expect_tag(child, &["attr", "writeback"])?;
        let location = xml::node_location(child);
        if child.tag_name().name() == "attr" {
            xml::check_attributes(child, &["target", "expr"])?;
            let target = xml::required(child, "target")?.to_owned();
            xml::required(child, "expr")?;
            let expr = xml::expr_attribute(child, "expr")?.expect("presence checked");
            rule.attr_maps.push(AttrMap { target, expr, location });
        } else {
            xml::check_attributes(child, &["source", "target"])?;
            rule.writebacks.push(Writeback {
                source: xml::required(child, "source")?.to_owned(),
                target: xml::required(child, "target")?.to_owned(),
                location,
            });
        }
    }
    Ok(rule)
}

/// Parses a mapping document. Rule order is preserved; names are resolved by [`validate`].
pub fn parse_rules(text: &str) -> Result<RuleSet, DocError> {
    let doc = xml::parse_document(text)?;
    let root = doc.root_element();
    xml::expect_tag(root, &["mappings"])?;
    xml::check_attributes(root, &[])?;
    let rules = xml::children(root)
        .map(|node| {
            xml::expect_tag(node, &["map"])?;
            parse_map(node)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RuleSet { rules, version: 0 })
}

fn only_source(expr: &Expr) -> Option<String> {
    expr.navigations()
        .into_iter()
        .find(|(root, _)| *root != "source")
        .map(|(root, _)| format!("mapping expressions may only navigate `source`, found `{root}`"))
}

/// Type-checks and name-resolves a rule set. An empty result means the set can be activated.
pub fn validate(rules: &RuleSet, runtime: &Metamodel, scenario: &Metamodel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for rule in &rules.rules {
        let diag = |message: String, location: Location| Diagnostic::new(message).rule(&rule.id).at(location);
        if !ids.insert(rule.id.as_str()) {
            out.push(diag(format!("duplicate rule id `{}`", rule.id), rule.location));
        }
        let source = runtime.class(&rule.source_class);
        let target = scenario.class(&rule.target_class);
        if source.is_none() {
            out.push(diag(format!("unknown runtime class `{}`", rule.source_class), rule.location));
        }
        if target.is_none() {
            out.push(diag(format!("unknown scenario class `{}`", rule.target_class), rule.location));
        }
        let (Some(source), Some(target)) = (source, target) else { continue };
        let scope = Scope::new().with("source", source);

        if let Some(predicate) = &rule.predicate {
            if let Some(msg) = only_source(predicate) {
                out.push(diag(msg, rule.location));
            } else {
                match type_of(predicate, &scope) {
                    Ok(ExprType::Bool) => {}
                    Ok(t) => out.push(diag(format!("`where` must be Bool, found {t}"), rule.location)),
                    Err(msg) => out.push(diag(msg, rule.location)),
                }
            }
        }

        let mut mapped = BTreeSet::new();
        for m in &rule.attr_maps {
            if !mapped.insert(m.target.as_str()) {
                out.push(diag(format!("attribute `{}` is mapped more than once", m.target), m.location));
            }
            let Some(def) = target.attribute(&m.target) else {
                out.push(diag(format!("scenario class `{}` has no attribute `{}`", target.name, m.target), m.location));
                continue;
            };
            if !def.writable {
                out.push(diag(format!("{}.{} is read-only", target.name, m.target), m.location));
            }
            if let Some(msg) = only_source(&m.expr) {
                out.push(diag(msg, m.location));
                continue;
            }
            match type_of(&m.expr, &scope) {
                Ok(t) if t.assignable_to(&def.ty) => {}
                Ok(t) => out.push(diag(
                    format!("`{}` has type {t}, cannot assign to {}.{}: {}", m.expr, target.name, m.target, def.ty),
                    m.location,
                )),
                Err(msg) => out.push(diag(msg, m.location)),
            }
        }

        if rule.direction == Direction::ToScenario && !rule.writebacks.is_empty() {
            out.push(diag("writeback requires direction=\"bidirectional\"".into(), rule.writebacks[0].location));
        }
        for w in &rule.writebacks {
            let src = source.attribute(&w.source);
            let tgt = target.attribute(&w.target);
            match (src, tgt) {
                (None, _) => out.push(diag(format!("runtime class `{}` has no attribute `{}`", source.name, w.source), w.location)),
                (_, None) => out.push(diag(format!("scenario class `{}` has no attribute `{}`", target.name, w.target), w.location)),
                (Some(s), Some(t)) => {
                    if !s.writable {
                        out.push(diag(format!("{}.{} is not writable on the device", source.name, w.source), w.location));
                    }
                    if s.ty != t.ty {
                        out.push(diag(
                            format!("writeback pair {}/{} has different types ({} vs {})", w.source, w.target, s.ty, t.ty),
                            w.location,
                        ));
                    }
                    let identity = Expr::nav("source", &w.source);
                    if !rule.attr_maps.iter().any(|m| m.target == w.target && m.expr == identity) {
                        out.push(diag(
                            format!("writeback pair {}/{} needs <attr target=\"{}\" expr=\"source.{}\"/>", w.source, w.target, w.target, w.source),
                            w.location,
                        ));
                    }
                }
            }
        }
    }
    out
}
