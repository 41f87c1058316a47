//! Scenario definition documents.
//!
//! ```xml
//! <scenario name="planting">
//!   <classes><![CDATA[
//!     class Plant { attr soilMoisture: Float ... }
//!   ]]></classes>
//!   <cardinality class="Plant" min="1" max="1"/>
//!   <instance class="Heater" id="heater"><set attr="on" value="false"/></instance>
//!   <rule id="watering" context="Plant">
//!     <hysteresis metric="self.soilMoisture" on="self.moistureMin" off="self.moistureMin + 5"/>
//!     <then><assign target="WaterPump.on" expr="true"/></then>
//!     <else><assign target="WaterPump.on" expr="false"/></else>
//!   </rule>
//!   <rule id="fertility" context="Plant" condition="self.soilFertility &lt; self.fertilityMin">
//!     <then><notify severity="warning" message="fertility low: {self.soilFertility}"/></then>
//!   </rule>
//!   <stateMachine id="care" context="Plant" initial="idle">
//!     <state id="idle"/>
//!     <state id="dry"/>
//!     <transition from="idle" to="dry" guard="self.soilMoisture &lt; 20">
//!       <assign target="WaterPump.on" expr="true"/>
//!     </transition>
//!   </stateMachine>
//! </scenario>
//! ```
//!
//! Expressions may navigate `self` (the context element) and any class name,
//! which denotes the only instance of that class.

use std::collections::BTreeSet;

use roxmltree::Node;
use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::mapping::{parse_expr, type_of, Expr, ExprType, Scope};
use crate::metamodel::{parse_metamodel, AttrType, Metamodel, Value};
use crate::xml::{self, DocError, DocErrorKind, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssignTarget {
    /// `self.attr`
    Context(String),
    /// `Class.attr`: every instance of the class.
    Class { class: String, attr: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Text(String),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Assign { target: AssignTarget, expr: Expr, location: Location },
    Notify { severity: Severity, template: Vec<Segment>, location: Location },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    Condition(Expr),
    /// Latches on when `metric` passes `on` and off when it passes `off`. With
    /// `on < off` the rule is active for low values, otherwise for high values.
    Hysteresis { metric: Expr, on: Expr, off: Expr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRule {
    pub id: String,
    pub context: String,
    pub trigger: Trigger,
    pub then: Vec<Action>,
    pub otherwise: Vec<Action>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub guard: Option<Expr>,
    pub actions: Vec<Action>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateMachineDef {
    pub id: String,
    pub context: String,
    pub initial: String,
    pub states: Vec<String>,
    pub transitions: Vec<Transition>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cardinality {
    pub class: String,
    pub min: usize,
    pub max: Option<usize>,
    pub location: Location,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDecl {
    pub class: String,
    pub id: String,
    pub values: Vec<(String, String, Location)>,
    pub location: Location,
}

/// A parsed scenario document; names are resolved by [`check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioDoc {
    pub name: String,
    pub metamodel: Metamodel,
    pub cardinalities: Vec<Cardinality>,
    pub instances: Vec<InstanceDecl>,
    pub rules: Vec<ActionRule>,
    pub machines: Vec<StateMachineDef>,
}

fn expr(node: Node<'_, '_>, name: &str) -> Result<Expr, DocError> {
    xml::required(node, name)?;
    Ok(xml::expr_attribute(node, name)?.expect("presence checked"))
}

fn template(node: Node<'_, '_>) -> Result<Vec<Segment>, DocError> {
    let text = xml::required(node, "message")?;
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Segment::Text(rest[..open].to_owned()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| xml::invalid(node, "message", "unclosed `{` in message template"))?;
        let inner = &rest[open + 1..open + close];
        let e = parse_expr(inner).map_err(|e| xml::invalid(node, "message", format!("in `{{{inner}}}`: {e}")))?;
        out.push(Segment::Expr(e));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        out.push(Segment::Text(rest.to_owned()));
    }
    Ok(out)
}

fn actions(parent: Node<'_, '_>) -> Result<Vec<Action>, DocError> {
    xml::children(parent)
        .map(|node| {
            xml::expect_tag(node, &["assign", "notify"])?;
            let location = xml::node_location(node);
            if node.tag_name().name() == "assign" {
                xml::check_attributes(node, &["target", "expr"])?;
                let raw = xml::required(node, "target")?;
                let (root, attr) = raw
                    .split_once('.')
                    .filter(|(r, a)| !r.is_empty() && !a.is_empty() && !a.contains('.'))
                    .ok_or_else(|| xml::invalid(node, "target", "assignment target must be `self.attr` or `Class.attr`"))?;
                let target = if root == "self" {
                    AssignTarget::Context(attr.to_owned())
                } else {
                    AssignTarget::Class { class: root.to_owned(), attr: attr.to_owned() }
                };
                Ok(Action::Assign { target, expr: expr(node, "expr")?, location })
            } else {
                xml::check_attributes(node, &["severity", "message"])?;
                let severity = match node.attribute("severity").unwrap_or("info") {
                    "info" => Severity::Info,
                    "warning" => Severity::Warning,
                    other => return Err(xml::invalid(node, "severity", format!("severity must be `info` or `warning`, not `{other}`"))),
                };
                Ok(Action::Notify { severity, template: template(node)?, location })
            }
        })
        .collect()
}

fn parse_rule(node: Node<'_, '_>) -> Result<ActionRule, DocError> {
    xml::check_attributes(node, &["id", "context", "condition"])?;
    let mut hysteresis = None;
    let (mut then, mut otherwise) = (None, None);
    for child in xml::children(node) {
        xml::expect_tag(child, &["hysteresis", "then", "else"])?;
        let duplicate = || xml::error(child, DocErrorKind::UnknownElementTag, format!("duplicate <{}>", child.tag_name().name()));
        match child.tag_name().name() {
            "hysteresis" => {
                xml::check_attributes(child, &["metric", "on", "off"])?;
                if hysteresis.is_some() {
                    return Err(duplicate());
                }
                hysteresis = Some(Trigger::Hysteresis { metric: expr(child, "metric")?, on: expr(child, "on")?, off: expr(child, "off")? });
            }
            "then" => {
                xml::check_attributes(child, &[])?;
                if then.replace(actions(child)?).is_some() {
                    return Err(duplicate());
                }
            }
            _ => {
                xml::check_attributes(child, &[])?;
                if otherwise.replace(actions(child)?).is_some() {
                    return Err(duplicate());
                }
            }
        }
    }
    let condition = xml::expr_attribute(node, "condition")?;
    let trigger = match (condition, hysteresis) {
        (Some(c), None) => Trigger::Condition(c),
        (None, Some(h)) => h,
        (Some(_), Some(_)) => return Err(xml::invalid(node, "condition", "a rule has either `condition` or <hysteresis>, not both")),
        (None, None) => {
            return Err(xml::error(node, DocErrorKind::MissingAttribute, "<rule> needs a `condition` attribute or a <hysteresis> child"))
        }
    };
    Ok(ActionRule {
        id: xml::required(node, "id")?.to_owned(),
        context: xml::required(node, "context")?.to_owned(),
        trigger,
        then: then.unwrap_or_default(),
        otherwise: otherwise.unwrap_or_default(),
        location: xml::node_location(node),
    })
}

fn parse_machine(node: Node<'_, '_>) -> Result<StateMachineDef, DocError> {
    xml::check_attributes(node, &["id", "context", "initial"])?;
    let mut machine = StateMachineDef {
        id: xml::required(node, "id")?.to_owned(),
        context: xml::required(node, "context")?.to_owned(),
        initial: xml::required(node, "initial")?.to_owned(),
        states: Vec::new(),
        transitions: Vec::new(),
        location: xml::node_location(node),
    };
    for child in xml::children(node) {
        xml::expect_tag(child, &["state", "transition"])?;
        if child.tag_name().name() == "state" {
            xml::check_attributes(child, &["id"])?;
            machine.states.push(xml::required(child, "id")?.to_owned());
        } else {
            xml::check_attributes(child, &["from", "to", "guard"])?;
            machine.transitions.push(Transition {
                from: xml::required(child, "from")?.to_owned(),
                to: xml::required(child, "to")?.to_owned(),
                guard: xml::expr_attribute(child, "guard")?,
                actions: actions(child)?,
                location: xml::node_location(child),
            });
        }
    }
    Ok(machine)
}

fn count(node: Node<'_, '_>, name: &str) -> Result<Option<usize>, DocError> {
    match node.attribute(name) {
        None | Some("*") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| xml::invalid(node, name, format!("`{name}` must be a count or `*`, not `{v}`"))),
    }
}

/// Parses a scenario document without resolving names.
pub fn parse_scenario(text: &str) -> Result<ScenarioDoc, DocError> {
    let doc = xml::parse_document(text)?;
    let root = doc.root_element();
    xml::expect_tag(root, &["scenario"])?;
    xml::check_attributes(root, &["name"])?;
    let mut out = ScenarioDoc {
        name: root.attribute("name").unwrap_or("scenario").to_owned(),
        metamodel: Metamodel::new(),
        cardinalities: Vec::new(),
        instances: Vec::new(),
        rules: Vec::new(),
        machines: Vec::new(),
    };
    let mut saw_classes = false;
    for node in xml::children(root) {
        xml::expect_tag(node, &["classes", "cardinality", "instance", "rule", "stateMachine"])?;
        let location = xml::node_location(node);
        match node.tag_name().name() {
            "classes" => {
                xml::check_attributes(node, &[])?;
                if saw_classes {
                    return Err(xml::error(node, DocErrorKind::UnknownElementTag, "duplicate <classes>"));
                }
                saw_classes = true;
                let body: String = node.children().filter_map(|c| c.text()).collect();
                let first = node.first_child().map(|c| xml::location_at(&doc, c.range().start)).unwrap_or(location);
                out.metamodel = parse_metamodel(&body).map_err(|e| DocError {
                    kind: DocErrorKind::Metamodel,
                    location: Location { line: first.line + e.line as u32 - 1, col: 1 },
                    message: e.message,
                })?;
            }
            "cardinality" => {
                xml::check_attributes(node, &["class", "min", "max"])?;
                let min = count(node, "min")?.unwrap_or(0);
                let max = count(node, "max")?;
                if max.is_some_and(|m| m < min) {
                    return Err(xml::invalid(node, "max", "`max` is below `min`"));
                }
                out.cardinalities.push(Cardinality { class: xml::required(node, "class")?.to_owned(), min, max, location });
            }
            "instance" => {
                xml::check_attributes(node, &["class", "id"])?;
                let mut values = Vec::new();
                for set in xml::children(node) {
                    xml::expect_tag(set, &["set"])?;
                    xml::check_attributes(set, &["attr", "value"])?;
                    values.push((
                        xml::required(set, "attr")?.to_owned(),
                        xml::required(set, "value")?.to_owned(),
                        xml::node_location(set),
                    ));
                }
                out.instances.push(InstanceDecl {
                    class: xml::required(node, "class")?.to_owned(),
                    id: xml::required(node, "id")?.to_owned(),
                    values,
                    location,
                });
            }
            "rule" => out.rules.push(parse_rule(node)?),
            _ => out.machines.push(parse_machine(node)?),
        }
    }
    if !saw_classes {
        return Err(xml::error(root, DocErrorKind::MissingAttribute, "<scenario> needs a <classes> block"));
    }
    Ok(out)
}

/// Reads an instance value written as text in the document.
pub fn literal(ty: &AttrType, text: &str) -> Option<Value> {
    let value = match ty {
        AttrType::Int => Value::Int(text.trim().parse().ok()?),
        AttrType::Float => Value::Float(text.trim().parse().ok()?),
        AttrType::Bool => Value::Bool(text.trim().parse().ok()?),
        AttrType::String | AttrType::Enum(_) => Value::from(text),
    };
    ty.accepts(&value).then_some(value)
}

/// Roots visible to expressions: `self` for the context class plus every class name.
fn scope<'a>(mm: &'a Metamodel, context: Option<&'a str>) -> Scope<'a> {
    let mut scope = Scope::new();
    if let Some(class) = context.and_then(|c| mm.class(c)) {
        scope = scope.with("self", class);
    }
    for class in mm.classes() {
        scope = scope.with(&class.name, class);
    }
    scope
}

struct Checker<'a> {
    mm: &'a Metamodel,
    out: Vec<Diagnostic>,
}

#[derive(Clone, Copy)]
enum Want {
    Bool,
    Number,
}

impl Want {
    fn accepts(self, t: ExprType) -> bool {
        match self {
            Want::Bool => t == ExprType::Bool,
            Want::Number => t.is_numeric(),
        }
    }

    fn describe(self) -> &'static str {
        match self {
            Want::Bool => "Bool",
            Want::Number => "a number",
        }
    }
}

impl Checker<'_> {
    fn push(&mut self, id: &str, location: Location, message: String) {
        self.out.push(Diagnostic::new(message).rule(id).at(location));
    }

    fn typed(&mut self, id: &str, location: Location, e: &Expr, context: &str, what: &str, want: Want) {
        match type_of(e, &scope(self.mm, Some(context))) {
            Ok(t) if want.accepts(t) => {}
            Ok(t) => self.push(id, location, format!("{what} `{e}` must be {}, found {t}", want.describe())),
            Err(msg) => self.push(id, location, format!("{what}: {msg}")),
        }
    }

    fn actions(&mut self, id: &str, context: &str, actions: &[Action]) {
        for action in actions {
            match action {
                Action::Assign { target, expr, location } => {
                    let (class, attr) = match target {
                        AssignTarget::Context(attr) => (context, attr.as_str()),
                        AssignTarget::Class { class, attr } => (class.as_str(), attr.as_str()),
                    };
                    let Some(meta) = self.mm.class(class) else {
                        self.push(id, *location, format!("unknown class `{class}` in assignment"));
                        continue;
                    };
                    let Some(def) = meta.attribute(attr) else {
                        self.push(id, *location, format!("class `{class}` has no attribute `{attr}`"));
                        continue;
                    };
                    if !def.writable {
                        self.push(id, *location, format!("{class}.{attr} is read-only"));
                    }
                    match type_of(expr, &scope(self.mm, Some(context))) {
                        Ok(t) if t.assignable_to(&def.ty) => {}
                        Ok(t) => self.push(id, *location, format!("cannot assign {t} `{expr}` to {class}.{attr}: {}", def.ty)),
                        Err(msg) => self.push(id, *location, msg),
                    }
                }
                Action::Notify { template, location, .. } => {
                    for segment in template {
                        if let Segment::Expr(e) = segment {
                            if let Err(msg) = type_of(e, &scope(self.mm, Some(context))) {
                                self.push(id, *location, format!("in message: {msg}"));
                            }
                        }
                    }
                }
            }
        }
    }

    fn context(&mut self, id: &str, location: Location, context: &str) -> bool {
        if self.mm.class(context).is_none() {
            self.push(id, location, format!("unknown context class `{context}`"));
            return false;
        }
        true
    }
}

/// Resolves names and types in a parsed scenario. An empty result means it can be loaded.
pub fn check(doc: &ScenarioDoc) -> Vec<Diagnostic> {
    let mm = &doc.metamodel;
    let mut c = Checker { mm, out: Vec::new() };
    let mut ids = BTreeSet::new();
    for card in &doc.cardinalities {
        if mm.class(&card.class).is_none() {
            c.out.push(Diagnostic::new(format!("cardinality for unknown class `{}`", card.class)).at(card.location));
        }
    }
    let mut instance_ids = BTreeSet::new();
    for inst in &doc.instances {
        let diag = |m: String| Diagnostic::new(m).element(&inst.id).at(inst.location);
        if !instance_ids.insert(inst.id.as_str()) {
            c.out.push(diag(format!("duplicate instance id `{}`", inst.id)));
        }
        if inst.id.contains('@') {
            c.out.push(diag("instance ids may not contain `@`, which is reserved for rule-derived elements".into()));
        }
        let Some(class) = mm.class(&inst.class) else {
            c.out.push(diag(format!("unknown class `{}`", inst.class)));
            continue;
        };
        for (attr, value, location) in &inst.values {
            match class.attribute(attr) {
                None => c.out.push(Diagnostic::new(format!("class `{}` has no attribute `{attr}`", class.name)).element(&inst.id).at(*location)),
                Some(def) if literal(&def.ty, value).is_none() => c.out.push(
                    Diagnostic::new(format!("`{value}` is not a valid {}", def.ty)).element(&inst.id).at(*location),
                ),
                Some(_) => {}
            }
        }
    }
    for rule in &doc.rules {
        if !ids.insert(rule.id.as_str()) {
            c.push(&rule.id, rule.location, format!("duplicate rule id `{}`", rule.id));
        }
        if !c.context(&rule.id, rule.location, &rule.context) {
            continue;
        }
        match &rule.trigger {
            Trigger::Condition(e) => c.typed(&rule.id, rule.location, e, &rule.context, "condition", Want::Bool),
            Trigger::Hysteresis { metric, on, off } => {
                for (what, e) in [("metric", metric), ("on", on), ("off", off)] {
                    c.typed(&rule.id, rule.location, e, &rule.context, what, Want::Number);
                }
            }
        }
        c.actions(&rule.id, &rule.context, &rule.then);
        c.actions(&rule.id, &rule.context, &rule.otherwise);
    }
    for sm in &doc.machines {
        if !ids.insert(sm.id.as_str()) {
            c.push(&sm.id, sm.location, format!("duplicate rule id `{}`", sm.id));
        }
        let states: BTreeSet<&str> = sm.states.iter().map(String::as_str).collect();
        if states.len() != sm.states.len() {
            c.push(&sm.id, sm.location, "duplicate state id".into());
        }
        if !states.contains(sm.initial.as_str()) {
            c.push(&sm.id, sm.location, format!("initial state `{}` is not declared", sm.initial));
        }
        if !c.context(&sm.id, sm.location, &sm.context) {
            continue;
        }
        for t in &sm.transitions {
            for end in [&t.from, &t.to] {
                if !states.contains(end.as_str()) {
                    c.push(&sm.id, t.location, format!("transition refers to undeclared state `{end}`"));
                }
            }
            if let Some(g) = &t.guard {
                c.typed(&sm.id, t.location, g, &sm.context, "guard", Want::Bool);
            }
            c.actions(&sm.id, &sm.context, &t.actions);
        }
    }
    c.out
}
