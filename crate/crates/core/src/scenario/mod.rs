//! The scenario model and the behavior that runs on it: action rules with
//! optional hysteresis, state machines, and user notifications.

mod document;

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    check, literal, parse_scenario, Action, ActionRule, AssignTarget, Cardinality, InstanceDecl, ScenarioDoc, Segment, Severity,
    StateMachineDef, Transition, Trigger,
};

use crate::diagnostics::Diagnostic;
use crate::mapping::{eval, EvalContext, Expr};
use crate::metamodel::{ChangeEvent, Metamodel, Model, ModelElement, ModelTag, Origin, Value};
use crate::xml::DocError;

const DIAGNOSTIC_HISTORY: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    /// Simulated hours at which the notification was raised.
    pub time_hours: f64,
    pub severity: Severity,
    pub message: String,
    pub rule_id: String,
    pub element_id: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(#[from] DocError),
    #[error("scenario failed validation with {} diagnostic(s)", .0.len())]
    Validation(Vec<Diagnostic>),
    #[error("{0}")]
    Cardinality(Diagnostic),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("element `{0}` has no Bool attribute `on`")]
    NotAnActuator(String),
    #[error("the scenario has no Recognizer")]
    NoRecognizer,
}

impl ScenarioError {
    /// The problems as located diagnostics.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ScenarioError::Parse(e) => vec![Diagnostic::from(e.clone())],
            ScenarioError::Validation(d) => d.clone(),
            ScenarioError::Cardinality(d) => vec![d.clone()],
            other => vec![Diagnostic::new(other.to_string())],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    pub events: Vec<ChangeEvent>,
    pub notifications: Vec<Notification>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineState {
    pub machine_id: String,
    pub element_id: String,
    pub state: String,
}

/// Parses and checks a scenario document, reporting every problem found.
pub fn validate_scenario(text: &str) -> Vec<Diagnostic> {
    load_scenario(text).err().map(|e| e.diagnostics()).unwrap_or_default()
}

/// Loads a scenario: registers its classes, creates the declared instances and
/// puts every state machine in its initial state.
pub fn load_scenario(text: &str) -> Result<ScenarioEngine, ScenarioError> {
    let doc = parse_scenario(text)?;
    let diags = check(&doc);
    if !diags.is_empty() {
        return Err(ScenarioError::Validation(diags));
    }
    ScenarioEngine::new(doc)
}

pub struct ScenarioEngine {
    doc: ScenarioDoc,
    model: Model,
    /// (machine id, element id) → current state
    machine_states: BTreeMap<(String, String), String>,
    /// (rule id, element id) → whether the rule was active at the previous step
    active: BTreeMap<(String, String), bool>,
    notifications: Vec<Notification>,
    diagnostics: VecDeque<Diagnostic>,
    faults: u64,
}

impl ScenarioEngine {
    fn new(doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        let metamodel = Arc::new(doc.metamodel.clone());
        let mut model = Model::new(ModelTag::Scenario, Arc::clone(&metamodel));
        for card in &doc.cardinalities {
            let declared = doc.instances.iter().filter(|i| i.class == card.class).count();
            if card.max.is_some_and(|max| declared > max) {
                return Err(ScenarioError::Cardinality(
                    Diagnostic::new(format!(
                        "{declared} {} instances declared, at most {} allowed",
                        card.class,
                        card.max.expect("checked")
                    ))
                    .at(card.location),
                ));
            }
        }
        for inst in &doc.instances {
            let class = metamodel.class(&inst.class).expect("checked");
            let values = inst.values.iter().map(|(attr, text, _)| {
                let ty = &class.attribute(attr).expect("checked").ty;
                (attr.clone(), literal(ty, text).expect("checked"))
            });
            model.instantiate(&inst.class, &inst.id, values.collect::<Vec<_>>(), Origin::ScenarioEngine).expect("checked");
        }
        let mut engine = Self {
            doc,
            model,
            machine_states: BTreeMap::new(),
            active: BTreeMap::new(),
            notifications: Vec::new(),
            diagnostics: VecDeque::new(),
            faults: 0,
        };
        engine.track_elements();
        Ok(engine)
    }

    pub fn name(&self) -> &str {
        &self.doc.name
    }

    pub fn document(&self) -> &ScenarioDoc {
        &self.doc
    }

    pub fn metamodel(&self) -> &Arc<Metamodel> {
        self.model.metamodel()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    /// Every notification raised so far, oldest first.
    pub fn notifications(&self) -> &[Notification] {
        &self.notifications
    }

    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter()
    }

    pub fn fault_count(&self) -> u64 {
        self.faults
    }

    pub fn machine_states(&self) -> Vec<MachineState> {
        self.machine_states
            .iter()
            .map(|((machine_id, element_id), state)| MachineState {
                machine_id: machine_id.clone(),
                element_id: element_id.clone(),
                state: state.clone(),
            })
            .collect()
    }

    pub fn machine_state(&self, machine_id: &str, element_id: &str) -> Option<&str> {
        self.machine_states.get(&(machine_id.to_owned(), element_id.to_owned())).map(String::as_str)
    }

    /// Whether `rule_id` was active for `element_id` after the last step.
    pub fn rule_active(&self, rule_id: &str, element_id: &str) -> bool {
        self.active.get(&(rule_id.to_owned(), element_id.to_owned())).copied().unwrap_or(false)
    }

    /// Problems with instance counts in the current model.
    pub fn cardinality_diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for card in &self.doc.cardinalities {
            let n = self.model.elements_of(&card.class).count();
            if n < card.min {
                out.push(Diagnostic::new(format!("{n} {} instance(s), at least {} required", card.class, card.min)).at(card.location));
            }
            if card.max.is_some_and(|max| n > max) {
                out.push(
                    Diagnostic::new(format!("{n} {} instance(s), no more than {} allowed", card.class, card.max.expect("checked")))
                        .at(card.location),
                );
            }
        }
        out
    }

    fn fault(&mut self, rule_id: &str, element_id: &str, message: String) {
        self.faults += 1;
        let d = Diagnostic::new(message).rule(rule_id).element(element_id);
        tracing::warn!(diagnostic = %d, "behavior fault");
        if self.diagnostics.len() == DIAGNOSTIC_HISTORY {
            self.diagnostics.pop_front();
        }
        self.diagnostics.push_back(d);
    }

    /// Starts machines for new context elements and forgets state of removed ones.
    fn track_elements(&mut self) {
        let model = &self.model;
        self.machine_states.retain(|(_, id), _| model.contains(id));
        self.active.retain(|(_, id), _| model.contains(id));
        for sm in &self.doc.machines {
            for element in self.model.elements_of(&sm.context) {
                self.machine_states.entry((sm.id.clone(), element.id.clone())).or_insert_with(|| sm.initial.clone());
            }
        }
    }

    fn eval_in(&self, expr: &Expr, context: &ModelElement) -> Result<Value, String> {
        let mut ctx = EvalContext::new().bind("self", Some(context));
        for class in self.model.metamodel().classes() {
            let mut instances = self.model.elements_of(&class.name);
            let only = match (instances.next(), instances.next()) {
                (Some(e), None) => Some(e),
                _ => None,
            };
            ctx = ctx.bind(&class.name, only);
        }
        eval(expr, &ctx).map_err(|e| format!("`{expr}`: {e}"))
    }

    fn eval_bool(&self, expr: &Expr, context: &ModelElement) -> Result<bool, String> {
        match self.eval_in(expr, context)? {
            Value::Bool(b) => Ok(b),
            other => Err(format!("`{expr}` gave {} instead of Bool", other.kind())),
        }
    }

    fn eval_f64(&self, expr: &Expr, context: &ModelElement) -> Result<f64, String> {
        let v = self.eval_in(expr, context)?;
        v.as_f64().ok_or_else(|| format!("`{expr}` gave {} instead of a number", v.kind()))
    }

    fn render(&self, template: &[Segment], context: &ModelElement) -> Result<String, String> {
        let mut out = String::new();
        for segment in template {
            match segment {
                Segment::Text(t) => out.push_str(t),
                Segment::Expr(e) => out.push_str(&self.eval_in(e, context)?.to_string()),
            }
        }
        Ok(out)
    }

    /// Runs `actions` with `context_id` as `self`. Notifications are only raised when `notify` is set.
    fn run(&mut self, owner: &str, context_id: &str, actions: &[Action], notify: bool, now: f64, out: &mut StepOutput) {
        for action in actions {
            let Some(context) = self.model.get(context_id).cloned() else { return };
            match action {
                Action::Assign { target, expr, .. } => {
                    let value = match self.eval_in(expr, &context) {
                        Ok(v) => v,
                        Err(msg) => {
                            self.fault(owner, context_id, msg);
                            continue;
                        }
                    };
                    let (targets, attr): (Vec<String>, &str) = match target {
                        AssignTarget::Context(attr) => (vec![context_id.to_owned()], attr),
                        AssignTarget::Class { class, attr } => (self.model.elements_of(class).map(|e| e.id.clone()).collect(), attr),
                    };
                    for id in targets {
                        let class = &self.model.get(&id).expect("listed").class;
                        let ty = &self.model.metamodel().class(class).expect("typed").attribute(attr).expect("checked").ty;
                        let Some(v) = ty.coerce(value.clone()) else {
                            self.fault(owner, &id, format!("{attr} expects {ty}, got {value}"));
                            continue;
                        };
                        match self.model.set_attribute(&id, attr, v, Origin::ScenarioEngine) {
                            Ok(event) => out.events.extend(event),
                            Err(e) => self.fault(owner, &id, e.to_string()),
                        }
                    }
                }
                Action::Notify { severity, template, .. } => {
                    if !notify {
                        continue;
                    }
                    match self.render(template, &context) {
                        Ok(message) => {
                            let n = Notification {
                                time_hours: now,
                                severity: *severity,
                                message,
                                rule_id: owner.to_owned(),
                                element_id: context_id.to_owned(),
                            };
                            self.notifications.push(n.clone());
                            out.notifications.push(n);
                        }
                        Err(msg) => self.fault(owner, context_id, msg),
                    }
                }
            }
        }
    }

    /// Evaluates whether a rule is active for one context element, given its previous state.
    fn rule_state(&self, rule: &ActionRule, context: &ModelElement, was: bool) -> Result<bool, String> {
        match &rule.trigger {
            Trigger::Condition(c) => self.eval_bool(c, context),
            Trigger::Hysteresis { metric, on, off } => {
                let (x, on, off) = (self.eval_f64(metric, context)?, self.eval_f64(on, context)?, self.eval_f64(off, context)?);
                if on == off {
                    return Err(format!("hysteresis thresholds are equal ({on})"));
                }
                let low = on < off;
                Ok(if low {
                    if x < on {
                        true
                    } else if x > off {
                        false
                    } else {
                        was
                    }
                } else if x > on {
                    true
                } else if x < off {
                    false
                } else {
                    was
                })
            }
        }
    }

    /// One behavior step: every state machine takes at most one transition per
    /// context element, then action rules run in document order.
    ///
    /// Assignments are re-applied every step while their branch holds, so they
    /// only produce events when a value actually changes. Notifications fire on
    /// the step a branch becomes active.
    pub fn step_behavior(&mut self, now: f64) -> StepOutput {
        self.track_elements();
        let mut out = StepOutput::default();
        let machines = self.doc.machines.clone();
        for sm in &machines {
            let ids: Vec<String> = self.model.elements_of(&sm.context).map(|e| e.id.clone()).collect();
            for id in ids {
                let key = (sm.id.clone(), id.clone());
                let current = self.machine_states[&key].clone();
                for t in sm.transitions.iter().filter(|t| t.from == current) {
                    let context = self.model.get(&id).expect("listed").clone();
                    let enabled = match &t.guard {
                        None => Ok(true),
                        Some(g) => self.eval_bool(g, &context),
                    };
                    match enabled {
                        Ok(true) => {
                            self.run(&sm.id, &id, &t.actions, true, now, &mut out);
                            self.machine_states.insert(key, t.to.clone());
                            break;
                        }
                        Ok(false) => {}
                        Err(msg) => self.fault(&sm.id, &id, msg),
                    }
                }
            }
        }

        let rules = self.doc.rules.clone();
        for rule in &rules {
            let ids: Vec<String> = self.model.elements_of(&rule.context).map(|e| e.id.clone()).collect();
            for id in ids {
                let key = (rule.id.clone(), id.clone());
                let was = self.active.get(&key).copied().unwrap_or(false);
                let context = self.model.get(&id).expect("listed").clone();
                let now_active = match self.rule_state(rule, &context, was) {
                    Ok(b) => b,
                    Err(msg) => {
                        self.fault(&rule.id, &id, msg);
                        continue;
                    }
                };
                self.active.insert(key, now_active);
                if now_active {
                    self.run(&rule.id, &id, &rule.then, !was, now, &mut out);
                } else {
                    self.run(&rule.id, &id, &rule.otherwise, was, now, &mut out);
                }
            }
        }
        out
    }

    fn sole(&self, class: &str) -> Option<String> {
        let mut it = self.model.elements_of(class);
        match (it.next(), it.next()) {
            (Some(e), None) => Some(e.id.clone()),
            _ => None,
        }
    }

    /// Sets the recognizer's plant name on behalf of the user. Returns no event when unchanged.
    pub fn set_plant_name(&mut self, name: &str) -> Result<Option<ChangeEvent>, ScenarioError> {
        let id = self.sole("Recognizer").ok_or(ScenarioError::NoRecognizer)?;
        self.model
            .set_attribute(&id, "plantName", Value::from(name), Origin::Console)
            .map_err(|_| ScenarioError::NoRecognizer)
    }

    /// Switches an actuator (any element with a Bool `on` attribute) on behalf of the user.
    pub fn set_actuator(&mut self, element_id: &str, on: bool) -> Result<Option<ChangeEvent>, ScenarioError> {
        let element = self.model.get(element_id).ok_or_else(|| ScenarioError::UnknownElement(element_id.to_owned()))?;
        if !matches!(element.attr("on"), Some(Value::Bool(_))) {
            return Err(ScenarioError::NotAnActuator(element_id.to_owned()));
        }
        self.model
            .set_attribute(element_id, "on", Value::Bool(on), Origin::Console)
            .map_err(|_| ScenarioError::NotAnActuator(element_id.to_owned()))
    }
}
