//! Keeps the scenario model consistent with the runtime model under the active
//! mapping rules, and turns scenario-side changes into device writes.
//!
//! Each rule/runtime-element match owns exactly one scenario element, with id
//! `ruleId@runtimeId`. Scenario elements without a binding are never touched.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Diagnostic;
use crate::mapping::{eval, validate, EvalContext, MappingRule, RuleSet};
use crate::metamodel::{diff, ChangeEvent, ChangeKind, Metamodel, Model, ModelElement, Origin, Value};

const DIAGNOSTIC_HISTORY: usize = 200;

/// One materialized rule application.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Binding {
    pub rule_id: String,
    pub runtime_id: String,
    pub scenario_id: String,
}

pub fn scenario_id(rule_id: &str, runtime_id: &str) -> String {
    format!("{rule_id}@{runtime_id}")
}

/// A device write derived from a scenario change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteRequest {
    pub dev_id: String,
    pub attr: String,
    pub value: Value,
    pub rule_id: String,
    pub scenario_id: String,
    /// Origin of the scenario event that caused the write.
    pub cause: Origin,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SyncStats {
    pub runtime_events: u64,
    pub scenario_events: u64,
    /// Events dropped because the synchronizer itself caused them.
    pub suppressed: u64,
    /// Device writes requested, keyed by the origin of the causing event.
    pub writes_by_origin: BTreeMap<Origin, u64>,
    pub write_failures: u64,
    pub eval_faults: u64,
    pub resyncs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reload {
    pub version: u64,
    /// False when the uploaded rules equal the active ones; nothing was swapped.
    pub changed: bool,
    #[serde(skip)]
    pub events: Vec<ChangeEvent>,
}

/// Attribute values one rule produces for one runtime element.
type Projection = BTreeMap<String, Value>;

pub struct Synchronizer {
    rules: RuleSet,
    runtime_mm: Arc<Metamodel>,
    scenario_mm: Arc<Metamodel>,
    /// (rule id, runtime id) → scenario id
    bindings: BTreeMap<(String, String), String>,
    by_scenario: BTreeMap<String, (String, String)>,
    needs_resync: bool,
    stats: SyncStats,
    diagnostics: VecDeque<Diagnostic>,
}

impl Synchronizer {
    /// Activates `rules` as version 1. Fails with the validation diagnostics.
    pub fn new(mut rules: RuleSet, runtime_mm: Arc<Metamodel>, scenario_mm: Arc<Metamodel>) -> Result<Self, Vec<Diagnostic>> {
        let diags = validate(&rules, &runtime_mm, &scenario_mm);
        if !diags.is_empty() {
            return Err(diags);
        }
        rules.version = 1;
        Ok(Self {
            rules,
            runtime_mm,
            scenario_mm,
            bindings: BTreeMap::new(),
            by_scenario: BTreeMap::new(),
            needs_resync: false,
            stats: SyncStats::default(),
            diagnostics: VecDeque::new(),
        })
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn version(&self) -> u64 {
        self.rules.version
    }

    pub fn stats(&self) -> &SyncStats {
        &self.stats
    }

    pub fn needs_resync(&self) -> bool {
        self.needs_resync
    }

    /// Recent evaluation and write faults, oldest first.
    pub fn diagnostics(&self) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics.iter()
    }

    pub fn bindings(&self) -> impl Iterator<Item = Binding> + '_ {
        self.bindings.iter().map(|((rule_id, runtime_id), scenario_id)| Binding {
            rule_id: rule_id.clone(),
            runtime_id: runtime_id.clone(),
            scenario_id: scenario_id.clone(),
        })
    }

    pub fn binding_for_scenario(&self, scenario_id: &str) -> Option<Binding> {
        self.by_scenario.get(scenario_id).map(|(rule_id, runtime_id)| Binding {
            rule_id: rule_id.clone(),
            runtime_id: runtime_id.clone(),
            scenario_id: scenario_id.to_owned(),
        })
    }

    fn report(&mut self, diagnostic: Diagnostic) {
        tracing::warn!(%diagnostic, "sync fault");
        if self.diagnostics.len() == DIAGNOSTIC_HISTORY {
            self.diagnostics.pop_front();
        }
        self.diagnostics.push_back(diagnostic);
    }

    fn fault(&mut self, rule_id: &str, element_id: &str, message: String) {
        self.stats.eval_faults += 1;
        self.report(Diagnostic::new(message).rule(rule_id).element(element_id));
    }

    fn bind(&mut self, rule_id: &str, runtime_id: &str, scenario_id: String) {
        self.by_scenario.insert(scenario_id.clone(), (rule_id.to_owned(), runtime_id.to_owned()));
        self.bindings.insert((rule_id.to_owned(), runtime_id.to_owned()), scenario_id);
    }

    fn unbind(&mut self, rule_id: &str, runtime_id: &str) -> Option<String> {
        let scenario_id = self.bindings.remove(&(rule_id.to_owned(), runtime_id.to_owned()))?;
        self.by_scenario.remove(&scenario_id);
        Some(scenario_id)
    }

    /// Whether the rule selects `element`. `Err` carries the fault message.
    fn matches(rule: &MappingRule, element: &ModelElement) -> Result<bool, String> {
        if element.class != rule.source_class {
            return Ok(false);
        }
        let Some(predicate) = &rule.predicate else { return Ok(true) };
        let ctx = EvalContext::new().bind("source", Some(element));
        match eval(predicate, &ctx) {
            Ok(Value::Bool(b)) => Ok(b),
            Ok(other) => Err(format!("`where` evaluated to {} instead of Bool", other.kind())),
            Err(e) => Err(format!("evaluating `where`: {e}")),
        }
    }

    /// Evaluates the attribute maps of `rule` for `element`, restricted to `only` when given.
    fn project(&self, rule: &MappingRule, element: &ModelElement, only: Option<&BTreeSet<&str>>) -> Result<Projection, String> {
        let target = self.scenario_mm.class(&rule.target_class).expect("validated");
        let ctx = EvalContext::new().bind("source", Some(element));
        let mut out = Projection::new();
        for m in &rule.attr_maps {
            if let Some(only) = only {
                if !m.expr.navigations().iter().any(|(_, attr)| only.contains(attr)) {
                    continue;
                }
            }
            let value = eval(&m.expr, &ctx).map_err(|e| format!("evaluating `{}` for {}: {e}", m.expr, m.target))?;
            let ty = &target.attribute(&m.target).expect("validated").ty;
            let found = value.to_string();
            let value = ty.coerce(value).ok_or_else(|| format!("{} expects {ty}, `{}` gave {found}", m.target, m.expr))?;
            out.insert(m.target.clone(), value);
        }
        Ok(out)
    }

    /// Propagates runtime changes. Events caused by the synchronizer (write acknowledgements)
    /// are dropped. Returns the scenario events, all with [`Origin::Synchronizer`].
    pub fn sync_runtime_to_scenario(&mut self, events: &[ChangeEvent], runtime: &Model, scenario: &mut Model) -> Vec<ChangeEvent> {
        let version = self.rules.version;
        // element id → changed attributes, or None when every attribute must be recomputed
        let mut touched: Vec<(String, Option<BTreeSet<&str>>)> = Vec::new();
        for event in events {
            self.stats.runtime_events += 1;
            if event.origin == Origin::Synchronizer {
                self.stats.suppressed += 1;
                continue;
            }
            let i = match touched.iter().position(|(id, _)| *id == event.element_id) {
                Some(i) => i,
                None => {
                    touched.push((event.element_id.clone(), Some(BTreeSet::new())));
                    touched.len() - 1
                }
            };
            match &event.kind {
                ChangeKind::AttrChanged { attr, .. } => {
                    if let Some(set) = &mut touched[i].1 {
                        set.insert(attr.as_str());
                    }
                }
                ChangeKind::Created { .. } | ChangeKind::Deleted { .. } => touched[i].1 = None,
                ChangeKind::LinkAdded { .. } | ChangeKind::LinkRemoved { .. } => {}
            }
        }

        let mut out = Vec::new();
        let rules = self.rules.rules.clone();
        for (runtime_id, changed) in &touched {
            for rule in &rules {
                out.extend(self.apply_rule(rule, runtime_id, changed.as_ref(), runtime, scenario));
            }
        }
        debug_assert_eq!(version, self.rules.version, "rules swapped mid-batch");
        out
    }

    fn apply_rule(
        &mut self,
        rule: &MappingRule,
        runtime_id: &str,
        changed: Option<&BTreeSet<&str>>,
        runtime: &Model,
        scenario: &mut Model,
    ) -> Vec<ChangeEvent> {
        let bound = self.bindings.get(&(rule.id.clone(), runtime_id.to_owned())).cloned();
        let element = runtime.get(runtime_id);
        let selected = match element.map(|e| Self::matches(rule, e)).unwrap_or(Ok(false)) {
            Ok(b) => b,
            Err(msg) => {
                self.fault(&rule.id, runtime_id, msg);
                return Vec::new();
            }
        };
        let mut out = Vec::new();
        match (selected, bound) {
            (true, None) => {
                let element = element.expect("selected");
                let attrs = match self.project(rule, element, None) {
                    Ok(attrs) => attrs,
                    Err(msg) => {
                        self.fault(&rule.id, runtime_id, msg);
                        return out;
                    }
                };
                let id = scenario_id(&rule.id, runtime_id);
                match scenario.instantiate(&rule.target_class, &id, attrs, Origin::Synchronizer) {
                    Ok(event) => {
                        out.push(event);
                        self.bind(&rule.id, runtime_id, id);
                    }
                    Err(e) => self.fault(&rule.id, runtime_id, format!("creating `{id}`: {e}")),
                }
            }
            (true, Some(scenario_id)) => {
                let element = element.expect("selected");
                // Reads that did not change cannot change a projection.
                let relevant = changed.filter(|c| !c.is_empty());
                if changed.is_some() && relevant.is_none() {
                    return out;
                }
                match self.project(rule, element, relevant) {
                    Ok(attrs) => {
                        for (attr, value) in attrs {
                            match scenario.set_attribute(&scenario_id, &attr, value, Origin::Synchronizer) {
                                Ok(event) => out.extend(event),
                                Err(e) => self.fault(&rule.id, runtime_id, e.to_string()),
                            }
                        }
                    }
                    Err(msg) => self.fault(&rule.id, runtime_id, msg),
                }
            }
            (false, Some(_)) => {
                let scenario_id = self.unbind(&rule.id, runtime_id).expect("bound");
                if let Ok(event) = scenario.delete(&scenario_id, Origin::Synchronizer) {
                    out.push(event);
                }
            }
            (false, None) => {}
        }
        out
    }

    /// Turns scenario changes to writeback attributes into device writes. Changes caused by
    /// the synchronizer are dropped, as are writes the runtime model shows are already in effect.
    /// Several changes to the same device attribute collapse into the last one.
    pub fn sync_scenario_to_runtime(&mut self, events: &[ChangeEvent], runtime: &Model) -> Vec<WriteRequest> {
        let mut writes: Vec<WriteRequest> = Vec::new();
        for event in events {
            self.stats.scenario_events += 1;
            if event.origin == Origin::Synchronizer {
                self.stats.suppressed += 1;
                continue;
            }
            let ChangeKind::AttrChanged { attr, new, .. } = &event.kind else { continue };
            let Some((rule_id, runtime_id)) = self.by_scenario.get(&event.element_id) else { continue };
            let rule = self.rules.rule(rule_id).expect("bindings follow the active rules");
            let Some(wb) = rule.writeback_for_target(attr) else { continue };
            let request = WriteRequest {
                dev_id: runtime_id.clone(),
                attr: wb.source.clone(),
                value: new.clone(),
                rule_id: rule_id.clone(),
                scenario_id: event.element_id.clone(),
                cause: event.origin,
            };
            writes.retain(|w| !(w.dev_id == request.dev_id && w.attr == request.attr));
            writes.push(request);
        }
        writes.retain(|w| {
            let current = runtime.get(&w.dev_id).and_then(|e| e.attr(&w.attr));
            current.is_none_or(|c| *c != w.value)
        });
        for w in &writes {
            *self.stats.writes_by_origin.entry(w.cause).or_default() += 1;
        }
        writes
    }

    /// Records a failed device write. The binding stays; the next [`full_resync`](Self::full_resync)
    /// restores the scenario side from device truth.
    pub fn write_failed(&mut self, request: &WriteRequest, message: &str) {
        self.stats.write_failures += 1;
        self.needs_resync = true;
        self.report(
            Diagnostic::new(format!("write {}.{} = {} failed: {message}", request.dev_id, request.attr, request.value))
                .rule(&request.rule_id)
                .element(&request.scenario_id),
        );
    }

    /// Recomputes every binding from scratch and moves the scenario model to the
    /// projection of the current runtime model. Attributes no rule maps keep their values.
    pub fn full_resync(&mut self, runtime: &Model, scenario: &mut Model) -> Vec<ChangeEvent> {
        self.stats.resyncs += 1;
        self.needs_resync = false;
        let mut target = scenario.clone();
        let old = std::mem::take(&mut self.bindings);
        self.by_scenario.clear();
        let mut keep = BTreeSet::new();
        let rules = self.rules.rules.clone();
        for rule in &rules {
            for element in runtime.elements_of(&rule.source_class) {
                let key = (rule.id.clone(), element.id.clone());
                let id = scenario_id(&rule.id, &element.id);
                let projected = Self::matches(rule, element).and_then(|m| match m {
                    true => self.project(rule, element, None).map(Some),
                    false => Ok(None),
                });
                match projected {
                    Ok(Some(attrs)) => {
                        let stale_class = target.get(&id).is_some_and(|e| e.class != rule.target_class);
                        if stale_class && old.contains_key(&key) {
                            target.delete(&id, Origin::Synchronizer).expect("element exists");
                        }
                        let result = if target.contains(&id) {
                            if !old.contains_key(&key) {
                                self.fault(&rule.id, &element.id, format!("`{id}` already exists and is not rule-derived"));
                                continue;
                            }
                            attrs.into_iter().try_for_each(|(a, v)| target.set_attribute(&id, &a, v, Origin::Synchronizer).map(drop))
                        } else {
                            target.instantiate(&rule.target_class, &id, attrs, Origin::Synchronizer).map(drop)
                        };
                        match result {
                            Ok(()) => {
                                keep.insert(key.clone());
                                self.bind(&rule.id, &element.id, id);
                            }
                            Err(e) => self.fault(&rule.id, &element.id, e.to_string()),
                        }
                    }
                    Ok(None) => {}
                    Err(msg) => {
                        // a faulting rule leaves an existing binding as it was
                        self.fault(&rule.id, &element.id, msg);
                        if old.contains_key(&key) && self.rules.rule(&rule.id).is_some() {
                            keep.insert(key.clone());
                            self.bind(&rule.id, &element.id, id);
                        }
                    }
                }
            }
        }
        for (key, id) in &old {
            if !keep.contains(key) && target.contains(id) {
                target.delete(id, Origin::Synchronizer).expect("element exists");
            }
        }
        let events = diff(scenario, &target, Origin::Synchronizer).expect("same metamodel");
        *scenario = target;
        events
    }

    /// Validates and activates a new rule set, then resyncs. Identical rules are a no-op.
    /// On validation failure the active rules stay in place.
    pub fn reload_rules(&mut self, mut rules: RuleSet, runtime: &Model, scenario: &mut Model) -> Result<Reload, Vec<Diagnostic>> {
        let diags = validate(&rules, &self.runtime_mm, &self.scenario_mm);
        if !diags.is_empty() {
            return Err(diags);
        }
        if rules.to_xml() == self.rules.to_xml() {
            return Ok(Reload { version: self.rules.version, changed: false, events: Vec::new() });
        }
        rules.version = self.rules.version + 1;
        self.rules = rules;
        let events = self.full_resync(runtime, scenario);
        Ok(Reload { version: self.rules.version, changed: true, events })
    }
}
