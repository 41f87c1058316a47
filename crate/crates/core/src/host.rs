//! The control loop that ties the connector, the synchronizer and the scenario
//! engine together. One call to [`Host::tick`] runs the phases in a fixed order:
//!
//! 1. advance the embedded simulator (when there is one)
//! 2. poll the devices that are due
//! 3. propagate runtime changes into the scenario model
//! 4. run scenario behavior
//! 5. write scenario changes back to devices
//!
//! User actions (plant name, actuator switches) are written through immediately,
//! between ticks.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::config::HostError;
use crate::device_sim::{Fleet, Roster};
use crate::diagnostics::Diagnostic;
use crate::mapping::{parse_rules, RuleSet};
use crate::metamodel::{ChangeEvent, Model};
use crate::runtime_model::{Connector, DeviceDescriptor, DeviceTransport, EmbeddedTransport};
use crate::scenario::{load_scenario, Notification, ScenarioEngine, ScenarioError};
use crate::sync::{Reload, SyncStats, Synchronizer, WriteRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SimStep,
    Poll,
    SyncToScenario,
    Behavior,
    SyncToRuntime,
}

/// What one tick did, in phase order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickReport {
    pub tick: u64,
    pub time_hours: f64,
    pub phases: Vec<Phase>,
    /// Every change made to either model during the tick, in order.
    pub events: Vec<ChangeEvent>,
    pub writes: Vec<WriteRequest>,
    pub failed_writes: Vec<(WriteRequest, String)>,
    pub notifications: Vec<Notification>,
}

/// Result of a user action.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub events: Vec<ChangeEvent>,
    pub writes: Vec<WriteRequest>,
    pub failed_writes: Vec<(WriteRequest, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub tick: u64,
    pub time_hours: f64,
    pub rules_version: u64,
    pub scenario: String,
    pub embedded_simulator: bool,
    pub sync: SyncStats,
    pub behavior_faults: u64,
}

/// Body of a successful rule upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulesUploaded {
    pub version: u64,
    /// False when the upload matched the active rules.
    pub changed: bool,
}

/// Error body of the host API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

pub struct Host {
    connector: Connector,
    sync: Synchronizer,
    scenario: ScenarioEngine,
    fleet: Option<Arc<Mutex<Fleet>>>,
    hours_per_tick: f64,
    tick: u64,
}

impl Host {
    /// Registers every roster device using `transport_for` to reach it.
    /// `fleet` is stepped at the start of each tick when given.
    pub fn new(
        roster: &Roster,
        rules: RuleSet,
        scenario: ScenarioEngine,
        fleet: Option<Arc<Mutex<Fleet>>>,
        hours_per_tick: f64,
        transport_for: impl Fn(&DeviceDescriptor) -> Arc<dyn DeviceTransport>,
    ) -> Result<Self, HostError> {
        let mut connector = Connector::new();
        let runtime_mm = Arc::clone(connector.model().metamodel());
        let sync = Synchronizer::new(rules, runtime_mm, Arc::clone(scenario.metamodel())).map_err(HostError::Invalid)?;
        for entry in &roster.devices {
            let descriptor = DeviceDescriptor::from_entry(entry);
            let transport = transport_for(&descriptor);
            connector
                .register_device(descriptor, transport)
                .map_err(|e| HostError::Invalid(vec![Diagnostic::new(e.to_string()).element(&entry.dev_id)]))?;
        }
        Ok(Self { connector, sync, scenario, fleet, hours_per_tick, tick: 0 })
    }

    /// A host with an in-process fleet built from the roster.
    pub fn embedded(roster: &Roster, rules_text: &str, scenario_text: &str) -> Result<Self, HostError> {
        let rules = parse_rules(rules_text).map_err(|e| HostError::Invalid(vec![e.into()]))?;
        let scenario = load_scenario(scenario_text).map_err(|e| HostError::Invalid(e.diagnostics()))?;
        let fleet = Fleet::from_roster(roster).map_err(|e| HostError::Invalid(vec![Diagnostic::new(e.to_string())]))?;
        let fleet = Arc::new(Mutex::new(fleet));
        let transport: Arc<dyn DeviceTransport> = Arc::new(EmbeddedTransport::new(Arc::clone(&fleet)));
        let hours = roster.sim.sim_hours_per_tick;
        Self::new(roster, rules, scenario, Some(fleet), hours, |_| Arc::clone(&transport))
    }

    pub fn fleet(&self) -> Option<&Arc<Mutex<Fleet>>> {
        self.fleet.as_ref()
    }

    pub fn runtime(&self) -> &Model {
        self.connector.model()
    }

    pub fn scenario(&self) -> &ScenarioEngine {
        &self.scenario
    }

    pub fn synchronizer(&self) -> &Synchronizer {
        &self.sync
    }

    pub fn connector(&self) -> &Connector {
        &self.connector
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// Simulated hours since start: the fleet clock when embedded, ticks × hours per tick otherwise.
    pub fn time_hours(&self) -> f64 {
        match &self.fleet {
            Some(f) => f.lock().expect("fleet lock").time_hours(),
            None => self.tick as f64 * self.hours_per_tick,
        }
    }

    pub fn status(&self) -> Status {
        Status {
            tick: self.tick,
            time_hours: self.time_hours(),
            rules_version: self.sync.version(),
            scenario: self.scenario.name().to_owned(),
            embedded_simulator: self.fleet.is_some(),
            sync: self.sync.stats().clone(),
            behavior_faults: self.scenario.fault_count(),
        }
    }

    /// Synchronizer and behavior faults plus cardinality problems, oldest first.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out: Vec<Diagnostic> = self.sync.diagnostics().cloned().collect();
        out.extend(self.scenario.diagnostics().cloned());
        if self.tick > 0 {
            out.extend(self.scenario.cardinality_diagnostics());
        }
        out
    }

    async fn write(&mut self, writes: Vec<WriteRequest>, events: &mut Vec<ChangeEvent>, failed: &mut Vec<(WriteRequest, String)>) {
        let mut acks = Vec::new();
        for w in &writes {
            match self.connector.push_write(&w.dev_id, &w.attr, w.value.clone()).await {
                Ok(ack) => acks.extend(ack),
                Err(e) => {
                    self.sync.write_failed(w, &e.to_string());
                    failed.push((w.clone(), e.to_string()));
                }
            }
        }
        // acknowledgements carry the synchronizer's origin, so this only records them
        let echoed = self.sync.sync_runtime_to_scenario(&acks, self.connector.model(), self.scenario.model_mut());
        debug_assert!(echoed.is_empty());
        events.extend(acks);
    }

    pub async fn tick(&mut self) -> TickReport {
        let mut report = TickReport { tick: self.tick + 1, ..TickReport::default() };
        if let Some(fleet) = &self.fleet {
            fleet.lock().expect("fleet lock").step(self.hours_per_tick).expect("tick length checked");
            report.phases.push(Phase::SimStep);
        }

        let polled = self.connector.poll_due().await;
        report.phases.push(Phase::Poll);

        let mut to_scenario = self.sync.sync_runtime_to_scenario(&polled, self.connector.model(), self.scenario.model_mut());
        if self.sync.needs_resync() {
            to_scenario.extend(self.sync.full_resync(self.connector.model(), self.scenario.model_mut()));
        }
        report.events.extend(polled);
        report.events.extend(to_scenario);
        report.phases.push(Phase::SyncToScenario);

        self.tick += 1;
        let now = self.time_hours();
        let behavior = self.scenario.step_behavior(now);
        report.phases.push(Phase::Behavior);

        let writes = self.sync.sync_scenario_to_runtime(&behavior.events, self.connector.model());
        report.events.extend(behavior.events);
        report.notifications = behavior.notifications;
        let (mut events, mut failed) = (Vec::new(), Vec::new());
        self.write(writes.clone(), &mut events, &mut failed).await;
        report.events.extend(events);
        report.writes = writes;
        report.failed_writes = failed;
        report.phases.push(Phase::SyncToRuntime);
        report.time_hours = now;
        report
    }

    async fn act(&mut self, event: Option<ChangeEvent>) -> ActionReport {
        let mut report = ActionReport::default();
        let Some(event) = event else { return report };
        let writes = self.sync.sync_scenario_to_runtime(std::slice::from_ref(&event), self.connector.model());
        report.events.push(event);
        let (mut events, mut failed) = (Vec::new(), Vec::new());
        self.write(writes.clone(), &mut events, &mut failed).await;
        report.events.extend(events);
        report.writes = writes;
        report.failed_writes = failed;
        report
    }

    /// Names the plant. The recognizer receives the name through its writeback pair;
    /// the resulting suitable ranges reach the Plant on the following poll.
    pub async fn set_plant_name(&mut self, name: &str) -> Result<ActionReport, ScenarioError> {
        let event = self.scenario.set_plant_name(name)?;
        Ok(self.act(event).await)
    }

    /// Switches a scenario actuator. Rules that assign the same attribute take over again on their next step.
    pub async fn set_actuator(&mut self, element_id: &str, on: bool) -> Result<ActionReport, ScenarioError> {
        let event = self.scenario.set_actuator(element_id, on)?;
        Ok(self.act(event).await)
    }

    /// Parses, validates and activates a mapping document.
    pub fn reload_rules(&mut self, text: &str) -> Result<Reload, Vec<Diagnostic>> {
        let rules = parse_rules(text).map_err(|e| vec![Diagnostic::from(e)])?;
        self.sync.reload_rules(rules, self.connector.model(), self.scenario.model_mut())
    }

    pub fn reload_rule_set(&mut self, rules: RuleSet) -> Result<Reload, Vec<Diagnostic>> {
        self.sync.reload_rules(rules, self.connector.model(), self.scenario.model_mut())
    }
}
