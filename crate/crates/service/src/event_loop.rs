//! The single owner of the [`Host`]. HTTP handlers and the ticker talk to it
//! through [`HostHandle`]; every command runs to completion before the next,
//! so snapshots always fall between ticks.

use serde::Serialize;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use homesync_core::diagnostics::Diagnostic;
use homesync_core::host::{ActionReport, Host, TickReport};
use homesync_core::metamodel::ChangeEvent;
use homesync_core::scenario::{Notification, ScenarioError};
use homesync_core::sync::Reload;

const COMMAND_QUEUE: usize = 64;
const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Scenario,
    Runtime,
    Notifications,
    Diagnostics,
    Status,
}

/// One entry of the `/api/events` stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Tick { tick: u64, time_hours: f64 },
    Change { event: ChangeEvent },
    Notification { notification: Notification },
    Rules { version: u64, changed: bool },
}

impl StreamEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::Tick { .. } => "tick",
            StreamEvent::Change { .. } => "change",
            StreamEvent::Notification { .. } => "notification",
            StreamEvent::Rules { .. } => "rules",
        }
    }
}

enum Command {
    Query(Query, oneshot::Sender<serde_json::Value>),
    Tick(oneshot::Sender<TickReport>),
    PlantName(String, oneshot::Sender<Result<ActionReport, ScenarioError>>),
    Actuator(String, bool, oneshot::Sender<Result<ActionReport, ScenarioError>>),
    Rules(String, oneshot::Sender<Result<Reload, Vec<Diagnostic>>>),
}

/// The event loop has stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("the host event loop has stopped")]
pub struct Stopped;

#[derive(Clone)]
pub struct HostHandle {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<StreamEvent>,
}

fn json(value: impl Serialize) -> serde_json::Value {
    serde_json::to_value(value).expect("host state serializes")
}

fn answer(host: &Host, query: Query) -> serde_json::Value {
    match query {
        Query::Scenario => json(host.scenario().model()),
        Query::Runtime => json(host.runtime()),
        Query::Notifications => json(host.scenario().notifications()),
        Query::Diagnostics => json(host.diagnostics()),
        Query::Status => json(host.status()),
    }
}

fn publish_action(events: &broadcast::Sender<StreamEvent>, report: &ActionReport) {
    for event in &report.events {
        let _ = events.send(StreamEvent::Change { event: event.clone() });
    }
}

async fn run(mut host: Host, mut commands: mpsc::Receiver<Command>, events: broadcast::Sender<StreamEvent>) -> Host {
    // send errors only mean nobody is listening
    while let Some(command) = commands.recv().await {
        match command {
            Command::Query(query, reply) => {
                let _ = reply.send(answer(&host, query));
            }
            Command::Tick(reply) => {
                let report = host.tick().await;
                let _ = events.send(StreamEvent::Tick { tick: report.tick, time_hours: report.time_hours });
                for event in &report.events {
                    let _ = events.send(StreamEvent::Change { event: event.clone() });
                }
                for n in &report.notifications {
                    let _ = events.send(StreamEvent::Notification { notification: n.clone() });
                }
                let _ = reply.send(report);
            }
            Command::PlantName(name, reply) => {
                let result = host.set_plant_name(&name).await;
                if let Ok(report) = &result {
                    publish_action(&events, report);
                }
                let _ = reply.send(result);
            }
            Command::Actuator(id, on, reply) => {
                let result = host.set_actuator(&id, on).await;
                if let Ok(report) = &result {
                    publish_action(&events, report);
                }
                let _ = reply.send(result);
            }
            Command::Rules(text, reply) => {
                let result = host.reload_rules(&text);
                if let Ok(reload) = &result {
                    for event in &reload.events {
                        let _ = events.send(StreamEvent::Change { event: event.clone() });
                    }
                    let _ = events.send(StreamEvent::Rules { version: reload.version, changed: reload.changed });
                }
                let _ = reply.send(result);
            }
        }
    }
    host
}

impl HostHandle {
    /// Moves `host` onto its own task. The task ends, returning the host, once
    /// every handle is dropped.
    pub fn spawn(host: Host) -> (Self, JoinHandle<Host>) {
        let (commands, rx) = mpsc::channel(COMMAND_QUEUE);
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let task = tokio::spawn(run(host, rx, events.clone()));
        (Self { commands, events }, task)
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, Stopped> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(make(tx)).await.map_err(|_| Stopped)?;
        rx.await.map_err(|_| Stopped)
    }

    pub async fn query(&self, query: Query) -> Result<serde_json::Value, Stopped> {
        self.call(|tx| Command::Query(query, tx)).await
    }

    pub async fn tick(&self) -> Result<TickReport, Stopped> {
        self.call(Command::Tick).await
    }

    pub async fn set_plant_name(&self, name: String) -> Result<Result<ActionReport, ScenarioError>, Stopped> {
        self.call(|tx| Command::PlantName(name, tx)).await
    }

    pub async fn set_actuator(&self, element_id: String, on: bool) -> Result<Result<ActionReport, ScenarioError>, Stopped> {
        self.call(|tx| Command::Actuator(element_id, on, tx)).await
    }

    pub async fn upload_rules(&self, text: String) -> Result<Result<Reload, Vec<Diagnostic>>, Stopped> {
        self.call(|tx| Command::Rules(text, tx)).await
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.events.subscribe()
    }
}
