//! The host service. [`start`] loads a [`HostConfig`], builds the control loop,
//! moves it onto an event-loop task and serves the `/api` routes. With an
//! embedded simulator, [`HostConfig::sim_listen`] additionally exposes the fleet
//! over the device wire protocol.

mod api;
mod devices;
mod event_loop;

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::Router;
use futures::future::BoxFuture;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use homesync_client::HttpTransport;
use homesync_core::config::{parse_roster, read, validate_documents, DocumentNames, HostConfig, HostError, EXIT_IO};
use homesync_core::device_sim::{Fleet, Roster};
use homesync_core::diagnostics::Diagnostic;
use homesync_core::host::Host;
use homesync_core::mapping::parse_rules;
use homesync_core::runtime_model::DeviceTransport;
use homesync_core::scenario::load_scenario;

pub use api::api_router;
pub use devices::device_router;
pub use event_loop::{HostHandle, Query, Stopped, StreamEvent};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("cannot listen on {addr}: {message}")]
    Bind { addr: String, message: String },
}

impl ServiceError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Host(e) => e.exit_code(),
            ServiceError::Bind { .. } => EXIT_IO,
        }
    }
}

/// The three documents a host runs on, already checked.
#[derive(Debug, Clone)]
pub struct Documents {
    pub roster: Roster,
    pub rules: String,
    pub scenario: String,
}

impl Documents {
    /// Reads and validates the documents named by `config`.
    pub fn load(config: &HostConfig) -> Result<Self, HostError> {
        let roster = read(&config.roster)?;
        let rules = read(&config.rules)?;
        let scenario = read(&config.scenario)?;
        let (rn, mn, sn) = (config.roster.display().to_string(), config.rules.display().to_string(), config.scenario.display().to_string());
        let names = DocumentNames { roster: &rn, rules: &mn, scenario: &sn };
        let diagnostics = validate_documents(&roster, &rules, &scenario, &names);
        if !diagnostics.is_empty() {
            return Err(HostError::Invalid(diagnostics));
        }
        let roster = parse_roster(&roster).map_err(HostError::Invalid)?;
        Ok(Self { roster, rules, scenario })
    }
}

/// Builds the control loop. An embedded host owns its fleet; otherwise each
/// device is reached at its roster `base_url`.
pub fn build_host(config: &HostConfig, docs: &Documents) -> Result<Host, HostError> {
    config.check()?;
    let mut roster = docs.roster.clone();
    if let Some(h) = config.sim_hours_per_tick {
        roster.sim.sim_hours_per_tick = h;
    }
    if config.embed_simulator {
        return Host::embedded(&roster, &docs.rules, &docs.scenario);
    }
    let missing: Vec<Diagnostic> = roster
        .devices
        .iter()
        .filter(|d| d.base_url.is_none())
        .map(|d| Diagnostic::new("base_url is required without an embedded simulator").element(&d.dev_id))
        .collect();
    if !missing.is_empty() {
        return Err(HostError::Invalid(missing));
    }
    let rules = parse_rules(&docs.rules).map_err(|e| HostError::Invalid(vec![e.into()]))?;
    let scenario = load_scenario(&docs.scenario).map_err(|e| HostError::Invalid(e.diagnostics()))?;
    let hours = roster.sim.sim_hours_per_tick;
    Host::new(&roster, rules, scenario, None, hours, |d| {
        let url = d.base_url.as_deref().expect("checked above");
        Arc::new(HttpTransport::new(url)) as Arc<dyn DeviceTransport>
    })
}

async fn bind(addr: &str) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|e| ServiceError::Bind { addr: addr.to_owned(), message: e.to_string() })
}

pub(crate) async fn stopped(mut stop: watch::Receiver<bool>) {
    while !*stop.borrow_and_update() {
        if stop.changed().await.is_err() {
            return;
        }
    }
}

fn spawn_server(listener: TcpListener, router: Router, stop: watch::Receiver<bool>) -> JoinHandle<()> {
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).with_graceful_shutdown(stopped(stop)).await {
            tracing::error!("server stopped: {e}");
        }
    })
}

fn spawn_ticker(
    period: Duration,
    stop: watch::Receiver<bool>,
    mut tick: impl FnMut() -> BoxFuture<'static, bool> + Send + 'static,
) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        interval.tick().await;
        let stop = stopped(stop);
        tokio::pin!(stop);
        loop {
            tokio::select! {
                _ = interval.tick() => if !tick().await { break },
                _ = &mut stop => break,
            }
        }
    })
}

/// A running service. Dropping it leaves the tasks running; call [`shutdown`](Self::shutdown).
pub struct Running {
    pub api_addr: SocketAddr,
    pub sim_addr: Option<SocketAddr>,
    pub handle: HostHandle,
    pub fleet: Option<Arc<Mutex<Fleet>>>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
    host_task: JoinHandle<Host>,
}

impl Running {
    /// Stops the ticker and servers and returns the host.
    pub async fn shutdown(self) -> Host {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
        drop(self.handle);
        self.host_task.await.expect("event loop task")
    }
}

/// Serves `host` as configured. Unless `test_mode` is set, a ticker runs one
/// tick every `tick_ms`.
pub async fn serve(config: &HostConfig, host: Host) -> Result<Running, ServiceError> {
    config.check()?;
    let fleet = host.fleet().cloned();
    let api_listener = bind(&config.listen).await?;
    let sim_listener = match (&config.sim_listen, &fleet) {
        (Some(addr), Some(_)) => Some(bind(addr).await?),
        _ => None,
    };
    let (handle, host_task) = HostHandle::spawn(host);
    let (stop, stop_rx) = watch::channel(false);
    let api_addr = api_listener.local_addr().map_err(|e| ServiceError::Bind { addr: config.listen.clone(), message: e.to_string() })?;
    let mut tasks = vec![spawn_server(api_listener, api::api_router_until(handle.clone(), config.test_mode, stop_rx.clone()), stop_rx.clone())];
    let mut sim_addr = None;
    if let (Some(listener), Some(fleet)) = (sim_listener, &fleet) {
        sim_addr = listener.local_addr().ok();
        tasks.push(spawn_server(listener, device_router(Arc::clone(fleet)), stop_rx.clone()));
    }
    if !config.test_mode {
        let ticker = handle.clone();
        tasks.push(spawn_ticker(Duration::from_millis(config.tick_ms), stop_rx, move || {
            let h = ticker.clone();
            Box::pin(async move { h.tick().await.is_ok() })
        }));
    }
    tracing::info!("host API listening on {api_addr}");
    Ok(Running { api_addr, sim_addr, handle, fleet, stop, tasks, host_task })
}

/// Loads, builds and serves in one step.
pub async fn start(config: &HostConfig) -> Result<Running, ServiceError> {
    config.check()?;
    let docs = Documents::load(config)?;
    let host = build_host(config, &docs)?;
    serve(config, host).await
}

/// A standalone simulator process.
pub struct RunningSim {
    pub addr: SocketAddr,
    pub fleet: Arc<Mutex<Fleet>>,
    stop: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningSim {
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for task in self.tasks {
            let _ = task.await;
        }
    }
}

/// Serves `fleet` on `listen`. With `tick_ms`, the fleet also advances by one
/// tick every `tick_ms` milliseconds; without it, time moves only through `POST /sim/step`.
pub async fn serve_simulator(fleet: Fleet, listen: &str, tick_ms: Option<u64>) -> Result<RunningSim, ServiceError> {
    let listener = bind(listen).await?;
    let addr = listener.local_addr().map_err(|e| ServiceError::Bind { addr: listen.to_owned(), message: e.to_string() })?;
    let fleet = Arc::new(Mutex::new(fleet));
    let (stop, stop_rx) = watch::channel(false);
    let mut tasks = vec![spawn_server(listener, device_router(Arc::clone(&fleet)), stop_rx.clone())];
    if let Some(ms) = tick_ms.filter(|ms| *ms > 0) {
        let f = Arc::clone(&fleet);
        tasks.push(spawn_ticker(Duration::from_millis(ms), stop_rx, move || {
            f.lock().expect("fleet lock").tick();
            Box::pin(async { true })
        }));
    }
    tracing::info!("simulator listening on {addr}");
    Ok(RunningSim { addr, fleet, stop, tasks })
}
