use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use thiserror::Error;

use crate::device_sim::{DeviceState, Fleet, SimError};
use crate::metamodel::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("device not found")]
    NotFound,
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("device unreachable")]
    Offline,
    #[error("{0}")]
    Other(String),
}

impl TransportError {
    /// Maps a wire status code and error text.
    pub fn from_status(status: u16, message: String) -> Self {
        match status {
            404 => TransportError::NotFound,
            422 => TransportError::Rejected(message),
            503 => TransportError::Offline,
            _ => TransportError::Other(format!("HTTP {status}: {message}")),
        }
    }
}

impl From<SimError> for TransportError {
    fn from(e: SimError) -> Self {
        TransportError::from_status(e.status(), e.to_string())
    }
}

/// Request/response access to one or more devices.
#[async_trait]
pub trait DeviceTransport: Send + Sync {
    async fn get_state(&self, dev_id: &str) -> Result<DeviceState, TransportError>;
    async fn put_state(&self, dev_id: &str, attrs: BTreeMap<String, Value>) -> Result<DeviceState, TransportError>;
}

/// Talks to an in-process [`Fleet`]. Every call holds the lock for its whole
/// duration, so concurrent calls are linearized.
#[derive(Clone)]
pub struct EmbeddedTransport {
    fleet: Arc<Mutex<Fleet>>,
}

impl EmbeddedTransport {
    pub fn new(fleet: Arc<Mutex<Fleet>>) -> Self {
        Self { fleet }
    }

    pub fn fleet(&self) -> &Arc<Mutex<Fleet>> {
        &self.fleet
    }
}

#[async_trait]
impl DeviceTransport for EmbeddedTransport {
    async fn get_state(&self, dev_id: &str) -> Result<DeviceState, TransportError> {
        Ok(self.fleet.lock().expect("fleet lock").get_state(dev_id)?)
    }

    async fn put_state(&self, dev_id: &str, attrs: BTreeMap<String, Value>) -> Result<DeviceState, TransportError> {
        Ok(self.fleet.lock().expect("fleet lock").set_state(dev_id, attrs)?)
    }
}
