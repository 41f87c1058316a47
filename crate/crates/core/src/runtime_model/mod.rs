//! The device runtime model: one element per registered device under a
//! `SmartHomeOS` root, kept current by polling each device over a
//! [`DeviceTransport`] and written back through [`Connector::push_write`].

mod transport;

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

pub use transport::{DeviceTransport, EmbeddedTransport, TransportError};

use crate::device_sim::{device_schema, DeviceEntry, DeviceType};
use crate::metamodel::{AttrType, AttributeDef, ChangeEvent, MetaClass, Metamodel, Model, ModelTag, Multiplicity, Origin, Value};

pub const ROOT_ID: &str = "home";
pub const ROOT_CLASS: &str = "SmartHomeOS";
pub const DEVICE_CLASS: &str = "Device";
pub const SOCKET_CLASS: &str = "Socket";

/// The fixed runtime metamodel.
///
/// Plugs are `Socket` elements reachable through `SmartHomeOS.sockets`; every other
/// device is a `Device` under `SmartHomeOS.devices`. `Device` carries the union
/// of the monitor and recognizer attributes, so attributes a device does not report
/// keep their defaults.
pub fn runtime_metamodel() -> Metamodel {
    let common = |name: &str| {
        MetaClass::new(name)
            .readonly_attr("dev_id", AttrType::String)
            .readonly_attr("device_type", AttrType::String)
            .readonly_attr("online", AttrType::Bool)
    };
    let mut device = common(DEVICE_CLASS);
    for ty in [DeviceType::PlantMonitor, DeviceType::Recognizer] {
        for def in device_schema(ty) {
            match device.attributes.iter_mut().find(|a| a.name == def.name) {
                // writable if any device type writes it; the descriptor still guards each device
                Some(existing) => existing.writable |= def.writable,
                None => device.attributes.push(def),
            }
        }
    }
    let mut socket = common(SOCKET_CLASS);
    socket.attributes.extend(device_schema(DeviceType::SmartPlug));
    let root = MetaClass::new(ROOT_CLASS)
        .reference("devices", DEVICE_CLASS, Multiplicity::Many)
        .reference("sockets", SOCKET_CLASS, Multiplicity::Many);
    Metamodel::from_classes([root, device, socket]).expect("runtime metamodel is well formed")
}

/// Runtime class that represents devices of the given type.
pub fn class_for(device_type: DeviceType) -> &'static str {
    match device_type {
        DeviceType::SmartPlug => SOCKET_CLASS,
        DeviceType::PlantMonitor | DeviceType::Recognizer => DEVICE_CLASS,
    }
}

/// What the connector knows about a device: where it is, what it reports, and how to poll it.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDescriptor {
    pub dev_id: String,
    pub device_type: DeviceType,
    pub base_url: Option<String>,
    pub attrs: Vec<AttributeDef>,
    /// Poll every this many host ticks.
    pub poll_interval: u32,
    /// Consecutive failed polls before the device is marked offline.
    pub offline_after: u32,
}

impl DeviceDescriptor {
    pub fn from_entry(entry: &DeviceEntry) -> Self {
        Self {
            dev_id: entry.dev_id.clone(),
            device_type: entry.device_type,
            base_url: entry.base_url.clone(),
            attrs: device_schema(entry.device_type),
            poll_interval: entry.poll_interval_ticks,
            offline_after: entry.offline_after,
        }
    }

    pub fn attr(&self, name: &str) -> Option<&AttributeDef> {
        self.attrs.iter().find(|a| a.name == name)
    }

    fn check(&self) -> Result<(), String> {
        if self.dev_id.is_empty() {
            return Err("dev_id must not be empty".into());
        }
        if self.poll_interval == 0 {
            return Err("poll interval must be at least one tick".into());
        }
        if self.offline_after == 0 {
            return Err("offline_after must be at least 1".into());
        }
        let class = runtime_metamodel();
        let class = class.class(class_for(self.device_type)).expect("layout class");
        for attr in &self.attrs {
            match class.attribute(&attr.name) {
                Some(def) if def.ty == attr.ty && (def.writable || !attr.writable) => {}
                _ => return Err(format!("attribute `{}` does not fit the {} layout", attr.name, class.name)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConnectorError {
    #[error("device `{0}` is already registered")]
    DuplicateDevice(String),
    #[error("device `{dev_id}`: {message}")]
    DescriptorInvalid { dev_id: String, message: String },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("{dev_id} has no attribute `{attr}`")]
    UnknownAttribute { dev_id: String, attr: String },
    #[error("{dev_id}.{attr} is read-only")]
    ReadOnlyAttribute { dev_id: String, attr: String },
    #[error("{dev_id}.{attr} expects {expected}")]
    InvalidValue { dev_id: String, attr: String, expected: String },
    #[error("device `{0}` is offline")]
    DeviceOffline(String),
    #[error("writing {dev_id}.{attr} failed: {source}")]
    Transport { dev_id: String, attr: String, source: TransportError },
}

struct Slot {
    descriptor: DeviceDescriptor,
    transport: Arc<dyn DeviceTransport>,
    failures: u32,
    /// Ticks left until the next poll; 0 means due.
    countdown: u32,
}

/// Owns the runtime model and the link to every registered device.
pub struct Connector {
    model: Model,
    slots: Vec<Slot>,
}

impl Default for Connector {
    fn default() -> Self {
        Self::new()
    }
}

impl Connector {
    pub fn new() -> Self {
        let mut model = Model::new(ModelTag::Runtime, Arc::new(runtime_metamodel()));
        model.instantiate(ROOT_CLASS, ROOT_ID, [], Origin::External).expect("fresh model");
        model.set_root(ROOT_ID).expect("root exists");
        Self { model, slots: Vec::new() }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &DeviceDescriptor> {
        self.slots.iter().map(|s| &s.descriptor)
    }

    fn slot(&self, dev_id: &str) -> Result<usize, ConnectorError> {
        self.slots
            .iter()
            .position(|s| s.descriptor.dev_id == dev_id)
            .ok_or_else(|| ConnectorError::UnknownDevice(dev_id.to_owned()))
    }

    pub fn is_online(&self, dev_id: &str) -> bool {
        self.model.get(dev_id).and_then(|e| e.attr("online")).and_then(Value::as_bool).unwrap_or(false)
    }

    /// Adds the device's element to the model, offline until its first successful poll,
    /// which happens on the next [`poll_due`](Self::poll_due).
    pub fn register_device(
        &mut self,
        descriptor: DeviceDescriptor,
        transport: Arc<dyn DeviceTransport>,
    ) -> Result<Vec<ChangeEvent>, ConnectorError> {
        let dev_id = descriptor.dev_id.clone();
        if self.slots.iter().any(|s| s.descriptor.dev_id == dev_id) || self.model.contains(&dev_id) {
            return Err(ConnectorError::DuplicateDevice(dev_id));
        }
        descriptor
            .check()
            .map_err(|message| ConnectorError::DescriptorInvalid { dev_id: dev_id.clone(), message })?;
        let class = class_for(descriptor.device_type);
        let initial = [
            ("dev_id".to_owned(), Value::from(dev_id.as_str())),
            ("device_type".to_owned(), Value::from(descriptor.device_type.as_str())),
        ];
        let mut events = vec![self.model.instantiate(class, &dev_id, initial, Origin::External).expect("layout class")];
        let reference = if class == SOCKET_CLASS { "sockets" } else { "devices" };
        events.extend(self.model.add_link(ROOT_ID, reference, &dev_id, Origin::External).expect("layout reference"));
        self.slots.push(Slot { descriptor, transport, failures: 0, countdown: 0 });
        Ok(events)
    }

    fn set(&mut self, dev_id: &str, attr: &str, value: Value, origin: Origin) -> Option<ChangeEvent> {
        self.model.set_attribute(dev_id, attr, value, origin).expect("attribute checked against descriptor")
    }

    /// Reads the device once and folds the result into the model.
    ///
    /// Every event carries [`Origin::External`]. Failures are never surfaced: they
    /// count towards `offline_after`, and the first success marks the device online.
    pub async fn poll_once(&mut self, dev_id: &str) -> Result<Vec<ChangeEvent>, ConnectorError> {
        let i = self.slot(dev_id)?;
        let transport = Arc::clone(&self.slots[i].transport);
        let mut events = Vec::new();
        match transport.get_state(dev_id).await {
            Ok(state) => {
                self.slots[i].failures = 0;
                let descriptor = self.slots[i].descriptor.clone();
                for (attr, value) in state.attrs {
                    let Some(value) = descriptor.attr(&attr).and_then(|def| def.ty.coerce(value)) else {
                        tracing::debug!(dev_id, attr, "ignoring undeclared or ill-typed attribute");
                        continue;
                    };
                    events.extend(self.set(dev_id, &attr, value, Origin::External));
                }
                events.extend(self.set(dev_id, "online", Value::Bool(true), Origin::External));
            }
            Err(e) => {
                let slot = &mut self.slots[i];
                slot.failures = slot.failures.saturating_add(1);
                tracing::debug!(dev_id, failures = slot.failures, error = %e, "poll failed");
                if slot.failures >= slot.descriptor.offline_after {
                    events.extend(self.set(dev_id, "online", Value::Bool(false), Origin::External));
                }
            }
        }
        Ok(events)
    }

    /// Polls every device whose interval has elapsed, in registration order.
    pub async fn poll_due(&mut self) -> Vec<ChangeEvent> {
        let mut events = Vec::new();
        for i in 0..self.slots.len() {
            if self.slots[i].countdown == 0 {
                self.slots[i].countdown = self.slots[i].descriptor.poll_interval - 1;
                let dev_id = self.slots[i].descriptor.dev_id.clone();
                events.extend(self.poll_once(&dev_id).await.expect("registered device"));
            } else {
                self.slots[i].countdown -= 1;
            }
        }
        events
    }

    /// Writes one attribute to the device. On success the model takes the value the
    /// device acknowledged, with [`Origin::Synchronizer`]; other attributes wait for the next poll.
    /// Offline devices are rejected without contacting them.
    pub async fn push_write(&mut self, dev_id: &str, attr: &str, value: Value) -> Result<Option<ChangeEvent>, ConnectorError> {
        let i = self.slot(dev_id)?;
        let def = self.slots[i].descriptor.attr(attr).cloned().ok_or_else(|| ConnectorError::UnknownAttribute {
            dev_id: dev_id.to_owned(),
            attr: attr.to_owned(),
        })?;
        if !def.writable {
            return Err(ConnectorError::ReadOnlyAttribute { dev_id: dev_id.to_owned(), attr: attr.to_owned() });
        }
        let value = def.ty.coerce(value).ok_or_else(|| ConnectorError::InvalidValue {
            dev_id: dev_id.to_owned(),
            attr: attr.to_owned(),
            expected: def.ty.to_string(),
        })?;
        if !self.is_online(dev_id) {
            return Err(ConnectorError::DeviceOffline(dev_id.to_owned()));
        }
        let transport = Arc::clone(&self.slots[i].transport);
        let patch = BTreeMap::from([(attr.to_owned(), value)]);
        let state = transport.put_state(dev_id, patch).await.map_err(|source| ConnectorError::Transport {
            dev_id: dev_id.to_owned(),
            attr: attr.to_owned(),
            source,
        })?;
        let acked = state.attrs.get(attr).cloned().and_then(|v| def.ty.coerce(v));
        Ok(acked.and_then(|v| self.set(dev_id, attr, v, Origin::Synchronizer)))
    }
}
