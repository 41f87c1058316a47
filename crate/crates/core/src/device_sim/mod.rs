//! Deterministic simulated device fleet: a plant monitor, smart plugs wired to
//! a lamp or a pump, and a plant recognizer.
//!
//! Time only advances through [`Fleet::step`]. Dynamics are linear within a
//! step and integrated exactly across daylight and day boundaries.

mod config;
mod species;
pub mod wire;

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{Appliance, DeviceEntry, DeviceType, Roster, SimConfig};
pub use species::{default_profile, known_species, lookup, Range, SpeciesProfile, UNKNOWN_SPECIES};

use crate::metamodel::{AttrType, AttributeDef, Value};

/// Boundaries closer than this are treated as reached.
const EPS: f64 = 1e-9;

pub const MOISTURE_MAX: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("device `{0}` already exists")]
    DuplicateDevice(String),
    #[error("{dev_id} has no attribute `{attr}`")]
    UnknownAttribute { dev_id: String, attr: String },
    #[error("{dev_id}.{attr} is read-only")]
    ReadOnlyAttribute { dev_id: String, attr: String },
    #[error("{dev_id}.{attr} expects {expected}, got {got}")]
    InvalidValue { dev_id: String, attr: String, expected: String, got: String },
    #[error("device `{0}` is offline")]
    DeviceOffline(String),
    #[error("device `{0}` is not a recognizer")]
    NotARecognizer(String),
    #[error("step must be a positive number of hours, got {0}")]
    InvalidStep(f64),
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
}

impl SimError {
    /// HTTP status used for this error on the wire.
    pub fn status(&self) -> u16 {
        match self {
            SimError::UnknownDevice(_) => 404,
            SimError::UnknownAttribute { .. }
            | SimError::ReadOnlyAttribute { .. }
            | SimError::InvalidValue { .. }
            | SimError::NotARecognizer(_) => 422,
            SimError::DeviceOffline(_) => 503,
            SimError::DuplicateDevice(_) => 409,
            SimError::InvalidStep(_) | SimError::InvalidConfig(_) => 400,
        }
    }
}

/// Attributes a device of the given type reports, with their types and writability.
pub fn device_schema(device_type: DeviceType) -> Vec<AttributeDef> {
    use AttrType::{Bool, Float, String};
    match device_type {
        DeviceType::PlantMonitor => {
            let mut attrs = vec![
                AttributeDef::readonly("accumulated_light", Float),
                AttributeDef::readonly("temperature", Float),
                AttributeDef::readonly("soil_moisture", Float),
                AttributeDef::readonly("soil_fertility", Float),
                AttributeDef::readonly("plant_name", String),
                AttributeDef::readonly("species", String),
            ];
            for metric in ["light", "temperature", "moisture", "fertility"] {
                attrs.push(AttributeDef::readonly(format!("{metric}_min"), Float));
                attrs.push(AttributeDef::readonly(format!("{metric}_max"), Float));
            }
            attrs
        }
        DeviceType::SmartPlug => vec![AttributeDef::new("power", Bool)],
        DeviceType::Recognizer => {
            vec![AttributeDef::new("plant_name", String), AttributeDef::readonly("species", String)]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub dev_id: String,
    pub device_type: DeviceType,
    pub online: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub dev_id: String,
    pub device_type: DeviceType,
    pub attrs: BTreeMap<String, Value>,
}

impl DeviceState {
    pub fn attr(&self, name: &str) -> Option<&Value> {
        self.attrs.get(name)
    }

    pub fn f64(&self, name: &str) -> f64 {
        self.attrs.get(name).and_then(Value::as_f64).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct SimDevice {
    dev_id: String,
    device_type: DeviceType,
    schema: Vec<AttributeDef>,
    attrs: BTreeMap<String, Value>,
    powers: Option<Appliance>,
    reachable: bool,
}

impl SimDevice {
    fn float(&self, attr: &str) -> f64 {
        self.attrs[attr].as_f64().expect("float attribute")
    }

    fn set_float(&mut self, attr: &str, x: f64) {
        self.attrs.insert(attr.to_owned(), Value::Float(x));
    }

    fn state(&self) -> DeviceState {
        DeviceState { dev_id: self.dev_id.clone(), device_type: self.device_type, attrs: self.attrs.clone() }
    }

    fn typed(&self, attr: &str, value: Value) -> Result<Value, SimError> {
        let def = self.schema.iter().find(|d| d.name == attr).ok_or_else(|| SimError::UnknownAttribute {
            dev_id: self.dev_id.clone(),
            attr: attr.to_owned(),
        })?;
        let got = value.kind().to_owned();
        def.ty.coerce(value).ok_or_else(|| SimError::InvalidValue {
            dev_id: self.dev_id.clone(),
            attr: attr.to_owned(),
            expected: def.ty.to_string(),
            got,
        })
    }

    fn adopt(&mut self, profile: &SpeciesProfile) {
        match self.device_type {
            DeviceType::PlantMonitor => {
                let ranges = [
                    ("light", profile.light),
                    ("temperature", profile.temperature),
                    ("moisture", profile.moisture),
                    ("fertility", profile.fertility),
                ];
                for (metric, range) in ranges {
                    self.set_float(&format!("{metric}_min"), range.min);
                    self.set_float(&format!("{metric}_max"), range.max);
                }
                self.attrs.insert("species".into(), Value::from(profile.species.as_str()));
            }
            DeviceType::Recognizer => {
                self.attrs.insert("species".into(), Value::from(profile.species.as_str()));
            }
            DeviceType::SmartPlug => {}
        }
    }
}

/// The simulated devices and the room they share.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    config: SimConfig,
    devices: Vec<SimDevice>,
    day: u64,
    /// Hours since the start of the current day, in `[0, day_length)`.
    phase: f64,
}

impl Fleet {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.check()?;
        Ok(Self { config, devices: Vec::new(), day: 0, phase: 0.0 })
    }

    pub fn from_roster(roster: &Roster) -> Result<Self, SimError> {
        let mut fleet = Self::new(roster.sim.clone())?;
        for entry in &roster.devices {
            fleet.add_device(entry)?;
        }
        Ok(fleet)
    }

    pub fn add_device(&mut self, entry: &DeviceEntry) -> Result<(), SimError> {
        if self.devices.iter().any(|d| d.dev_id == entry.dev_id) {
            return Err(SimError::DuplicateDevice(entry.dev_id.clone()));
        }
        if entry.powers.is_some() && entry.device_type != DeviceType::SmartPlug {
            return Err(SimError::InvalidConfig(format!("{}: only smart plugs can power appliances", entry.dev_id)));
        }
        let schema = device_schema(entry.device_type);
        let mut device = SimDevice {
            dev_id: entry.dev_id.clone(),
            device_type: entry.device_type,
            attrs: schema.iter().map(|d| (d.name.clone(), d.ty.default_value())).collect(),
            schema,
            powers: entry.powers,
            reachable: true,
        };
        if entry.device_type == DeviceType::PlantMonitor {
            device.set_float("temperature", self.temperature());
            device.set_float("soil_moisture", 50.0);
            device.set_float("soil_fertility", 1000.0);
        }
        device.adopt(&default_profile());
        for (attr, json) in &entry.initial {
            let value = serde_json::from_value::<Value>(json.clone()).map_err(|_| SimError::InvalidValue {
                dev_id: entry.dev_id.clone(),
                attr: attr.clone(),
                expected: "a scalar".into(),
                got: json.to_string(),
            })?;
            let value = device.typed(attr, value)?;
            device.attrs.insert(attr.clone(), value);
        }
        if let Some(Value::Float(m)) = device.attrs.get("soil_moisture") {
            if !(0.0..=MOISTURE_MAX).contains(m) {
                return Err(SimError::InvalidConfig(format!("{}: soil_moisture must be within [0, 100]", entry.dev_id)));
            }
        }
        self.devices.push(device);
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Simulated hours since start.
    pub fn time_hours(&self) -> f64 {
        self.day as f64 * self.config.day_length + self.phase
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    pub fn hour_of_day(&self) -> f64 {
        self.phase
    }

    fn device(&self, dev_id: &str) -> Result<&SimDevice, SimError> {
        self.devices.iter().find(|d| d.dev_id == dev_id).ok_or_else(|| SimError::UnknownDevice(dev_id.to_owned()))
    }

    fn device_mut(&mut self, dev_id: &str) -> Result<&mut SimDevice, SimError> {
        self.devices
            .iter_mut()
            .find(|d| d.dev_id == dev_id)
            .ok_or_else(|| SimError::UnknownDevice(dev_id.to_owned()))
    }

    fn reachable(&self, dev_id: &str) -> Result<&SimDevice, SimError> {
        let device = self.device(dev_id)?;
        if device.reachable {
            Ok(device)
        } else {
            Err(SimError::DeviceOffline(dev_id.to_owned()))
        }
    }

    pub fn list(&self) -> Vec<DeviceSummary> {
        self.devices
            .iter()
            .map(|d| DeviceSummary { dev_id: d.dev_id.clone(), device_type: d.device_type, online: d.reachable })
            .collect()
    }

    pub fn get_state(&self, dev_id: &str) -> Result<DeviceState, SimError> {
        Ok(self.reachable(dev_id)?.state())
    }

    /// Applies a patch of writable attributes atomically. Setting a recognizer's
    /// `plant_name` runs recognition.
    pub fn set_state(&mut self, dev_id: &str, patch: BTreeMap<String, Value>) -> Result<DeviceState, SimError> {
        let device = self.reachable(dev_id)?;
        let mut typed = Vec::with_capacity(patch.len());
        for (attr, value) in patch {
            let value = device.typed(&attr, value)?;
            if !device.schema.iter().any(|d| d.name == attr && d.writable) {
                return Err(SimError::ReadOnlyAttribute { dev_id: dev_id.to_owned(), attr });
            }
            typed.push((attr, value));
        }
        let mut plant_name = None;
        let device = self.device_mut(dev_id)?;
        for (attr, value) in typed {
            if device.device_type == DeviceType::Recognizer && attr == "plant_name" {
                plant_name = value.as_str().map(str::to_owned);
            }
            device.attrs.insert(attr, value);
        }
        if let Some(name) = plant_name {
            self.recognize(dev_id, &name)?;
        }
        self.get_state(dev_id)
    }

    /// Looks the name up, records it on the recognizer and hands the suitable
    /// ranges to every plant monitor.
    pub fn recognize(&mut self, recognizer_id: &str, plant_name: &str) -> Result<SpeciesProfile, SimError> {
        if self.reachable(recognizer_id)?.device_type != DeviceType::Recognizer {
            return Err(SimError::NotARecognizer(recognizer_id.to_owned()));
        }
        let profile = lookup(plant_name);
        let recognizer = self.device_mut(recognizer_id)?;
        recognizer.attrs.insert("plant_name".into(), Value::from(plant_name));
        recognizer.adopt(&profile);
        for monitor in self.devices.iter_mut().filter(|d| d.device_type == DeviceType::PlantMonitor) {
            monitor.adopt(&profile);
            monitor.attrs.insert("plant_name".into(), Value::from(plant_name));
        }
        Ok(profile)
    }

    /// Simulates losing or regaining the network link to a device.
    pub fn set_reachable(&mut self, dev_id: &str, reachable: bool) -> Result<(), SimError> {
        self.device_mut(dev_id)?.reachable = reachable;
        Ok(())
    }

    /// Moves a plug to a different appliance.
    pub fn rewire(&mut self, dev_id: &str, powers: Option<Appliance>) -> Result<(), SimError> {
        let device = self.device_mut(dev_id)?;
        if device.device_type != DeviceType::SmartPlug {
            return Err(SimError::InvalidConfig(format!("{dev_id}: only smart plugs can power appliances")));
        }
        device.powers = powers;
        Ok(())
    }

    /// Overrides a sensor reading, bypassing writability. Used to script scenarios.
    pub fn inject(&mut self, dev_id: &str, attr: &str, value: Value) -> Result<(), SimError> {
        let device = self.device_mut(dev_id)?;
        let mut value = device.typed(attr, value)?;
        if attr == "soil_moisture" {
            value = Value::Float(value.as_f64().unwrap_or(0.0).clamp(0.0, MOISTURE_MAX));
        }
        device.attrs.insert(attr.to_owned(), value);
        Ok(())
    }

    pub fn appliance_on(&self, appliance: Appliance) -> bool {
        self.devices
            .iter()
            .any(|d| d.powers == Some(appliance) && d.attrs.get("power") == Some(&Value::Bool(true)))
    }

    fn temperature(&self) -> f64 {
        let c = &self.config;
        c.temperature_mean + c.temperature_amplitude * (TAU * self.phase / c.day_length).sin()
    }

    /// Daylight hours within `[from, to]` of the current day.
    fn ambient_hours(&self, from: f64, to: f64) -> f64 {
        let (start, end) = (self.config.daylight_start, self.config.daylight_end);
        (to.min(end) - from.max(start)).max(0.0)
    }

    /// Advances simulated time by `dt` hours.
    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::InvalidStep(dt));
        }
        let lamp = if self.appliance_on(Appliance::Lamp) { self.config.lamp_light_rate } else { 0.0 };
        let pump = if self.appliance_on(Appliance::Pump) { self.config.pump_fill_rate } else { 0.0 };
        let c = self.config.clone();

        let mut light: Vec<f64> = self.monitors().map(|d| d.float("accumulated_light")).collect();
        let mut remaining = dt;
        while remaining > EPS {
            let to_boundary = c.day_length - self.phase;
            let seg = if remaining >= to_boundary - EPS { to_boundary } else { remaining };
            let gain = lamp * seg + c.ambient_light_rate * self.ambient_hours(self.phase, self.phase + seg);
            light.iter_mut().for_each(|l| *l += gain);
            remaining -= seg;
            if seg == to_boundary {
                self.day += 1;
                self.phase = 0.0;
                light.iter_mut().for_each(|l| *l = 0.0);
            } else {
                self.phase += seg;
            }
        }

        let temperature = self.temperature();
        for (device, light) in self.devices.iter_mut().filter(|d| d.device_type == DeviceType::PlantMonitor).zip(light) {
            device.set_float("accumulated_light", light);
            device.set_float("temperature", temperature);
            let moisture = device.float("soil_moisture") + (pump - c.moisture_decay_rate) * dt;
            device.set_float("soil_moisture", moisture.clamp(0.0, MOISTURE_MAX));
            let fertility = device.float("soil_fertility") - c.fertility_decay_rate * dt;
            device.set_float("soil_fertility", fertility.max(0.0));
        }
        Ok(())
    }

    /// Advances by one host tick.
    pub fn tick(&mut self) {
        self.step(self.config.sim_hours_per_tick).expect("tick length checked at construction");
    }

    fn monitors(&self) -> impl Iterator<Item = &SimDevice> {
        self.devices.iter().filter(|d| d.device_type == DeviceType::PlantMonitor)
    }
}
