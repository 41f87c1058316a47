use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SimError;

/// Physical constants of the simulated room. Rates are per simulated hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Light in lux added per hour during the daylight segment.
    pub ambient_light_rate: f64,
    pub daylight_start: f64,
    pub daylight_end: f64,
    /// Light added per hour while a plug powering a lamp is on.
    pub lamp_light_rate: f64,
    /// Percentage points of soil moisture lost per hour.
    pub moisture_decay_rate: f64,
    /// Percentage points of soil moisture gained per hour while the pump runs.
    pub pump_fill_rate: f64,
    pub temperature_mean: f64,
    pub temperature_amplitude: f64,
    /// µS/cm of fertility lost per hour.
    pub fertility_decay_rate: f64,
    /// Simulated hours in one day.
    pub day_length: f64,
    /// Simulated hours that one host tick advances.
    pub sim_hours_per_tick: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            ambient_light_rate: 250.0,
            daylight_start: 6.0,
            daylight_end: 18.0,
            lamp_light_rate: 500.0,
            moisture_decay_rate: 0.5,
            pump_fill_rate: 20.0,
            temperature_mean: 22.0,
            temperature_amplitude: 3.0,
            fertility_decay_rate: 0.5,
            day_length: 24.0,
            sim_hours_per_tick: 0.25,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_owned()));
        let rates = [
            ("ambient_light_rate", self.ambient_light_rate),
            ("lamp_light_rate", self.lamp_light_rate),
            ("moisture_decay_rate", self.moisture_decay_rate),
            ("pump_fill_rate", self.pump_fill_rate),
            ("fertility_decay_rate", self.fertility_decay_rate),
            ("temperature_amplitude", self.temperature_amplitude),
        ];
        for (name, rate) in rates {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be a finite number >= 0")));
            }
        }
        if !self.temperature_mean.is_finite() {
            return bad("temperature_mean must be finite");
        }
        if !(self.day_length.is_finite() && self.day_length > 0.0) {
            return bad("day_length must be > 0");
        }
        if !(self.sim_hours_per_tick.is_finite() && self.sim_hours_per_tick > 0.0) {
            return bad("sim_hours_per_tick must be > 0");
        }
        if !(0.0 <= self.daylight_start && self.daylight_start <= self.daylight_end && self.daylight_end <= self.day_length) {
            return bad("daylight must satisfy 0 <= daylight_start <= daylight_end <= day_length");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceType {
    PlantMonitor,
    SmartPlug,
    Recognizer,
}

impl DeviceType {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::PlantMonitor => "PlantMonitor",
            DeviceType::SmartPlug => "SmartPlug",
            DeviceType::Recognizer => "Recognizer",
        }
    }
}

/// The non-smart appliance plugged into a smart plug.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Appliance {
    Lamp,
    Pump,
}

fn default_poll_interval() -> u32 {
    1
}

fn default_offline_after() -> u32 {
    3
}

/// One roster entry. The simulator reads the type, wiring and initial values;
/// the connector reads the address and polling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub dev_id: String,
    pub device_type: DeviceType,
    /// Where the device's wire protocol is served. Absent means the embedded fleet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default = "default_poll_interval")]
    pub poll_interval_ticks: u32,
    #[serde(default = "default_offline_after")]
    pub offline_after: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub powers: Option<Appliance>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial: BTreeMap<String, serde_json::Value>,
}

impl DeviceEntry {
    pub fn new(dev_id: &str, device_type: DeviceType) -> Self {
        Self {
            dev_id: dev_id.to_owned(),
            device_type,
            base_url: None,
            poll_interval_ticks: default_poll_interval(),
            offline_after: default_offline_after(),
            powers: None,
            initial: BTreeMap::new(),
        }
    }

    pub fn powering(mut self, appliance: Appliance) -> Self {
        self.powers = Some(appliance);
        self
    }

    pub fn with_initial(mut self, attr: &str, value: impl Into<serde_json::Value>) -> Self {
        self.initial.insert(attr.to_owned(), value.into());
        self
    }
}

/// Device roster plus simulation constants, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roster {
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceEntry>,
}

impl Roster {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("roster serializes")
    }

    /// flora-01, mi-plug-01 (lamp), haier-plug-01 (pump) and xingse-01.
    pub fn demo() -> Self {
        Self {
            sim: SimConfig::default(),
            devices: vec![
                DeviceEntry::new("flora-01", DeviceType::PlantMonitor),
                DeviceEntry::new("mi-plug-01", DeviceType::SmartPlug).powering(Appliance::Lamp),
                DeviceEntry::new("haier-plug-01", DeviceType::SmartPlug).powering(Appliance::Pump),
                DeviceEntry::new("xingse-01", DeviceType::Recognizer),
            ],
        }
    }

    pub fn entry(&self, dev_id: &str) -> Option<&DeviceEntry> {
        self.devices.iter().find(|d| d.dev_id == dev_id)
    }
}
