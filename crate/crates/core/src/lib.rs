//! Runtime models for a simulated smart home: a device runtime model kept in
//! step with the devices, a developer-defined scenario model, declarative
//! mapping rules between the two, and scenario behavior on top.

pub mod config;
pub mod device_sim;
pub mod diagnostics;
pub mod host;
pub mod mapping;
pub mod metamodel;
pub mod runtime_model;
pub mod scenario;
pub mod sync;
pub mod xml;

/// Bundled planting fixtures.
pub mod fixtures {
    pub const ROSTER: &str = include_str!("../fixtures/roster.toml");
    pub const MAPPING: &str = include_str!("../fixtures/planting.mapping.xml");
    pub const SCENARIO: &str = include_str!("../fixtures/planting.scenario.xml");
    pub const SCENARIO_SM: &str = include_str!("../fixtures/planting_sm.scenario.xml");
}
