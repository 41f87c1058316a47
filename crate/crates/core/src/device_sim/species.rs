use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

/// Suitable growing conditions for one species.
///
/// Units: accumulated light in lux·h per day, temperature in °C,
/// soil moisture in %, soil fertility in µS/cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesProfile {
    pub species: String,
    pub light: Range,
    pub temperature: Range,
    pub moisture: Range,
    pub fertility: Range,
}

/// Species reported when a name is not in the table.
pub const UNKNOWN_SPECIES: &str = "unknown";

type Row = (&'static str, Range, Range, Range, Range);

const TABLE: &[Row] = &[
    ("monstera", Range::new(4000.0, 8000.0), Range::new(15.0, 30.0), Range::new(30.0, 60.0), Range::new(350.0, 2000.0)),
    ("basil", Range::new(6000.0, 12000.0), Range::new(18.0, 30.0), Range::new(40.0, 70.0), Range::new(500.0, 2000.0)),
    ("cactus", Range::new(2000.0, 10000.0), Range::new(10.0, 35.0), Range::new(5.0, 25.0), Range::new(100.0, 800.0)),
    ("fern", Range::new(1500.0, 4000.0), Range::new(15.0, 25.0), Range::new(50.0, 80.0), Range::new(300.0, 1200.0)),
    ("tomato", Range::new(7000.0, 14000.0), Range::new(18.0, 29.0), Range::new(45.0, 75.0), Range::new(600.0, 2500.0)),
];

const DEFAULT: Row =
    (UNKNOWN_SPECIES, Range::new(2500.0, 9000.0), Range::new(10.0, 32.0), Range::new(20.0, 60.0), Range::new(200.0, 2000.0));

fn profile((species, light, temperature, moisture, fertility): Row) -> SpeciesProfile {
    SpeciesProfile { species: species.to_owned(), light, temperature, moisture, fertility }
}

/// Names the recognizer knows, in table order.
pub fn known_species() -> impl Iterator<Item = &'static str> {
    TABLE.iter().map(|row| row.0)
}

/// Looks a plant name up case-insensitively. Unknown or empty names get the default profile.
pub fn lookup(plant_name: &str) -> SpeciesProfile {
    let name = plant_name.trim().to_ascii_lowercase();
    profile(TABLE.iter().copied().find(|row| row.0 == name).unwrap_or(DEFAULT))
}

pub fn default_profile() -> SpeciesProfile {
    profile(DEFAULT)
}
