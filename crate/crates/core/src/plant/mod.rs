//! Simplified nuclear power plant.
//!
//! The plant has four continuous features (core water temperature, core
//! pressure, steam-generator water level, reactor power) and four rod banks.
//! Every quantity the decision tree sees goes through [`PlantState::to_vector`],
//! whose feature order is fixed by [`Feature`].

mod config;
mod dynamics;
mod trace;

pub use config::{
    ActionEffects, AnomalyThresholds, CoolingRates, FissionPreconditions, FissionRates, Floors,
    PlantConfig, RodDynamics, RodMultipliers,
};
pub use dynamics::{
    apply_action, check_anomaly, end_of_step, fission_active, rods_engaged, step, Plant,
};
pub use trace::{read_trace, write_trace, TraceRecord};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Number of features in the state vector.
pub const FEATURE_COUNT: usize = 8;

/// Number of actions available to the operator.
pub const ACTION_COUNT: usize = 12;

/// Numeric encoding of a plant state, in [`Feature`] order.
pub type StateVector = [f64; FEATURE_COUNT];

/// State features, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Temperature,
    Pressure,
    SgWater,
    Power,
    SecurityRods,
    FuelRods,
    SustainRods,
    RegulatoryRods,
}

impl Feature {
    pub const ALL: [Feature; FEATURE_COUNT] = [
        Feature::Temperature,
        Feature::Pressure,
        Feature::SgWater,
        Feature::Power,
        Feature::SecurityRods,
        Feature::FuelRods,
        Feature::SustainRods,
        Feature::RegulatoryRods,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Feature> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::Temperature => "temperature",
            Feature::Pressure => "pressure",
            Feature::SgWater => "sg_water",
            Feature::Power => "power",
            Feature::SecurityRods => "security_rods",
            Feature::FuelRods => "fuel_rods",
            Feature::SustainRods => "sustain_rods",
            Feature::RegulatoryRods => "regulatory_rods",
        }
    }

    pub fn is_continuous(self) -> bool {
        (self as usize) < 4
    }

    /// Ordinal levels a rod feature can take, lowest first. Empty for
    /// continuous features.
    pub fn rod_levels(self) -> &'static [RodLevel] {
        match self {
            Feature::SecurityRods | Feature::FuelRods => &[RodLevel::Down, RodLevel::Up],
            Feature::SustainRods | Feature::RegulatoryRods => {
                &[RodLevel::Down, RodLevel::Medium, RodLevel::Up]
            }
            _ => &[],
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Comma-joined feature names; stored in documents to detect order drift.
pub fn feature_order_fingerprint() -> String {
    Feature::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(",")
}

/// Comma-joined action names; stored in documents to detect order drift.
pub fn action_order_fingerprint() -> String {
    Action::ALL.iter().map(|a| a.name()).collect::<Vec<_>>().join(",")
}

/// Position of a rod bank. Two-level banks only use `Up` and `Down`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RodLevel {
    Down,
    Medium,
    Up,
}

impl RodLevel {
    /// Ordinal used in the state vector: Down=0, Medium=1, Up=2.
    pub fn ordinal(self) -> f64 {
        match self {
            RodLevel::Down => 0.0,
            RodLevel::Medium => 1.0,
            RodLevel::Up => 2.0,
        }
    }

    pub fn from_ordinal(value: f64) -> Option<RodLevel> {
        if value == 0.0 {
            Some(RodLevel::Down)
        } else if value == 1.0 {
            Some(RodLevel::Medium)
        } else if value == 2.0 {
            Some(RodLevel::Up)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RodLevel::Down => "down",
            RodLevel::Medium => "medium",
            RodLevel::Up => "up",
        }
    }
}

/// Rod banks, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rod {
    Security,
    Fuel,
    Sustain,
    Regulatory,
}

impl Rod {
    pub fn feature(self) -> Feature {
        match self {
            Rod::Security => Feature::SecurityRods,
            Rod::Fuel => Feature::FuelRods,
            Rod::Sustain => Feature::SustainRods,
            Rod::Regulatory => Feature::RegulatoryRods,
        }
    }

    fn shift(self, level: RodLevel, up: bool) -> RodLevel {
        let levels = self.feature().rod_levels();
        let pos = levels.iter().position(|l| *l == level).unwrap_or(0);
        let next = if up {
            (pos + 1).min(levels.len() - 1)
        } else {
            pos.saturating_sub(1)
        };
        levels[next]
    }
}

/// Plant state: four continuous readings and four rod positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Core water temperature, °C.
    pub temperature: f64,
    /// Core pressure, kPa.
    pub pressure: f64,
    /// Steam-generator water, % of capacity.
    pub sg_water: f64,
    /// Reactor power, MW.
    pub power: f64,
    pub security_rods: RodLevel,
    pub fuel_rods: RodLevel,
    pub sustain_rods: RodLevel,
    pub regulatory_rods: RodLevel,
}

impl PlantState {
    pub fn rod(&self, rod: Rod) -> RodLevel {
        match rod {
            Rod::Security => self.security_rods,
            Rod::Fuel => self.fuel_rods,
            Rod::Sustain => self.sustain_rods,
            Rod::Regulatory => self.regulatory_rods,
        }
    }

    pub fn rod_mut(&mut self, rod: Rod) -> &mut RodLevel {
        match rod {
            Rod::Security => &mut self.security_rods,
            Rod::Fuel => &mut self.fuel_rods,
            Rod::Sustain => &mut self.sustain_rods,
            Rod::Regulatory => &mut self.regulatory_rods,
        }
    }

    pub fn to_vector(&self) -> StateVector {
        [
            self.temperature,
            self.pressure,
            self.sg_water,
            self.power,
            self.security_rods.ordinal(),
            self.fuel_rods.ordinal(),
            self.sustain_rods.ordinal(),
            self.regulatory_rods.ordinal(),
        ]
    }

    /// Inverse of [`to_vector`](Self::to_vector). Fails when a rod ordinal is
    /// not a level its bank supports.
    pub fn from_vector(v: &StateVector) -> Option<PlantState> {
        let rod = |feature: Feature, value: f64| {
            RodLevel::from_ordinal(value).filter(|l| feature.rod_levels().contains(l))
        };
        Some(PlantState {
            temperature: v[0],
            pressure: v[1],
            sg_water: v[2],
            power: v[3],
            security_rods: rod(Feature::SecurityRods, v[4])?,
            fuel_rods: rod(Feature::FuelRods, v[5])?,
            sustain_rods: rod(Feature::SustainRods, v[6])?,
            regulatory_rods: rod(Feature::RegulatoryRods, v[7])?,
        })
    }
}

/// Operator actions, in the fixed order shared by Q-value arrays, the wire
/// API and logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    SecurityUp,
    SecurityDown,
    FuelUp,
    FuelDown,
    SustainUp,
    SustainDown,
    RegulatoryUp,
    RegulatoryDown,
    AddWaterSmall,
    AddWaterMedium,
    AddWaterLarge,
    Skip,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::SecurityUp,
        Action::SecurityDown,
        Action::FuelUp,
        Action::FuelDown,
        Action::SustainUp,
        Action::SustainDown,
        Action::RegulatoryUp,
        Action::RegulatoryDown,
        Action::AddWaterSmall,
        Action::AddWaterMedium,
        Action::AddWaterLarge,
        Action::Skip,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::SecurityUp => "security_up",
            Action::SecurityDown => "security_down",
            Action::FuelUp => "fuel_up",
            Action::FuelDown => "fuel_down",
            Action::SustainUp => "sustain_up",
            Action::SustainDown => "sustain_down",
            Action::RegulatoryUp => "regulatory_up",
            Action::RegulatoryDown => "regulatory_down",
            Action::AddWaterSmall => "add_water_small",
            Action::AddWaterMedium => "add_water_medium",
            Action::AddWaterLarge => "add_water_large",
            Action::Skip => "skip",
        }
    }

    pub fn from_name(name: &str) -> Option<Action> {
        Self::ALL.iter().copied().find(|a| a.name() == name)
    }

    /// The rod bank and direction (true = up) this action moves, if any.
    pub fn rod_move(self) -> Option<(Rod, bool)> {
        match self {
            Action::SecurityUp => Some((Rod::Security, true)),
            Action::SecurityDown => Some((Rod::Security, false)),
            Action::FuelUp => Some((Rod::Fuel, true)),
            Action::FuelDown => Some((Rod::Fuel, false)),
            Action::SustainUp => Some((Rod::Sustain, true)),
            Action::SustainDown => Some((Rod::Sustain, false)),
            Action::RegulatoryUp => Some((Rod::Regulatory, true)),
            Action::RegulatoryDown => Some((Rod::Regulatory, false)),
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Condition that damages the plant and forces a restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Overheat,
    Overpressure,
    Dryout,
}

/// Result of one plant step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: PlantState,
    /// Energy produced this step: power / 360 on a fission step, else 0.
    pub energy: f64,
    pub fission_active: bool,
    pub anomaly: Option<AnomalyKind>,
    pub is_critic_step: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_order_is_fixed() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
            assert_eq!(Action::from_name(a.name()), Some(*a));
        }
        assert_eq!(Action::from_index(12), None);
        assert_eq!(Action::SecurityUp.index(), 0);
        assert_eq!(Action::Skip.index(), 11);
    }

    #[test]
    fn feature_order_is_fixed() {
        let names: Vec<_> = Feature::ALL.iter().map(|f| f.name()).collect();
        assert_eq!(
            names,
            [
                "temperature",
                "pressure",
                "sg_water",
                "power",
                "security_rods",
                "fuel_rods",
                "sustain_rods",
                "regulatory_rods"
            ]
        );
    }

    #[test]
    fn two_level_rods_reject_medium() {
        let mut v = PlantConfig::default().initial_state.to_vector();
        v[4] = 1.0;
        assert!(PlantState::from_vector(&v).is_none());
        v[4] = 2.0;
        v[6] = 1.0;
        assert!(PlantState::from_vector(&v).is_some());
    }

    #[test]
    fn rod_shift_clamps() {
        assert_eq!(Rod::Security.shift(RodLevel::Up, true), RodLevel::Up);
        assert_eq!(Rod::Security.shift(RodLevel::Up, false), RodLevel::Down);
        assert_eq!(Rod::Sustain.shift(RodLevel::Up, false), RodLevel::Medium);
        assert_eq!(Rod::Sustain.shift(RodLevel::Down, false), RodLevel::Down);
    }
}
