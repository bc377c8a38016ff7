use super::{Action, PlantState, RodLevel, ACTION_COUNT};
use crate::config::{ConfigError, ExperimentConfig};
use serde::{Deserialize, Serialize};

/// Numeric constants of the plant.
///
/// Defaults come from the bundled `config/default.toml`; nothing here is
/// hard-coded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    pub initial_state: PlantState,
    pub floors: Floors,
    pub anomaly_thresholds: AnomalyThresholds,
    pub fission_preconditions: FissionPreconditions,
    pub fission_rates: FissionRates,
    pub cooling_rates: CoolingRates,
    pub rod_dynamics: RodDynamics,
    pub action_effects: ActionEffects,
    /// Linear power loss applied every step, MW.
    pub power_decay_per_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Floors {
    pub ambient_temp: f64,
    pub atmos_pressure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyThresholds {
    pub temp_max: f64,
    pub pressure_max: f64,
    pub sg_water_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FissionPreconditions {
    pub security_rods: RodLevel,
    pub fuel_rods: RodLevel,
    pub min_sg_water: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FissionRates {
    pub temperature: f64,
    pub pressure: f64,
    pub sg_water: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoolingRates {
    pub temperature: f64,
    pub pressure: f64,
}

/// Multipliers `[temperature, pressure, sg_water, power]` per rod level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodMultipliers {
    pub up: [f64; 4],
    pub medium: [f64; 4],
    pub down: [f64; 4],
}

impl RodMultipliers {
    pub fn at(&self, level: RodLevel) -> [f64; 4] {
        match level {
            RodLevel::Up => self.up,
            RodLevel::Medium => self.medium,
            RodLevel::Down => self.down,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RodDynamics {
    pub sustain: RodMultipliers,
    pub regulatory: RodMultipliers,
}

impl RodDynamics {
    /// Drift multipliers for a (sustain, regulatory) configuration.
    pub fn multipliers(&self, sustain: RodLevel, regulatory: RodLevel) -> [f64; 4] {
        let s = self.sustain.at(sustain);
        let r = self.regulatory.at(regulatory);
        [s[0] * r[0], s[1] * r[1], s[2] * r[2], s[3] * r[3]]
    }
}

/// `(Δtemperature, Δpressure, Δsg_water)` for each action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEffects {
    pub security_up: [f64; 3],
    pub security_down: [f64; 3],
    pub fuel_up: [f64; 3],
    pub fuel_down: [f64; 3],
    pub sustain_up: [f64; 3],
    pub sustain_down: [f64; 3],
    pub regulatory_up: [f64; 3],
    pub regulatory_down: [f64; 3],
    pub add_water_small: [f64; 3],
    pub add_water_medium: [f64; 3],
    pub add_water_large: [f64; 3],
    pub skip: [f64; 3],
}

impl ActionEffects {
    pub fn get(&self, action: Action) -> [f64; 3] {
        self.as_table()[action.index()]
    }

    pub fn as_table(&self) -> [[f64; 3]; ACTION_COUNT] {
        [
            self.security_up,
            self.security_down,
            self.fuel_up,
            self.fuel_down,
            self.sustain_up,
            self.sustain_down,
            self.regulatory_up,
            self.regulatory_down,
            self.add_water_small,
            self.add_water_medium,
            self.add_water_large,
            self.skip,
        ]
    }
}

impl Default for PlantConfig {
    fn default() -> Self {
        ExperimentConfig::default().plant
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |path: &str, msg: &str| {
            Err(ConfigError::Invalid {
                path: format!("plant.{path}"),
                message: msg.to_string(),
            })
        };
        let finite_all = |xs: &[f64]| xs.iter().all(|x| x.is_finite());

        if !(self.power_decay_per_step > 0.0 && self.power_decay_per_step.is_finite()) {
            return fail("power_decay_per_step", "must be a positive finite number");
        }
        let f = &self.floors;
        if !finite_all(&[f.ambient_temp, f.atmos_pressure]) {
            return fail("floors", "values must be finite");
        }
        let t = &self.anomaly_thresholds;
        if !finite_all(&[t.temp_max, t.pressure_max, t.sg_water_min]) {
            return fail("anomaly_thresholds", "values must be finite");
        }
        if t.temp_max <= f.ambient_temp {
            return fail("anomaly_thresholds.temp_max", "must exceed floors.ambient_temp");
        }
        if t.pressure_max <= f.atmos_pressure {
            return fail(
                "anomaly_thresholds.pressure_max",
                "must exceed floors.atmos_pressure",
            );
        }
        if !(0.0..100.0).contains(&t.sg_water_min) {
            return fail("anomaly_thresholds.sg_water_min", "must lie in [0, 100)");
        }
        let p = &self.fission_preconditions;
        for (name, level) in [("security_rods", p.security_rods), ("fuel_rods", p.fuel_rods)] {
            if level == RodLevel::Medium {
                return fail(
                    &format!("fission_preconditions.{name}"),
                    "two-level rods accept only \"up\" or \"down\"",
                );
            }
        }
        if !(0.0..100.0).contains(&p.min_sg_water) {
            return fail("fission_preconditions.min_sg_water", "must lie in [0, 100)");
        }
        let r = &self.fission_rates;
        if !finite_all(&[r.temperature, r.pressure, r.sg_water, r.power])
            || [r.temperature, r.pressure, r.sg_water, r.power]
                .iter()
                .any(|x| *x < 0.0)
        {
            return fail("fission_rates", "rates must be finite and non-negative");
        }
        let c = &self.cooling_rates;
        if !finite_all(&[c.temperature, c.pressure]) || c.temperature < 0.0 || c.pressure < 0.0 {
            return fail("cooling_rates", "rates must be finite and non-negative");
        }
        for (name, table) in [
            ("sustain", &self.rod_dynamics.sustain),
            ("regulatory", &self.rod_dynamics.regulatory),
        ] {
            for level in [RodLevel::Up, RodLevel::Medium, RodLevel::Down] {
                let m = table.at(level);
                if !finite_all(&m) || m.iter().any(|x| *x < 0.0) {
                    return fail(
                        &format!("rod_dynamics.{name}.{}", level.name()),
                        "multipliers must be finite and non-negative",
                    );
                }
            }
        }
        for action in Action::ALL {
            if !finite_all(&self.action_effects.get(action)) {
                return fail(
                    &format!("action_effects.{}", action.name()),
                    "deltas must be finite",
                );
            }
        }
        if self.action_effects.skip != [0.0; 3] {
            return fail("action_effects.skip", "skip must have zero deltas");
        }

        let s = &self.initial_state;
        if !finite_all(&[s.temperature, s.pressure, s.sg_water, s.power]) {
            return fail("initial_state", "values must be finite");
        }
        for (name, level) in [("security_rods", s.security_rods), ("fuel_rods", s.fuel_rods)] {
            if level == RodLevel::Medium {
                return fail(
                    &format!("initial_state.{name}"),
                    "two-level rods accept only \"up\" or \"down\"",
                );
            }
        }
        if s.temperature < f.ambient_temp || s.temperature > t.temp_max {
            return fail(
                "initial_state.temperature",
                "must lie between floors.ambient_temp and anomaly_thresholds.temp_max",
            );
        }
        if s.pressure < f.atmos_pressure || s.pressure > t.pressure_max {
            return fail(
                "initial_state.pressure",
                "must lie between floors.atmos_pressure and anomaly_thresholds.pressure_max",
            );
        }
        if !(0.0..=100.0).contains(&s.sg_water) {
            return fail("initial_state.sg_water", "must lie in [0, 100]");
        }
        if !(0.0..=1000.0).contains(&s.power) {
            return fail("initial_state.power", "must lie in [0, 1000]");
        }
        if super::check_anomaly(s, self).is_some() {
            return fail("initial_state", "initial state must not be anomalous");
        }
        Ok(())
    }
}
