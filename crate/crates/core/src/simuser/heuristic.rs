//! Rule-of-thumb operator used by the scripted policies.
//!
//! Scores are coarse on purpose: several actions often share the top score,
//! which is where a self-anchored user is willing to take advice.

use crate::plant::{Action, PlantConfig, PlantState, RodLevel, ACTION_COUNT};
use crate::tree::argmax_action;

/// Water margin above the dry-out level at which the novice starts refilling.
const LOW_WATER_MARGIN: f64 = 15.0;
/// Fraction of the temperature or pressure limit treated as running hot.
const HOT_FRACTION: f64 = 0.8;

pub fn heuristic_scores(state: &PlantState, plant: &PlantConfig) -> [f64; ACTION_COUNT] {
    let mut s = [0.0; ACTION_COUNT];
    let mut set = |a: Action, v: f64| s[a.index()] = v;
    set(Action::Skip, 1.0);
    let limits = &plant.anomaly_thresholds;
    if state.sg_water <= limits.sg_water_min + LOW_WATER_MARGIN {
        set(Action::AddWaterMedium, 3.0);
        set(Action::AddWaterLarge, 3.0);
        set(Action::AddWaterSmall, 2.0);
    } else if state.temperature > HOT_FRACTION * limits.temp_max || state.pressure > HOT_FRACTION * limits.pressure_max {
        set(Action::AddWaterLarge, 3.0);
        set(Action::SustainUp, 3.0);
        set(Action::RegulatoryUp, 3.0);
    } else if state.security_rods != RodLevel::Up {
        set(Action::SecurityUp, 3.0);
    } else if state.fuel_rods != RodLevel::Down {
        set(Action::FuelDown, 3.0);
    } else if state.sustain_rods != RodLevel::Down || state.regulatory_rods != RodLevel::Down {
        if state.sustain_rods != RodLevel::Down {
            set(Action::SustainDown, 2.0);
        }
        if state.regulatory_rods != RodLevel::Down {
            set(Action::RegulatoryDown, 2.0);
        }
        set(Action::Skip, 2.0);
    } else {
        set(Action::Skip, 2.0);
        set(Action::AddWaterSmall, 2.0);
    }
    s
}

/// Best-scoring action, lowest index on ties.
pub fn heuristic_action(scores: &[f64; ACTION_COUNT]) -> Action {
    argmax_action(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_by_lowering_fuel() {
        let plant = PlantConfig::default();
        let s = heuristic_scores(&plant.initial_state, &plant);
        assert_eq!(heuristic_action(&s), Action::FuelDown);
    }

    #[test]
    fn low_water_refills() {
        let plant = PlantConfig::default();
        let state = PlantState {
            sg_water: 30.0,
            ..plant.initial_state
        };
        let s = heuristic_scores(&state, &plant);
        assert_eq!(heuristic_action(&s), Action::AddWaterMedium);
        assert_eq!(s[Action::AddWaterLarge.index()], s[Action::AddWaterMedium.index()]);
    }
}
