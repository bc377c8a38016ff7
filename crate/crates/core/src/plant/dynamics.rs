use super::{Action, AnomalyKind, PlantConfig, PlantState, StepOutcome};

const MAX_POWER: f64 = 1000.0;
const MAX_SG_WATER: f64 = 100.0;

/// Energy produced in one 10 s step at the given power.
pub(crate) fn energy_for(power: f64) -> f64 {
    power / 360.0
}

/// True when the rod banks are in the fission configuration, regardless of
/// water level.
pub fn rods_engaged(state: &PlantState, config: &PlantConfig) -> bool {
    let p = &config.fission_preconditions;
    state.security_rods == p.security_rods && state.fuel_rods == p.fuel_rods
}

/// Whether nuclear fission can run in `state`.
pub fn fission_active(state: &PlantState, config: &PlantConfig) -> bool {
    rods_engaged(state, config) && state.sg_water > config.fission_preconditions.min_sg_water
}

/// First anomaly in (overheat, overpressure, dryout) order, if any.
///
/// Dryout means the rods are engaged for fission while the steam generator
/// is at or below the minimum level.
pub fn check_anomaly(state: &PlantState, config: &PlantConfig) -> Option<AnomalyKind> {
    let t = &config.anomaly_thresholds;
    if state.temperature > t.temp_max {
        Some(AnomalyKind::Overheat)
    } else if state.pressure > t.pressure_max {
        Some(AnomalyKind::Overpressure)
    } else if state.sg_water <= t.sg_water_min && rods_engaged(state, config) {
        Some(AnomalyKind::Dryout)
    } else {
        None
    }
}

fn clamp_ranges(state: &mut PlantState, config: &PlantConfig) {
    state.temperature = state.temperature.max(config.floors.ambient_temp);
    state.pressure = state.pressure.max(config.floors.atmos_pressure);
    state.sg_water = state.sg_water.clamp(0.0, MAX_SG_WATER);
    state.power = state.power.clamp(0.0, MAX_POWER);
}

/// Applies the operator's action: moves a rod by one level (no-op at the
/// boundary) and adds the action's deltas. No end-of-step drift.
pub fn apply_action(state: &PlantState, action: Action, config: &PlantConfig) -> PlantState {
    let mut next = *state;
    if let Some((rod, up)) = action.rod_move() {
        let level = rod.shift(next.rod(rod), up);
        *next.rod_mut(rod) = level;
    }
    let [dt, dp, dw] = config.action_effects.get(action);
    next.temperature += dt;
    next.pressure += dp;
    next.sg_water += dw;
    clamp_ranges(&mut next, config);
    next
}

/// End-of-step dynamics: fission drift or cooling, linear power decay,
/// energy accounting, and the anomaly check (which restarts the plant).
pub fn end_of_step(state: &PlantState, config: &PlantConfig) -> StepOutcome {
    let active = fission_active(state, config);
    let mut next = *state;
    if active {
        let m = config
            .rod_dynamics
            .multipliers(state.sustain_rods, state.regulatory_rods);
        let r = &config.fission_rates;
        next.temperature += r.temperature * m[0];
        next.pressure += r.pressure * m[1];
        next.sg_water -= r.sg_water * m[2];
        next.power += r.power * m[3];
    } else {
        let c = &config.cooling_rates;
        next.temperature = (next.temperature - c.temperature).max(config.floors.ambient_temp);
        next.pressure = (next.pressure - c.pressure).max(config.floors.atmos_pressure);
        next.power -= config.power_decay_per_step;
    }
    next.power -= config.power_decay_per_step;
    clamp_ranges(&mut next, config);

    match check_anomaly(&next, config) {
        Some(kind) => StepOutcome {
            next_state: config.initial_state,
            energy: 0.0,
            fission_active: active,
            anomaly: Some(kind),
            is_critic_step: false,
        },
        None => {
            let energy = if active { energy_for(next.power) } else { 0.0 };
            StepOutcome {
                next_state: next,
                energy,
                fission_active: active,
                anomaly: None,
                is_critic_step: energy > 0.0,
            }
        }
    }
}

/// `apply_action` followed by `end_of_step`.
pub fn step(state: &PlantState, action: Action, config: &PlantConfig) -> StepOutcome {
    end_of_step(&apply_action(state, action, config), config)
}

/// A plant bound to one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    config: PlantConfig,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Self {
        Plant { config }
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn initial_state(&self) -> PlantState {
        self.config.initial_state
    }

    pub fn apply_action(&self, state: &PlantState, action: Action) -> PlantState {
        apply_action(state, action, &self.config)
    }

    pub fn end_of_step(&self, state: &PlantState) -> StepOutcome {
        end_of_step(state, &self.config)
    }

    pub fn step(&self, state: &PlantState, action: Action) -> StepOutcome {
        step(state, action, &self.config)
    }

    pub fn fission_active(&self, state: &PlantState) -> bool {
        fission_active(state, &self.config)
    }
}

impl Default for Plant {
    fn default() -> Self {
        Plant::new(PlantConfig::default())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::RodLevel;

    fn cfg() -> PlantConfig {
        PlantConfig::default()
    }

    fn running() -> PlantState {
        PlantState {
            temperature: 120.0,
            pressure: 200.0,
            sg_water: 80.0,
            power: 400.0,
            security_rods: RodLevel::Up,
            fuel_rods: RodLevel::Down,
            sustain_rods: RodLevel::Medium,
            regulatory_rods: RodLevel::Medium,
        }
    }

    #[test]
    fn fission_requires_security_up() {
        let c = cfg();
        let mut s = running();
        assert!(fission_active(&s, &c));
        s.security_rods = RodLevel::Down;
        assert!(!fission_active(&s, &c));
    }

    #[test]
    fn initial_state_has_no_fission() {
        let c = cfg();
        assert!(!fission_active(&c.initial_state, &c));
    }

    #[test]
    fn fission_at_eighty_percent_water() {
        let c = cfg();
        let s = PlantState {
            security_rods: RodLevel::Up,
            fuel_rods: RodLevel::Down,
            sg_water: 80.0,
            ..c.initial_state
        };
        assert!(fission_active(&s, &c));
    }

    #[test]
    fn skip_leaves_state_unchanged() {
        let c = cfg();
        let s = running();
        assert_eq!(apply_action(&s, Action::Skip, &c), s);
    }

    #[test]
    fn medium_water_adds_twenty_five() {
        let c = cfg();
        let s = PlantState { sg_water: 60.0, ..running() };
        assert_eq!(apply_action(&s, Action::AddWaterMedium, &c).sg_water, 85.0);
    }

    #[test]
    fn rod_at_boundary_still_applies_deltas() {
        let c = cfg();
        let s = PlantState { sustain_rods: RodLevel::Up, ..running() };
        let next = apply_action(&s, Action::SustainUp, &c);
        assert_eq!(next.sustain_rods, RodLevel::Up);
        let [dt, dp, _] = c.action_effects.sustain_up;
        assert_eq!(next.temperature, s.temperature + dt);
        assert_eq!(next.pressure, s.pressure + dp);
    }

    #[test]
    fn halted_fission_at_floors_is_inert() {
        let c = cfg();
        let s = PlantState {
            security_rods: RodLevel::Down,
            temperature: c.floors.ambient_temp,
            pressure: c.floors.atmos_pressure,
            sg_water: 70.0,
            ..c.initial_state
        };
        let out = end_of_step(&s, &c);
        assert_eq!(out.next_state.temperature, c.floors.ambient_temp);
        assert_eq!(out.next_state.pressure, c.floors.atmos_pressure);
        assert_eq!(out.next_state.sg_water, 70.0);
        assert_eq!(out.energy, 0.0);
        assert!(!out.is_critic_step);
    }

    #[test]
    fn energy_is_power_over_360() {
        let c = cfg();
        let s = running();
        let m = c.rod_dynamics.multipliers(s.sustain_rods, s.regulatory_rods);
        let gain = c.fission_rates.power * m[3] - c.power_decay_per_step;
        let s = PlantState { power: 720.0 - gain, ..s };
        let out = end_of_step(&s, &c);
        assert_eq!(out.next_state.power, 720.0);
        assert_eq!(out.energy, 2.0);
        assert!(out.is_critic_step);
    }

    #[test]
    fn regulatory_down_accelerates_fission() {
        let c = cfg();
        let medium = running();
        let down = PlantState { regulatory_rods: RodLevel::Down, ..medium };
        let a = end_of_step(&medium, &c).next_state;
        let b = end_of_step(&down, &c).next_state;
        assert!((b.temperature - down.temperature).abs() > (a.temperature - medium.temperature).abs());
        assert!((b.pressure - down.pressure).abs() > (a.pressure - medium.pressure).abs());
        assert!((b.sg_water - down.sg_water).abs() > (a.sg_water - medium.sg_water).abs());
        assert!(b.power - down.power > a.power - medium.power);
    }

    #[test]
    fn anomaly_order_and_thresholds() {
        let c = cfg();
        assert_eq!(check_anomaly(&c.initial_state, &c), None);
        let hot = PlantState {
            temperature: c.anomaly_thresholds.temp_max + 1.0,
            pressure: c.anomaly_thresholds.pressure_max + 1.0,
            ..c.initial_state
        };
        assert_eq!(check_anomaly(&hot, &c), Some(AnomalyKind::Overheat));
        let pressed = PlantState { temperature: 100.0, ..hot };
        assert_eq!(check_anomaly(&pressed, &c), Some(AnomalyKind::Overpressure));
        let dry_off = PlantState {
            sg_water: 0.0,
            security_rods: RodLevel::Down,
            ..c.initial_state
        };
        assert_eq!(check_anomaly(&dry_off, &c), None);
        let dry_on = PlantState {
            sg_water: c.anomaly_thresholds.sg_water_min,
            fuel_rods: RodLevel::Down,
            ..c.initial_state
        };
        assert_eq!(check_anomaly(&dry_on, &c), Some(AnomalyKind::Dryout));
    }

    #[test]
    fn anomaly_restarts_plant() {
        let c = cfg();
        let s = PlantState {
            temperature: c.anomaly_thresholds.temp_max - 1.0,
            ..running()
        };
        let out = end_of_step(&s, &c);
        assert_eq!(out.anomaly, Some(AnomalyKind::Overheat));
        assert_eq!(out.next_state, c.initial_state);
        assert_eq!(out.energy, 0.0);
        assert!(!out.is_critic_step);
    }

    #[test]
    fn initial_vector_encoding() {
        let c = cfg();
        assert_eq!(
            c.initial_state.to_vector(),
            [25.0, 100.0, 100.0, 0.0, 2.0, 2.0, 2.0, 2.0]
        );
        let s = PlantState { fuel_rods: RodLevel::Down, ..c.initial_state };
        let mut expected = c.initial_state.to_vector();
        expected[5] = 0.0;
        assert_eq!(s.to_vector(), expected);
    }
}
