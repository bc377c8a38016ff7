use crate::plant::{Feature, RodLevel};
use crate::tree::Direction;
use serde::{Deserialize, Serialize};

const DEFAULT_LOCALE: &str = include_str!("../../config/locale_en.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturePhrases {
    pub temperature: String,
    pub pressure: String,
    pub sg_water: String,
    pub power: String,
    pub security_rods: String,
    pub fuel_rods: String,
    pub sustain_rods: String,
    pub regulatory_rods: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelNames {
    pub up: String,
    pub medium: String,
    pub down: String,
}

/// Sentence templates for explanations, loaded from a locale file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub continuous: String,
    pub rods: String,
    pub less_eq: String,
    pub greater: String,
    pub or: String,
    pub no_reason: String,
    pub features: FeaturePhrases,
    pub levels: LevelNames,
}

impl Default for Templates {
    fn default() -> Self {
        Templates::from_toml_str(DEFAULT_LOCALE).expect("bundled locale is valid")
    }
}

impl Templates {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn feature(&self, feature: Feature) -> &str {
        let f = &self.features;
        match feature {
            Feature::Temperature => &f.temperature,
            Feature::Pressure => &f.pressure,
            Feature::SgWater => &f.sg_water,
            Feature::Power => &f.power,
            Feature::SecurityRods => &f.security_rods,
            Feature::FuelRods => &f.fuel_rods,
            Feature::SustainRods => &f.sustain_rods,
            Feature::RegulatoryRods => &f.regulatory_rods,
        }
    }

    pub fn level(&self, level: RodLevel) -> &str {
        match level {
            RodLevel::Up => &self.levels.up,
            RodLevel::Medium => &self.levels.medium,
            RodLevel::Down => &self.levels.down,
        }
    }
}

/// Threshold with at most one decimal; whole numbers print without one.
pub fn format_threshold(value: f64) -> String {
    let rounded = (value * 10.0).round() / 10.0;
    if rounded.fract() == 0.0 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded:.1}")
    }
}

/// Renders one split condition as a sentence.
///
/// Rod features name the levels on the explained side of the split instead of
/// the ordinal threshold.
pub fn render(feature: Feature, direction: Direction, threshold: f64, templates: &Templates) -> String {
    let op = match direction {
        Direction::LessEq => &templates.less_eq,
        Direction::Greater => &templates.greater,
    };
    if !feature.is_continuous() {
        let levels: Vec<&str> = feature
            .rod_levels()
            .iter()
            .filter(|l| direction.holds(l.ordinal(), threshold))
            .map(|l| templates.level(*l))
            .collect();
        if !levels.is_empty() {
            let joiner = format!(" {} ", templates.or);
            return templates
                .rods
                .replace("{feature}", templates.feature(feature))
                .replace("{levels}", &levels.join(&joiner));
        }
    }
    templates
        .continuous
        .replace("{feature}", templates.feature(feature))
        .replace("{op}", op)
        .replace("{value}", &format_threshold(threshold))
}

/// Whitespace-token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn water_level_sentence() {
        let t = Templates::default();
        let s = render(Feature::SgWater, Direction::LessEq, 25.0, &t);
        assert_eq!(s, "because the water level in the steam generator is ≤ 25");
        assert_eq!(word_count(&s), 11);
    }

    #[test]
    fn safety_rods_down() {
        let t = Templates::default();
        assert_eq!(
            render(Feature::SecurityRods, Direction::LessEq, 0.5, &t),
            "because the safety rods are down"
        );
        assert_eq!(
            render(Feature::SecurityRods, Direction::Greater, 0.5, &t),
            "because the safety rods are up"
        );
        assert_eq!(
            render(Feature::SustainRods, Direction::Greater, 0.5, &t),
            "because the sustain rods are medium or up"
        );
        assert_eq!(
            render(Feature::RegulatoryRods, Direction::LessEq, 1.5, &t),
            "because the regulatory rods are down or medium"
        );
    }

    #[test]
    fn one_decimal_at_most() {
        assert_eq!(format_threshold(25.0), "25");
        assert_eq!(format_threshold(117.34), "117.3");
        assert_eq!(format_threshold(99.96), "100");
        assert_eq!(format_threshold(-2.25), "-2.3");
        let t = Templates::default();
        assert_eq!(
            render(Feature::Temperature, Direction::Greater, 180.25, &t),
            "because the water temperature in the core is > 180.3"
        );
    }

    #[test]
    fn out_of_range_rod_threshold_falls_back_to_numbers() {
        let t = Templates::default();
        assert_eq!(
            render(Feature::FuelRods, Direction::LessEq, -1.0, &t),
            "because the fuel rods is ≤ -1"
        );
    }
}
