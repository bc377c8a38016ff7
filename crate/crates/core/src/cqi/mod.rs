//! Training a decision-tree policy with Conservative Q-Improvement.
//!
//! The tree starts as a single leaf. Every step performs a Q-learning update
//! on the leaf the state falls in and on the matching side of each candidate
//! split of that leaf. A leaf is split only when the best candidate's
//! estimated policy improvement exceeds a threshold that decays every step
//! without a split and resets after one.

mod learner;
mod rollout;
mod split;

pub use learner::{CqiLearner, ObserveResult, SplitEvent, Transition};
pub use rollout::{greedy_rollout, random_rollout, RolloutSummary};
pub use split::{decile_thresholds, LeafStats, SideStats, SplitCandidate};

use crate::config::ConfigError;
use crate::plant::{apply_action, Action, Plant, PlantConfig, PlantState, StepOutcome};
use crate::tree::{DecisionTree, TreeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub energy_weight: f64,
    pub anomaly_penalty: f64,
    pub no_effect_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub episodes: usize,
    pub max_steps: usize,
    pub discount: f64,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied after each episode.
    pub learning_rate_decay: f64,
    pub learning_rate_min: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon falls linearly to its end value.
    pub epsilon_decay_fraction: f64,
    /// Initial split threshold; may be `inf` to disable splitting.
    pub split_threshold: f64,
    /// Per-step multiplicative decay of the split threshold.
    pub split_threshold_decay: f64,
    /// Per-visit decay of candidate-side visit weights.
    pub visit_decay: f64,
    pub min_side_visits: u64,
    /// Leaf visits collected before continuous split candidates are fixed.
    pub threshold_warmup: usize,
    pub max_depth: u32,
    /// Length of the greedy zero-anomaly check run after training.
    pub gate_steps: usize,
    pub reward: RewardWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        crate::config::ExperimentConfig::default().train
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |path: &str, msg: &str| {
            Err(ConfigError::Invalid {
                path: format!("train.{path}"),
                message: msg.to_string(),
            })
        };
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return fail("discount", "must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail("learning_rate", "must lie in (0, 1]");
        }
        if !(self.learning_rate_decay > 0.0 && self.learning_rate_decay <= 1.0) {
            return fail("learning_rate_decay", "must lie in (0, 1]");
        }
        if !(0.0..=self.learning_rate).contains(&self.learning_rate_min) {
            return fail("learning_rate_min", "must lie in [0, learning_rate]");
        }
        for (name, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(name, "must lie in [0, 1]");
            }
        }
        if !(self.epsilon_decay_fraction > 0.0 && self.epsilon_decay_fraction <= 1.0) {
            return fail("epsilon_decay_fraction", "must lie in (0, 1]");
        }
        if self.split_threshold.is_nan() || self.split_threshold <= 0.0 {
            return fail("split_threshold", "must be positive (inf disables splitting)");
        }
        if !(self.split_threshold_decay > 0.0 && self.split_threshold_decay <= 1.0) {
            return fail("split_threshold_decay", "must lie in (0, 1]");
        }
        if !(self.visit_decay > 0.0 && self.visit_decay <= 1.0) {
            return fail("visit_decay", "must lie in (0, 1]");
        }
        if self.threshold_warmup == 0 {
            return fail("threshold_warmup", "must be at least 1");
        }
        // TOML integers are signed
        if i64::try_from(self.seed).is_err() {
            return fail("seed", "must be at most 9223372036854775807");
        }
        if self.max_steps == 0 {
            return fail("max_steps", "must be at least 1");
        }
        let w = &self.reward;
        if ![w.energy_weight, w.anomaly_penalty, w.no_effect_penalty]
            .iter()
            .all(|x| x.is_finite() && *x >= 0.0)
        {
            return fail("reward", "weights must be finite and non-negative");
        }
        Ok(())
    }

    /// Exploration rate for an episode: linear from start to end over the
    /// first `epsilon_decay_fraction` of training, then constant.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = (self.episodes as f64 * self.epsilon_decay_fraction).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Step reward: weighted energy, minus the anomaly penalty, minus the
/// no-effect penalty when the action left every feature unchanged.
pub fn reward(
    config: &PlantConfig,
    prev: &PlantState,
    action: Action,
    outcome: &StepOutcome,
    weights: &RewardWeights,
) -> f64 {
    let mut r = weights.energy_weight * outcome.energy;
    if outcome.anomaly.is_some() {
        r -= weights.anomaly_penalty;
    }
    if apply_action(prev, action, config) == *prev {
        r -= weights.no_effect_penalty;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub episode_return: f64,
    pub energy: f64,
    pub anomaly: bool,
    pub steps: usize,
    pub tree_size: usize,
    pub splits: usize,
    pub epsilon: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainDiagnostics {
    pub episodes_run: usize,
    pub tree_size: usize,
    pub anomaly_step: usize,
    pub gate: RolloutSummary,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(
        "trained policy failed the zero-anomaly check: anomaly at step {} after {} episodes (tree size {})",
        .0.anomaly_step, .0.episodes_run, .0.tree_size
    )]
    Failed(Box<TrainDiagnostics>),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub tree: DecisionTree,
    pub metrics: Vec<EpisodeMetrics>,
    pub gate: RolloutSummary,
}

/// Trains a tree on the plant. Fully determined by `config.seed`.
///
/// The result must survive a greedy rollout of `gate_steps` steps from the
/// initial state without any anomaly, otherwise [`TrainError::Failed`].
pub fn train(plant: &Plant, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_with(plant, config, |_| {})
}

/// [`train`] with a callback invoked after every episode.
pub fn train_with<F>(plant: &Plant, config: &TrainConfig, mut on_episode: F) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&EpisodeMetrics),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut learner = CqiLearner::new(config.clone());
    let mut metrics = Vec::with_capacity(config.episodes);

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let mut state = plant.initial_state();
        let mut m = EpisodeMetrics {
            episode,
            episode_return: 0.0,
            energy: 0.0,
            anomaly: false,
            steps: 0,
            tree_size: 0,
            splits: 0,
            epsilon,
            learning_rate: learner.learning_rate(),
        };
        for _ in 0..config.max_steps {
            let action = if rng.random::<f64>() < epsilon {
                Action::ALL[rng.random_range(0..Action::ALL.len())]
            } else {
                learner.greedy(&state.to_vector())?
            };
            let outcome = plant.step(&state, action);
            let (r, _) = learner.observe_step(plant, &state, action, &outcome)?;
            m.episode_return += r;
            m.energy += outcome.energy;
            m.steps += 1;
            if outcome.anomaly.is_some() {
                m.anomaly = true;
                break;
            }
            state = outcome.next_state;
        }
        m.tree_size = learner.tree().len();
        m.splits = learner.splits();
        on_episode(&m);
        metrics.push(m);
        let next_rate = (learner.learning_rate() * config.learning_rate_decay).max(config.learning_rate_min);
        learner.set_learning_rate(next_rate);
    }

    let tree = learner.into_tree();
    let (gate, _) = greedy_rollout(&tree, plant, config.gate_steps)?;
    if let Some(step) = gate.first_anomaly_step {
        return Err(TrainError::Failed(Box::new(TrainDiagnostics {
            episodes_run: config.episodes,
            tree_size: tree.len(),
            anomaly_step: step,
            gate,
        })));
    }
    Ok(TrainOutcome { tree, metrics, gate })
}

pub const METRICS_HEADER: &str =
    "episode,episode_return,energy,anomaly,steps,tree_size,splits,epsilon,learning_rate";

/// Writes per-episode metrics as CSV.
pub fn write_metrics<W: Write>(mut out: W, metrics: &[EpisodeMetrics]) -> io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            m.episode,
            m.episode_return,
            m.energy,
            u8::from(m.anomaly),
            m.steps,
            m.tree_size,
            m.splits,
            m.epsilon,
            m.learning_rate
        )?;
    }
    out.flush()
}
