use super::split::LeafStats;
use super::{reward, TrainConfig};
use crate::plant::{Action, Plant, PlantState, StateVector, ACTION_COUNT};
use crate::tree::{DecisionTree, NodeId, QValues, TreeError};

/// One environment transition as seen by the learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateVector,
    /// Anomaly: no bootstrapping from `next_state`.
    pub terminal: bool,
}

/// What a single observation did to the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserveResult {
    pub leaf: NodeId,
    pub target: f64,
    pub split: Option<SplitEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitEvent {
    pub leaf: NodeId,
    pub feature: usize,
    pub threshold: f64,
    pub value: f64,
    pub children: (NodeId, NodeId),
}

/// Conservative Q-Improvement learner: Q-learning on the leaves of a tree
/// that only grows when a candidate split improves the greedy policy by more
/// than a decaying threshold.
#[derive(Debug, Clone)]
pub struct CqiLearner {
    tree: DecisionTree,
    stats: Vec<Option<LeafStats>>,
    config: TrainConfig,
    learning_rate: f64,
    split_threshold: f64,
    splits: usize,
}

fn max_q(q: &QValues) -> f64 {
    q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

impl CqiLearner {
    pub fn new(config: TrainConfig) -> Self {
        let q = [0.0; ACTION_COUNT];
        CqiLearner {
            tree: DecisionTree::single_leaf(q),
            stats: vec![Some(LeafStats::new(q))],
            learning_rate: config.learning_rate,
            split_threshold: config.split_threshold,
            config,
            splits: 0,
        }
    }

    pub fn tree(&self) -> &DecisionTree {
        &self.tree
    }

    pub fn into_tree(self) -> DecisionTree {
        self.tree
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, rate: f64) {
        self.learning_rate = rate;
    }

    pub fn split_threshold(&self) -> f64 {
        self.split_threshold
    }

    pub fn splits(&self) -> usize {
        self.splits
    }

    pub fn leaf_stats(&self, leaf: NodeId) -> Option<&LeafStats> {
        self.stats.get(leaf).and_then(Option::as_ref)
    }

    /// Greedy action at `state`.
    pub fn greedy(&self, state: &StateVector) -> Result<Action, TreeError> {
        self.tree.best_action(state)
    }

    /// Applies one transition: Q-update of the visited leaf, candidate-split
    /// statistics, then the split test.
    pub fn observe(&mut self, t: &Transition) -> Result<ObserveResult, TreeError> {
        let leaf_id = self.tree.leaf_for(&t.state)?;
        let target = if t.terminal {
            t.reward
        } else {
            let next_leaf = self.tree.leaf_for(&t.next_state)?;
            t.reward + self.config.discount * max_q(&self.tree.leaf(next_leaf)?.q_values)
        };
        let a = t.action.index();
        let alpha = self.learning_rate;
        let leaf = self.tree.leaf_mut(leaf_id)?;
        leaf.q_values[a] += alpha * (target - leaf.q_values[a]);
        leaf.visit_count += 1;
        leaf.action_visits[a] += 1;
        let leaf_q = leaf.q_values;
        let depth = leaf.depth;

        let stats = self.stats[leaf_id]
            .as_mut()
            .expect("every leaf has split statistics");
        stats.observe(
            &t.state,
            a,
            target,
            alpha,
            self.config.visit_decay,
            self.config.threshold_warmup,
            &leaf_q,
        );

        let mut split = None;
        if depth < self.config.max_depth {
            if let Some((idx, value)) = stats.best(&leaf_q, self.config.min_side_visits) {
                if value > self.split_threshold {
                    let cand = stats.candidates[idx].clone();
                    let children = self.tree.split_leaf(
                        leaf_id,
                        cand.feature,
                        cand.threshold,
                        leaf_q,
                        leaf_q,
                    )?;
                    self.stats[leaf_id] = None;
                    self.stats.push(Some(LeafStats::new(leaf_q)));
                    self.stats.push(Some(LeafStats::new(leaf_q)));
                    self.splits += 1;
                    self.split_threshold = self.config.split_threshold;
                    split = Some(SplitEvent {
                        leaf: leaf_id,
                        feature: cand.feature,
                        threshold: cand.threshold,
                        value,
                        children,
                    });
                }
            }
        }
        if split.is_none() {
            self.split_threshold *= self.config.split_threshold_decay;
        }
        Ok(ObserveResult {
            leaf: leaf_id,
            target,
            split,
        })
    }

    /// Convenience wrapper: computes the reward and observes a plant step.
    pub fn observe_step(
        &mut self,
        plant: &Plant,
        prev: &PlantState,
        action: Action,
        outcome: &crate::plant::StepOutcome,
    ) -> Result<(f64, ObserveResult), TreeError> {
        let r = reward(plant.config(), prev, action, outcome, &self.config.reward);
        let res = self.observe(&Transition {
            state: prev.to_vector(),
            action,
            reward: r,
            next_state: outcome.next_state.to_vector(),
            terminal: outcome.anomaly.is_some(),
        })?;
        Ok((r, res))
    }
}
