use crate::plant::{Action, Plant, TraceRecord};
use crate::tree::{DecisionTree, TreeError};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Totals of one fixed-length episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub steps: usize,
    pub energy: f64,
    pub anomalies: usize,
    pub critic_steps: usize,
    pub first_anomaly_step: Option<usize>,
}

fn run<F>(plant: &Plant, steps: usize, mut choose: F) -> Result<(RolloutSummary, Vec<TraceRecord>), TreeError>
where
    F: FnMut(&crate::plant::PlantState) -> Result<Action, TreeError>,
{
    let mut state = plant.initial_state();
    let mut summary = RolloutSummary {
        steps,
        energy: 0.0,
        anomalies: 0,
        critic_steps: 0,
        first_anomaly_step: None,
    };
    let mut trace = Vec::with_capacity(steps);
    for i in 0..steps {
        let action = choose(&state)?;
        let out = plant.step(&state, action);
        summary.energy += out.energy;
        if out.anomaly.is_some() {
            summary.anomalies += 1;
            summary.first_anomaly_step.get_or_insert(i);
        }
        if out.is_critic_step {
            summary.critic_steps += 1;
        }
        state = out.next_state;
        trace.push(TraceRecord::new(i, action, out));
    }
    Ok((summary, trace))
}

/// Follows the tree greedily from the initial state. Anomalies restart the
/// plant and the episode continues.
pub fn greedy_rollout(
    tree: &DecisionTree,
    plant: &Plant,
    steps: usize,
) -> Result<(RolloutSummary, Vec<TraceRecord>), TreeError> {
    run(plant, steps, |s| tree.best_action(&s.to_vector()))
}

/// Uniform-random actions from the initial state.
pub fn random_rollout<R: Rng>(plant: &Plant, steps: usize, rng: &mut R) -> RolloutSummary {
    run(plant, steps, |_| Ok(Action::ALL[rng.random_range(0..Action::ALL.len())]))
        .expect("random policy cannot fail")
        .0
}
