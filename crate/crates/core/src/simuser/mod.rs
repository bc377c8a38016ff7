//! Scripted users that drive sessions without a human.
//!
//! Every policy pre-selects an action, optionally asks what and why, waits a
//! random decision time on a virtual clock, then commits. All randomness
//! comes from a ChaCha stream seeded with the session seed, so a seed fixes
//! the whole log.

mod heuristic;

pub use heuristic::{heuristic_action, heuristic_scores};

use crate::config::ConfigError;
use crate::plant::{Action, PlantConfig, ACTION_COUNT};
use crate::session::{
    Clock, Condition, LogSink, Session, SessionConfig, SessionError, SessionLog, SessionTimings, VirtualClock,
};
use crate::tree::DecisionTree;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Uniform pre-selection and uniform final action.
    Random,
    /// Always commits its own heuristic choice.
    GreedyNovice,
    /// Asks what and why every step; follows with `follow_prob`.
    AlwaysAsk,
    /// Never queries the agent.
    NeverAsk,
    /// Follows a differing suggestion with `follow_prob`.
    FollowAiWithProb,
    /// Follows a differing suggestion only when its own heuristic rates the
    /// suggestion within `indifference_margin` of its best.
    SelfAnchored,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::GreedyNovice => "greedy_novice",
            PolicyKind::AlwaysAsk => "always_ask",
            PolicyKind::NeverAsk => "never_ask",
            PolicyKind::FollowAiWithProb => "follow_ai_with_prob",
            PolicyKind::SelfAnchored => "self_anchored",
        }
    }

    pub fn from_name(name: &str) -> Option<PolicyKind> {
        [
            PolicyKind::Random,
            PolicyKind::GreedyNovice,
            PolicyKind::AlwaysAsk,
            PolicyKind::NeverAsk,
            PolicyKind::FollowAiWithProb,
            PolicyKind::SelfAnchored,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Per-step probability of asking what.
    pub p_what: f64,
    /// Probability of asking why after a what-question.
    pub p_why: f64,
    pub follow_prob: f64,
    /// Mean of the exponential think time.
    pub mean_decision_s: f64,
    /// Extra time per question asked.
    pub question_overhead_s: f64,
    pub indifference_margin: f64,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, message: String| ConfigError::Invalid {
            path: format!("policy.{field}"),
            message,
        };
        for (field, p) in [("p_what", self.p_what), ("p_why", self.p_why), ("follow_prob", self.follow_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(field, format!("must be a probability in [0, 1], got {p}")));
            }
        }
        if !(self.mean_decision_s.is_finite() && self.mean_decision_s > 0.0) {
            return Err(bad("mean_decision_s", format!("must be positive, got {}", self.mean_decision_s)));
        }
        for (field, v) in [
            ("question_overhead_s", self.question_overhead_s),
            ("indifference_margin", self.indifference_margin),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(field, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// What a policy does in one step, given the state and the agent's answers.
struct StepPlan {
    pre_selected: Action,
    ask_what: bool,
    ask_why: bool,
}

fn uniform_action<R: Rng>(rng: &mut R) -> Action {
    Action::ALL[rng.random_range(0..ACTION_COUNT)]
}

fn plan_step<R: Rng>(policy: &PolicyConfig, condition: Condition, scores: &[f64; ACTION_COUNT], rng: &mut R) -> StepPlan {
    let pre_selected = match policy.kind {
        PolicyKind::Random => uniform_action(rng),
        _ => heuristic_action(scores),
    };
    let (ask_what, ask_why) = match policy.kind {
        _ if condition == Condition::SelfTaught => (false, false),
        PolicyKind::AlwaysAsk => (true, true),
        PolicyKind::NeverAsk => (false, false),
        _ => {
            let what = rng.random_bool(policy.p_what);
            (what, what && rng.random_bool(policy.p_why))
        }
    };
    StepPlan {
        pre_selected,
        ask_what,
        ask_why,
    }
}

fn final_action<R: Rng>(
    policy: &PolicyConfig,
    plan: &StepPlan,
    suggestion: Option<Action>,
    scores: &[f64; ACTION_COUNT],
    rng: &mut R,
) -> Action {
    let own = plan.pre_selected;
    match (policy.kind, suggestion) {
        (PolicyKind::Random, _) => uniform_action(rng),
        (_, None) | (PolicyKind::GreedyNovice | PolicyKind::NeverAsk, _) => own,
        (_, Some(s)) if s == own => own,
        (PolicyKind::AlwaysAsk | PolicyKind::FollowAiWithProb, Some(s)) => {
            if rng.random_bool(policy.follow_prob) {
                s
            } else {
                own
            }
        }
        (PolicyKind::SelfAnchored, Some(s)) => {
            let best = scores[own.index()];
            if scores[s.index()] >= best - policy.indifference_margin {
                s
            } else {
                own
            }
        }
    }
}

fn think_time_ms<R: Rng>(policy: &PolicyConfig, questions: u32, rng: &mut R) -> u64 {
    let exp = Exp::new(1.0 / policy.mean_decision_s).expect("validated mean");
    let seconds = exp.sample(rng) + f64::from(questions) * policy.question_overhead_s;
    1 + (seconds * 1000.0).round() as u64
}

/// Drives `session` until it seals. Steps cut off by a phase boundary are
/// abandoned and the policy carries on in the next phase.
pub fn drive_session(
    session: &mut Session,
    clock: &VirtualClock,
    policy: &PolicyConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), SessionError> {
    let condition = session.config().condition;
    let plant = session.config().plant.clone();
    while !session.is_sealed() {
        match run_step(session, clock, policy, condition, &plant, rng) {
            Ok(()) | Err(SessionError::PhaseExpired(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn run_step(
    session: &mut Session,
    clock: &VirtualClock,
    policy: &PolicyConfig,
    condition: Condition,
    plant: &PlantConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(), SessionError> {
    let scores = heuristic_scores(session.plant_state(), plant);
    let plan = plan_step(policy, condition, &scores, rng);
    session.pre_select(plan.pre_selected)?;
    let mut suggestion = None;
    let mut questions = 0;
    if plan.ask_what {
        suggestion = Some(session.ask_what()?);
        questions += 1;
        if plan.ask_why {
            session.ask_why()?;
            questions += 1;
        }
    }
    let action = final_action(policy, &plan, suggestion, &scores, rng);
    clock.advance(think_time_ms(policy, questions, rng));
    session.commit_action(action)?;
    Ok(())
}

/// Runs one complete session on a virtual clock and returns its sealed log.
pub fn run_episode(
    policy: &PolicyConfig,
    config: SessionConfig,
    tree: Option<Arc<DecisionTree>>,
    sink: Option<LogSink>,
) -> Result<SessionLog, SessionError> {
    let clock = VirtualClock::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shared: Arc<dyn Clock> = Arc::new(clock.clone());
    let mut session = Session::start(config, tree, shared, sink)?;
    drive_session(&mut session, &clock, policy, &mut rng)?;
    Ok(session.into_log())
}

/// A batch of seeded sessions under one condition and policy.
#[derive(Debug, Clone)]
pub struct FleetSpec {
    pub id_prefix: String,
    pub condition: Condition,
    pub size: usize,
    pub base_seed: u64,
    pub policy: PolicyConfig,
    pub timings: SessionTimings,
    pub plant: PlantConfig,
    pub tree: Option<Arc<DecisionTree>>,
}

impl FleetSpec {
    /// Session `i` gets id `{prefix}-{i:04}` and seed `base_seed + i`.
    pub fn session_config(&self, i: usize) -> SessionConfig {
        let mut c = SessionConfig::new(
            format!("{}-{i:04}", self.id_prefix),
            self.condition,
            &self.timings,
            self.plant.clone(),
        );
        c.seed = self.base_seed.wrapping_add(i as u64);
        if self.condition != Condition::SelfTaught {
            c.tree_sha256 = self.tree.as_ref().map(|t| t.to_document().sha256());
        }
        c
    }
}

/// Runs the fleet in parallel. Logs come back in session order.
pub fn run_fleet(spec: &FleetSpec) -> Result<Vec<SessionLog>, SessionError> {
    let tree = match spec.condition {
        Condition::SelfTaught => None,
        _ => Some(spec.tree.clone().ok_or(SessionError::MissingTree)?),
    };
    let sha = tree.as_ref().map(|t| t.to_document().sha256());
    (0..spec.size)
        .into_par_iter()
        .map(|i| {
            let mut config = spec.session_config(i);
            if config.condition != Condition::SelfTaught {
                config.tree_sha256 = sha.clone();
            }
            run_episode(&spec.policy, config, tree.clone(), None)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::session::{replay, MoveType};

    fn policy(kind: PolicyKind) -> PolicyConfig {
        PolicyConfig {
            kind,
            ..ExperimentConfig::default().policy
        }
    }

    fn stump() -> Arc<DecisionTree> {
        let mut q_low = [0.0; ACTION_COUNT];
        q_low[Action::AddWaterLarge.index()] = 1.0;
        let mut q_high = [0.0; ACTION_COUNT];
        q_high[Action::FuelDown.index()] = 1.0;
        let mut t = DecisionTree::single_leaf([0.0; ACTION_COUNT]);
        t.split_leaf(0, 2, 60.0, q_low, q_high).unwrap();
        Arc::new(t)
    }

    fn spec(kind: PolicyKind, condition: Condition) -> FleetSpec {
        FleetSpec {
            id_prefix: "t".into(),
            condition,
            size: 3,
            base_seed: 11,
            policy: policy(kind),
            timings: SessionTimings {
                training_duration_s: 120.0,
                assessment_duration_s: 60.0,
            },
            plant: PlantConfig::default(),
            tree: Some(stump()),
        }
    }

    #[test]
    fn never_ask_logs_no_queries() {
        let logs = run_fleet(&spec(PolicyKind::NeverAsk, Condition::Cxai)).unwrap();
        for log in &logs {
            assert!(log.is_sealed());
            assert!(log.records.iter().all(|r| !r.asked_what && r.move_type.is_none()));
            replay(log, Some(&stump())).unwrap();
        }
    }

    #[test]
    fn always_follow_never_keeps_own_choice() {
        let mut s = spec(PolicyKind::AlwaysAsk, Condition::Axai);
        s.policy.follow_prob = 1.0;
        let logs = run_fleet(&s).unwrap();
        let types: Vec<MoveType> = logs.iter().flat_map(|l| &l.records).filter_map(|r| r.move_type).collect();
        assert!(types.len() > 20);
        assert!(types.iter().all(|t| matches!(t, MoveType::Equal | MoveType::FollowAi)));
        for log in &logs {
            assert!(log.records.iter().all(|r| r.asked_why));
            replay(log, Some(&stump())).unwrap();
        }
    }

    #[test]
    fn same_seed_same_log() {
        let a = run_fleet(&spec(PolicyKind::SelfAnchored, Condition::Cxai)).unwrap();
        let b = run_fleet(&spec(PolicyKind::SelfAnchored, Condition::Cxai)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].to_json(), b[0].to_json());
        assert_ne!(a[0].records, a[1].records);
    }

    #[test]
    fn self_taught_fleet_runs_without_a_tree() {
        let mut s = spec(PolicyKind::Random, Condition::SelfTaught);
        s.tree = None;
        for log in run_fleet(&s).unwrap() {
            assert!(log.records.iter().all(|r| !r.asked_what));
            assert_eq!(log.config.tree_sha256, None);
            replay(&log, None).unwrap();
        }
        let mut s = spec(PolicyKind::Random, Condition::Cxai);
        s.tree = None;
        assert_eq!(run_fleet(&s).unwrap_err(), SessionError::MissingTree);
    }

    #[test]
    fn probabilities_are_checked() {
        let mut p = policy(PolicyKind::SelfAnchored);
        p.p_why = 1.5;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.starts_with("policy.p_why"), "{err}");
    }
}
