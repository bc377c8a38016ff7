use super::{Condition, MoveType, Phase, SessionLog, Totals, LOG_SCHEMA_VERSION};
use crate::explain::{word_count, Strategy};
use crate::plant::{action_order_fingerprint, feature_order_fingerprint, Plant};
use crate::tree::DecisionTree;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{message}", step_index.map(|i| format!("step {i}: ")).unwrap_or_default())]
pub struct ReplayError {
    pub step_index: Option<u64>,
    pub message: String,
}

fn fail<T>(step_index: Option<u64>, message: impl Into<String>) -> Result<T, ReplayError> {
    Err(ReplayError {
        step_index,
        message: message.into(),
    })
}

/// Checks a log against the protocol rules and re-runs the plant from the
/// initial state through the logged actions, phase by phase. Every logged
/// outcome must be reproduced exactly.
///
/// With `tree`, suggestions are also checked against the tree's greedy
/// action for the pre-step state.
pub fn replay(log: &SessionLog, tree: Option<&DecisionTree>) -> Result<(), ReplayError> {
    if log.schema_version != LOG_SCHEMA_VERSION {
        return fail(None, format!("unsupported log schema_version {}", log.schema_version));
    }
    if log.action_order != action_order_fingerprint() || log.feature_order != feature_order_fingerprint() {
        return fail(None, "action or feature order differs from this build");
    }
    let config = &log.config;
    let phases: Vec<Phase> = log.phases.iter().map(|s| s.phase).collect();
    if !matches!(phases.as_slice(), [Phase::Training] | [Phase::Training, Phase::Assessment]) {
        return fail(None, format!("unexpected phase sequence {phases:?}"));
    }
    if log.is_sealed() && log.phases.iter().any(|s| s.ended_ms.is_none()) {
        return fail(None, "sealed log has an unfinished phase");
    }
    let plant = Plant::new(config.plant.clone());
    let mut last_index: Option<u64> = None;
    for span in &log.phases {
        let mut state = plant.initial_state();
        // Each step opens when the previous one commits. A recorded 1 ms may
        // stand for a same-millisecond commit, so the commit time is a range.
        let (mut lo, mut hi) = (span.started_ms, span.started_ms);
        for r in log.phase_records(span.phase) {
            let at = Some(r.step_index);
            if last_index.is_some_and(|i| r.step_index <= i) {
                return fail(at, "step indices must increase");
            }
            last_index = Some(r.step_index);
            if r.final_action_index != r.final_action.index() {
                return fail(at, "final_action_index does not match final_action");
            }
            if r.asked_why && !r.asked_what {
                return fail(at, "why asked without what");
            }
            if r.asked_what != r.suggestion.is_some() {
                return fail(at, "suggestion present iff what was asked");
            }
            if r.explanation.is_some() && !r.asked_why {
                return fail(at, "explanation without a why-question");
            }
            if r.move_type != MoveType::classify(r.pre_selected, r.suggestion, r.final_action) {
                return fail(at, "move_type disagrees with the classification rule");
            }
            if r.decision_time_ms == 0 {
                return fail(at, "decision time must be positive");
            }
            if !(lo..=hi).contains(&r.opened_ms) {
                return fail(at, format!("step opened at {} ms, previous step committed at {lo}..={hi} ms", r.opened_ms));
            }
            hi = r.opened_ms + r.decision_time_ms;
            lo = hi - u64::from(r.decision_time_ms == 1);
            if span.ended_ms.is_some_and(|end| lo > end) {
                return fail(at, "step lies outside its phase");
            }
            if config.condition == Condition::SelfTaught && r.asked_what {
                return fail(at, "self-taught session has an agent query");
            }
            if let Some(e) = &r.explanation {
                let ok = match config.condition {
                    Condition::Cxai => e.strategy == Strategy::Classical,
                    Condition::Axai => matches!(e.strategy, Strategy::Contrastive | Strategy::ContrastiveFallback),
                    Condition::SelfTaught => false,
                };
                if !ok {
                    return fail(at, format!("{:?} explanation in a {:?} session", e.strategy, config.condition));
                }
                if e.word_count != word_count(&e.text) {
                    return fail(at, "explanation word count is wrong");
                }
            }
            if let (Some(tree), Some(sug)) = (tree, r.suggestion) {
                let expected = tree.best_action(&state.to_vector()).map_err(|e| ReplayError {
                    step_index: at,
                    message: e.to_string(),
                })?;
                if expected != sug {
                    return fail(at, format!("suggestion {sug} but the tree selects {expected}"));
                }
            }
            let outcome = plant.step(&state, r.final_action);
            if outcome != r.outcome {
                return fail(at, "replayed outcome differs from the logged one");
            }
            state = outcome.next_state;
        }
    }
    if log.records.len() != log.phases.iter().map(|s| log.phase_records(s.phase).count()).sum::<usize>() {
        return fail(None, "records belong to a phase that never started");
    }
    if Totals::fold(&log.records) != log.totals {
        return fail(None, "totals differ from the fold over records");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{Action, PlantConfig};
    use crate::session::{Session, SessionConfig, SessionTimings, VirtualClock};
    use std::sync::Arc;

    fn sealed_log() -> SessionLog {
        let timings = SessionTimings {
            training_duration_s: 2.0,
            assessment_duration_s: 1.0,
        };
        let c = SessionConfig::new("r", Condition::SelfTaught, &timings, PlantConfig::default());
        let clock = VirtualClock::new();
        let mut s = Session::start(c, None, Arc::new(clock.clone()), None).unwrap();
        let plan = [Action::FuelDown, Action::SustainDown, Action::RegulatoryDown];
        for i in 0..40 {
            clock.advance(90);
            let _ = s.commit_action(plan[i % 3]);
            if s.is_sealed() {
                break;
            }
        }
        s.into_log()
    }

    #[test]
    fn clean_log_replays() {
        let log = sealed_log();
        assert!(log.is_sealed());
        assert!(log.totals.actions > 20);
        replay(&log, None).unwrap();
    }

    #[test]
    fn tampering_is_detected() {
        let mut log = sealed_log();
        log.records[3].outcome.energy += 1e-9;
        assert!(replay(&log, None).unwrap_err().message.contains("outcome"));

        let mut log = sealed_log();
        log.records[5].final_action = Action::Skip;
        assert!(replay(&log, None).is_err());

        let mut log = sealed_log();
        log.records[1].asked_why = true;
        assert_eq!(replay(&log, None).unwrap_err().step_index, Some(1));

        let mut log = sealed_log();
        log.totals.anomalies += 1;
        assert!(replay(&log, None).is_err());
    }
}
