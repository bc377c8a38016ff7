//! Experimental protocol: a training phase then an assessment phase, each
//! with a fixed time budget, during which the user steps the plant and may
//! query the agent.
//!
//! Within a step the calls must come in this order, each optional except the
//! commit:
//!
//! ```text
//! pre_select -> ask_what -> ask_why -> commit_action
//! ```
//!
//! Any other order is rejected and leaves the log untouched. The agent never
//! volunteers anything: suggestions and explanations are only produced by
//! `ask_what` and `ask_why`.
//!
//! Every mutator first checks the phase clock. If the phase ran out the open
//! step is discarded, the session moves on at the exact boundary time (next
//! phase or sealed) and the call fails with [`SessionError::PhaseExpired`].

mod clock;
mod log;
mod registry;
mod replay;

pub use clock::{Clock, SystemClock, VirtualClock};
pub use log::{
    parse_log, read_log, write_log, DiscardedStep, LogError, LogEvent, LogSink, MoveRecord, MoveType, PhaseSpan,
    SessionLog, Totals, LOG_SCHEMA_VERSION,
};
pub use registry::SessionRegistry;
pub use replay::{replay, ReplayError};

use crate::config::ConfigError;
use crate::explain::{answer_what, answer_why, ExplainError, Explanation, SelectionMode, Templates, UsageTracker};
use crate::plant::{Action, Plant, PlantConfig, PlantState, StateVector, StepOutcome};
use crate::tree::{DecisionTree, Descent};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Phase durations, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionTimings {
    pub training_duration_s: f64,
    pub assessment_duration_s: f64,
}

impl SessionTimings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("training_duration_s", self.training_duration_s),
            ("assessment_duration_s", self.assessment_duration_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid {
                    path: format!("session.{name}"),
                    message: format!("must be a positive number of seconds, got {v}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Agent answers why-questions with classical selection.
    Cxai,
    /// Agent answers why-questions with contrastive selection.
    Axai,
    /// No agent.
    SelfTaught,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Cxai, Condition::Axai, Condition::SelfTaught];

    pub fn selection_mode(self) -> Option<SelectionMode> {
        match self {
            Condition::Cxai => Some(SelectionMode::Classical),
            Condition::Axai => Some(SelectionMode::Contrastive),
            Condition::SelfTaught => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Condition::Cxai => "cxai",
            Condition::Axai => "axai",
            Condition::SelfTaught => "self_taught",
        }
    }

    /// Accepts `cxai`, `axai`, `self` and `self_taught`.
    pub fn from_name(name: &str) -> Option<Condition> {
        match name {
            "cxai" => Some(Condition::Cxai),
            "axai" => Some(Condition::Axai),
            "self" | "self_taught" => Some(Condition::SelfTaught),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Assessment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub condition: Condition,
    pub training_duration_s: f64,
    pub assessment_duration_s: f64,
    pub seed: u64,
    /// SHA-256 of the tree document the agent uses; absent for self-taught
    /// sessions.
    pub tree_sha256: Option<String>,
    pub plant: PlantConfig,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, condition: Condition, timings: &SessionTimings, plant: PlantConfig) -> Self {
        SessionConfig {
            session_id: session_id.into(),
            condition,
            training_duration_s: timings.training_duration_s,
            assessment_duration_s: timings.assessment_duration_s,
            seed: 0,
            tree_sha256: None,
            plant,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let id_ok = !self.session_id.is_empty()
            && self.session_id.len() <= 128
            && self
                .session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !id_ok {
            return Err(ConfigError::Invalid {
                path: "session_id".into(),
                message: "must be 1-128 characters from [A-Za-z0-9_-]".into(),
            });
        }
        SessionTimings {
            training_duration_s: self.training_duration_s,
            assessment_duration_s: self.assessment_duration_s,
        }
        .validate()?;
        if self.condition == Condition::SelfTaught && self.tree_sha256.is_some() {
            return Err(ConfigError::Invalid {
                path: "tree_sha256".into(),
                message: "self-taught sessions have no agent tree".into(),
            });
        }
        self.plant.validate()
    }

    pub fn duration_ms(&self, phase: Phase) -> u64 {
        let s = match phase {
            Phase::Training => self.training_duration_s,
            Phase::Assessment => self.assessment_duration_s,
        };
        ((s * 1000.0).round() as u64).max(1)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("this condition needs an agent tree")]
    MissingTree,
    #[error("tree document hash {found} does not match the configured {expected}")]
    TreeMismatch { expected: String, found: String },
    #[error("session id {0} already exists")]
    DuplicateSession(String),
    #[error("no session with id {0}")]
    UnknownSession(String),
    #[error("the agent is not available in self-taught sessions")]
    NotAvailable,
    #[error("an action was already pre-selected in this step")]
    AlreadyPreSelected,
    #[error("pre-selection must come before any question in a step")]
    PreSelectAfterQuery,
    #[error("ask what the agent would do before asking why")]
    WhyBeforeWhat,
    #[error("the {0:?} phase has expired; the open step was discarded")]
    PhaseExpired(Phase),
    #[error("the session is already in the assessment phase")]
    AlreadyAdvanced,
    #[error("the session is sealed")]
    Sealed,
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("log write failed: {0}")]
    Io(String),
}

impl SessionError {
    /// Errors caused by calling the protocol out of order or out of time.
    pub fn is_protocol_violation(&self) -> bool {
        matches!(
            self,
            SessionError::NotAvailable
                | SessionError::AlreadyPreSelected
                | SessionError::PreSelectAfterQuery
                | SessionError::WhyBeforeWhat
                | SessionError::PhaseExpired(_)
                | SessionError::AlreadyAdvanced
                | SessionError::Sealed
        )
    }
}

/// Clock-driven transitions, reported by [`Session::poll_clock`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ClockEvent {
    PhaseAdvanced { ended: Phase, at_ms: u64 },
    Sealed { at_ms: u64 },
}

#[derive(Debug, Clone, Default)]
struct StepContext {
    opened_ms: u64,
    pre_selected: Option<Action>,
    what: Option<(Action, Descent)>,
    /// `Some(None)` once a why-question found no reason.
    why: Option<Option<Explanation>>,
}

impl StepContext {
    fn opened_at(ms: u64) -> Self {
        StepContext {
            opened_ms: ms,
            ..Default::default()
        }
    }

    fn has_activity(&self) -> bool {
        self.pre_selected.is_some() || self.what.is_some()
    }
}

/// Open-step flags shown to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub step_index: u64,
    pub opened_ms: u64,
    pub pre_selected: Option<Action>,
    pub asked_what: bool,
    pub asked_why: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub condition: Condition,
    pub phase: Phase,
    pub sealed: bool,
    pub now_ms: u64,
    pub phase_remaining_ms: u64,
    pub state: PlantState,
    pub state_vector: StateVector,
    pub step: StepView,
    pub totals: Totals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitResult {
    pub step_index: u64,
    pub phase: Phase,
    pub action: Action,
    pub action_index: usize,
    pub decision_time_ms: u64,
    pub move_type: Option<MoveType>,
    pub outcome: StepOutcome,
    /// An anomaly occurred and the plant was restarted.
    pub restarted: bool,
}

/// One participant's run through both phases.
pub struct Session {
    log: SessionLog,
    tree: Option<Arc<DecisionTree>>,
    templates: Arc<Templates>,
    plant: Plant,
    clock: Arc<dyn Clock>,
    sink: Option<LogSink>,
    state: PlantState,
    phase: Phase,
    phase_started_ms: u64,
    next_step: u64,
    step: StepContext,
    tracker: UsageTracker,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.log.config.session_id)
            .field("phase", &self.phase)
            .field("next_step", &self.next_step)
            .field("sealed", &self.log.is_sealed())
            .finish()
    }
}

impl Session {
    /// Opens a session in the training phase with the plant at its initial
    /// state. Agent conditions need a tree whose document hash matches
    /// `config.tree_sha256` when that is set.
    pub fn start(
        config: SessionConfig,
        tree: Option<Arc<DecisionTree>>,
        clock: Arc<dyn Clock>,
        sink: Option<LogSink>,
    ) -> Result<Session, SessionError> {
        config
            .validate()
            .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let tree = match config.condition {
            Condition::SelfTaught => None,
            _ => {
                let tree = tree.ok_or(SessionError::MissingTree)?;
                if let Some(expected) = &config.tree_sha256 {
                    let found = tree.to_document().sha256();
                    if &found != expected {
                        return Err(SessionError::TreeMismatch {
                            expected: expected.clone(),
                            found,
                        });
                    }
                }
                Some(tree)
            }
        };
        let plant = Plant::new(config.plant.clone());
        let now = clock.now_ms();
        let mut session = Session {
            state: plant.initial_state(),
            log: SessionLog::new(config),
            tree,
            templates: Arc::new(Templates::default()),
            plant,
            clock,
            sink,
            phase: Phase::Training,
            phase_started_ms: now,
            next_step: 0,
            step: StepContext::opened_at(now),
            tracker: UsageTracker::new(),
        };
        if let Some(sink) = &mut session.sink {
            sink.append(&session.log.header_event())
                .map_err(|e| SessionError::Io(e.to_string()))?;
        }
        session.emit(LogEvent::PhaseStarted {
            phase: Phase::Training,
            at_ms: now,
        })?;
        Ok(session)
    }

    pub fn set_templates(&mut self, templates: Arc<Templates>) {
        self.templates = templates;
    }

    pub fn id(&self) -> &str {
        &self.log.config.session_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.log.config
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn into_log(self) -> SessionLog {
        self.log
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_sealed(&self) -> bool {
        self.log.is_sealed()
    }

    pub fn plant_state(&self) -> &PlantState {
        &self.state
    }

    pub fn tracker(&self) -> &UsageTracker {
        &self.tracker
    }

    fn emit(&mut self, event: LogEvent) -> Result<(), SessionError> {
        if let Some(sink) = &mut self.sink {
            sink.append(&event).map_err(|e| SessionError::Io(e.to_string()))?;
        }
        self.log.apply(&event).map_err(SessionError::Io)
    }

    fn phase_end_ms(&self) -> u64 {
        self.phase_started_ms + self.log.config.duration_ms(self.phase)
    }

    /// Ends the current phase at `at_ms`, throwing away the open step, and
    /// either starts the assessment phase or seals.
    fn end_phase(&mut self, at_ms: u64, seal: bool) -> Result<ClockEvent, SessionError> {
        if self.step.has_activity() {
            self.emit(LogEvent::StepDiscarded {
                phase: self.phase,
                step_index: self.next_step,
                at_ms,
            })?;
        }
        let ended = self.phase;
        self.emit(LogEvent::PhaseEnded { phase: ended, at_ms })?;
        if ended == Phase::Training && !seal {
            self.phase = Phase::Assessment;
            self.phase_started_ms = at_ms;
            self.state = self.plant.initial_state();
            self.step = StepContext::opened_at(at_ms);
            self.tracker.clear();
            self.emit(LogEvent::PhaseStarted {
                phase: Phase::Assessment,
                at_ms,
            })?;
            Ok(ClockEvent::PhaseAdvanced { ended, at_ms })
        } else {
            self.step = StepContext::opened_at(at_ms);
            let totals = self.log.totals;
            self.emit(LogEvent::Sealed { at_ms, totals })?;
            Ok(ClockEvent::Sealed { at_ms })
        }
    }

    /// Applies every phase boundary the clock has passed.
    pub fn poll_clock(&mut self) -> Result<Vec<ClockEvent>, SessionError> {
        let mut events = Vec::new();
        while !self.is_sealed() {
            let end = self.phase_end_ms();
            if self.clock.now_ms() < end {
                break;
            }
            events.push(self.end_phase(end, self.phase == Phase::Assessment)?);
        }
        Ok(events)
    }

    /// Gate for every mutator.
    fn guard(&mut self) -> Result<(), SessionError> {
        if self.is_sealed() {
            return Err(SessionError::Sealed);
        }
        let phase = self.phase;
        if self.poll_clock()?.is_empty() {
            Ok(())
        } else {
            Err(SessionError::PhaseExpired(phase))
        }
    }

    pub fn pre_select(&mut self, action: Action) -> Result<(), SessionError> {
        self.guard()?;
        if self.step.pre_selected.is_some() {
            return Err(SessionError::AlreadyPreSelected);
        }
        if self.step.what.is_some() {
            return Err(SessionError::PreSelectAfterQuery);
        }
        self.step.pre_selected = Some(action);
        Ok(())
    }

    /// The agent's suggestion for the current state. Asking again within the
    /// step returns the same answer.
    pub fn ask_what(&mut self) -> Result<Action, SessionError> {
        self.guard()?;
        let tree = self.tree.as_ref().ok_or(SessionError::NotAvailable)?;
        if let Some((action, _)) = &self.step.what {
            return Ok(*action);
        }
        let (action, descent) = answer_what(tree, &self.state.to_vector()).map_err(ExplainError::from)?;
        self.step.what = Some((action, descent));
        Ok(action)
    }

    /// Reason for this step's suggestion, or `None` when the tree has no
    /// split to cite. Asking again within the step returns the same answer.
    pub fn ask_why(&mut self) -> Result<Option<Explanation>, SessionError> {
        self.guard()?;
        let tree = self.tree.as_ref().ok_or(SessionError::NotAvailable)?;
        let mode = self
            .log
            .config
            .condition
            .selection_mode()
            .ok_or(SessionError::NotAvailable)?;
        let (_, descent) = self.step.what.as_ref().ok_or(SessionError::WhyBeforeWhat)?;
        if let Some(answer) = &self.step.why {
            return Ok(answer.clone());
        }
        let answer = match answer_why(
            tree,
            descent,
            mode,
            self.step.pre_selected,
            &mut self.tracker,
            &self.templates,
        ) {
            Ok(e) => Some(e),
            Err(ExplainError::EmptyPath) => None,
            Err(e) => return Err(e.into()),
        };
        self.step.why = Some(answer.clone());
        Ok(answer)
    }

    pub fn commit_action(&mut self, action: Action) -> Result<CommitResult, SessionError> {
        self.guard()?;
        let now = self.clock.now_ms();
        let step = std::mem::replace(&mut self.step, StepContext::opened_at(now));
        let outcome = self.plant.step(&self.state, action);
        let suggestion = step.what.as_ref().map(|(a, _)| *a);
        let move_type = MoveType::classify(step.pre_selected, suggestion, action);
        let decision_time_ms = now.saturating_sub(step.opened_ms).max(1);
        let record = MoveRecord {
            step_index: self.next_step,
            phase: self.phase,
            pre_selected: step.pre_selected,
            asked_what: step.what.is_some(),
            asked_why: step.why.is_some(),
            suggestion,
            explanation: step.why.flatten(),
            final_action: action,
            final_action_index: action.index(),
            opened_ms: step.opened_ms,
            decision_time_ms,
            move_type,
            outcome,
        };
        self.emit(LogEvent::Move(record))?;
        self.state = outcome.next_state;
        let result = CommitResult {
            step_index: self.next_step,
            phase: self.phase,
            action,
            action_index: action.index(),
            decision_time_ms,
            move_type,
            outcome,
            restarted: outcome.anomaly.is_some(),
        };
        self.next_step += 1;
        Ok(result)
    }

    /// Operator override: ends training now. Fails once in assessment.
    pub fn advance_phase(&mut self) -> Result<(), SessionError> {
        self.guard()?;
        if self.phase == Phase::Assessment {
            return Err(SessionError::AlreadyAdvanced);
        }
        let now = self.clock.now_ms();
        self.end_phase(now, false)?;
        Ok(())
    }

    /// Ends the session now. Sealing an already sealed session is an error.
    pub fn seal(&mut self) -> Result<Totals, SessionError> {
        if self.is_sealed() {
            return Err(SessionError::Sealed);
        }
        self.poll_clock()?;
        if !self.is_sealed() {
            let now = self.clock.now_ms();
            self.end_phase(now, true)?;
        }
        Ok(self.log.totals)
    }

    pub fn view(&self) -> SessionView {
        let now = self.clock.now_ms();
        let sealed = self.is_sealed();
        SessionView {
            session_id: self.id().to_string(),
            condition: self.log.config.condition,
            phase: self.phase,
            sealed,
            now_ms: now,
            phase_remaining_ms: if sealed {
                0
            } else {
                self.phase_end_ms().saturating_sub(now)
            },
            state: self.state,
            state_vector: self.state.to_vector(),
            step: StepView {
                step_index: self.next_step,
                opened_ms: self.step.opened_ms,
                pre_selected: self.step.pre_selected,
                asked_what: self.step.what.is_some(),
                asked_why: self.step.why.is_some(),
            },
            totals: self.log.totals,
        }
    }
}
