//! Session logs.
//!
//! On disk a log is line-delimited JSON, one event per line, appended and
//! flushed as the session runs:
//!
//! ```text
//! {"type":"header","schema_version":1,"action_order":"...","feature_order":"...","config":{...}}
//! {"type":"phase_started","phase":"training","at_ms":0}
//! {"type":"move","step_index":0,"phase":"training",...}
//! {"type":"step_discarded","phase":"training","step_index":57,"at_ms":1800000}
//! {"type":"phase_ended","phase":"training","at_ms":1800000}
//! {"type":"sealed","at_ms":2400000,"totals":{...}}
//! ```
//!
//! Folding the events in order gives the [`SessionLog`] that `get-log` serves.

use super::{Phase, SessionConfig};
use crate::explain::Explanation;
use crate::plant::{action_order_fingerprint, feature_order_fingerprint, Action, StepOutcome};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveType {
    /// Pre-selection and suggestion agreed.
    Equal,
    /// They differed and the user kept the pre-selection.
    FollowSelf,
    /// They differed and the user took the suggestion.
    FollowAi,
    /// They differed and the user took a third action.
    Other,
}

impl MoveType {
    pub const ALL: [MoveType; 4] = [MoveType::Equal, MoveType::FollowSelf, MoveType::FollowAi, MoveType::Other];

    /// `None` unless both a pre-selection and a suggestion exist.
    pub fn classify(pre_selected: Option<Action>, suggestion: Option<Action>, final_action: Action) -> Option<MoveType> {
        let (pre, sug) = (pre_selected?, suggestion?);
        Some(if pre == sug {
            MoveType::Equal
        } else if final_action == pre {
            MoveType::FollowSelf
        } else if final_action == sug {
            MoveType::FollowAi
        } else {
            MoveType::Other
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            MoveType::Equal => "equal",
            MoveType::FollowSelf => "follow_self",
            MoveType::FollowAi => "follow_ai",
            MoveType::Other => "other",
        }
    }
}

/// One committed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    /// Position in the session, counting both phases.
    pub step_index: u64,
    pub phase: Phase,
    pub pre_selected: Option<Action>,
    pub asked_what: bool,
    pub asked_why: bool,
    pub suggestion: Option<Action>,
    /// Why-answer; `None` with `asked_why` set means no reason was available.
    pub explanation: Option<Explanation>,
    pub final_action: Action,
    pub final_action_index: usize,
    pub opened_ms: u64,
    pub decision_time_ms: u64,
    pub move_type: Option<MoveType>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub actions: u64,
    pub energy: f64,
    pub anomalies: u64,
    pub critic_steps: u64,
}

impl Totals {
    pub fn add(&mut self, outcome: &StepOutcome) {
        self.actions += 1;
        self.energy += outcome.energy;
        self.anomalies += u64::from(outcome.anomaly.is_some());
        self.critic_steps += u64::from(outcome.is_critic_step);
    }

    pub fn fold<'a>(records: impl IntoIterator<Item = &'a MoveRecord>) -> Totals {
        let mut t = Totals::default();
        for r in records {
            t.add(&r.outcome);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpan {
    pub phase: Phase,
    pub started_ms: u64,
    pub ended_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedStep {
    pub phase: Phase,
    pub step_index: u64,
    pub at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEvent {
    Header {
        schema_version: u32,
        action_order: String,
        feature_order: String,
        config: SessionConfig,
    },
    PhaseStarted {
        phase: Phase,
        at_ms: u64,
    },
    Move(MoveRecord),
    StepDiscarded {
        phase: Phase,
        step_index: u64,
        at_ms: u64,
    },
    PhaseEnded {
        phase: Phase,
        at_ms: u64,
    },
    Sealed {
        at_ms: u64,
        totals: Totals,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schema_version: u32,
    pub action_order: String,
    pub feature_order: String,
    pub config: SessionConfig,
    pub phases: Vec<PhaseSpan>,
    pub records: Vec<MoveRecord>,
    /// Open steps thrown away when their phase ended.
    pub discarded: Vec<DiscardedStep>,
    pub sealed_ms: Option<u64>,
    pub totals: Totals,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

impl SessionLog {
    pub fn new(config: SessionConfig) -> Self {
        SessionLog {
            schema_version: LOG_SCHEMA_VERSION,
            action_order: action_order_fingerprint(),
            feature_order: feature_order_fingerprint(),
            config,
            phases: Vec::new(),
            records: Vec::new(),
            discarded: Vec::new(),
            sealed_ms: None,
            totals: Totals::default(),
        }
    }

    pub fn session_id(&self) -> &str {
        &self.config.session_id
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed_ms.is_some()
    }

    pub fn header_event(&self) -> LogEvent {
        LogEvent::Header {
            schema_version: self.schema_version,
            action_order: self.action_order.clone(),
            feature_order: self.feature_order.clone(),
            config: self.config.clone(),
        }
    }

    /// Applies one non-header event.
    pub fn apply(&mut self, event: &LogEvent) -> Result<(), String> {
        match event {
            LogEvent::Header { .. } => return Err("duplicate header".into()),
            LogEvent::PhaseStarted { phase, at_ms } => self.phases.push(PhaseSpan {
                phase: *phase,
                started_ms: *at_ms,
                ended_ms: None,
            }),
            LogEvent::Move(record) => {
                self.totals.add(&record.outcome);
                self.records.push(record.clone());
            }
            LogEvent::StepDiscarded { phase, step_index, at_ms } => self.discarded.push(DiscardedStep {
                phase: *phase,
                step_index: *step_index,
                at_ms: *at_ms,
            }),
            LogEvent::PhaseEnded { phase, at_ms } => {
                let span = self
                    .phases
                    .last_mut()
                    .filter(|s| s.phase == *phase && s.ended_ms.is_none())
                    .ok_or_else(|| format!("{phase:?} ended without starting"))?;
                span.ended_ms = Some(*at_ms);
            }
            LogEvent::Sealed { at_ms, totals } => {
                if *totals != self.totals {
                    return Err("sealed totals differ from the fold over moves".into());
                }
                self.sealed_ms = Some(*at_ms);
            }
        }
        Ok(())
    }

    /// Records of one phase, in order.
    pub fn phase_records(&self, phase: Phase) -> impl Iterator<Item = &MoveRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    /// Line-delimited events equivalent to this log.
    pub fn to_events(&self) -> Vec<LogEvent> {
        let mut events = vec![self.header_event()];
        let mut records = self.records.iter().peekable();
        for span in &self.phases {
            events.push(LogEvent::PhaseStarted {
                phase: span.phase,
                at_ms: span.started_ms,
            });
            while let Some(r) = records.next_if(|r| r.phase == span.phase) {
                events.push(LogEvent::Move(r.clone()));
            }
            for d in self.discarded.iter().filter(|d| d.phase == span.phase) {
                events.push(LogEvent::StepDiscarded {
                    phase: d.phase,
                    step_index: d.step_index,
                    at_ms: d.at_ms,
                });
            }
            if let Some(at_ms) = span.ended_ms {
                events.push(LogEvent::PhaseEnded { phase: span.phase, at_ms });
            }
        }
        if let Some(at_ms) = self.sealed_ms {
            events.push(LogEvent::Sealed {
                at_ms,
                totals: self.totals,
            });
        }
        events
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("session log serializes")
    }
}

/// Append-only writer for one session's log file.
#[derive(Debug)]
pub struct LogSink {
    file: File,
}

impl LogSink {
    /// Creates the file; an existing file is an error.
    pub fn create(path: &Path) -> io::Result<LogSink> {
        let file = OpenOptions::new().append(true).create_new(true).open(path)?;
        Ok(LogSink { file })
    }

    pub fn append(&mut self, event: &LogEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Folds a line-delimited event stream into a log.
pub fn parse_log<R: BufRead>(input: R) -> Result<SessionLog, LogError> {
    let mut log: Option<SessionLog> = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| LogError::Malformed { line: i + 1, message };
        let event: LogEvent = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        match (&mut log, event) {
            (
                None,
                LogEvent::Header {
                    schema_version,
                    action_order,
                    feature_order,
                    config,
                },
            ) => {
                let mut l = SessionLog::new(config);
                l.schema_version = schema_version;
                l.action_order = action_order;
                l.feature_order = feature_order;
                log = Some(l);
            }
            (None, _) => return Err(malformed("first event must be the header".into())),
            (Some(l), event) => l.apply(&event).map_err(malformed)?,
        }
    }
    log.ok_or(LogError::Malformed {
        line: 0,
        message: "empty log".into(),
    })
}

pub fn read_log(path: &Path) -> Result<SessionLog, LogError> {
    parse_log(BufReader::new(File::open(path)?))
}

pub fn write_log<W: Write>(mut out: W, log: &SessionLog) -> io::Result<()> {
    for event in log.to_events() {
        serde_json::to_writer(&mut out, &event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
