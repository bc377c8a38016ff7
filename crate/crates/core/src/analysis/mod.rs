//! Behavioral measures computed from sealed session logs.

mod stats;
mod tables;

pub use stats::{chi_square_independence, welch_t_test, MeanSe, TestResult};
pub use tables::write_tables;

use crate::explain::Strategy;
use crate::plant::{Feature, FEATURE_COUNT};
use crate::session::{Condition, MoveRecord, MoveType, Phase, SessionLog, Totals};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("only {steps} steps for {slices} slices; use --slices {steps} or fewer")]
    TooFewSteps { steps: usize, slices: usize },
    #[error("the number of slices must be positive")]
    NoSlices,
    #[error("no logs to analyze{0}")]
    Empty(String),
    #[error("log {session} has schema_version {found}, other logs have {expected}")]
    SchemaMismatch { session: String, found: u32, expected: u32 },
    #[error("log {0} is not sealed")]
    Unsealed(String),
    #[error("log {0}: totals differ from the fold over its records")]
    TotalsMismatch(String),
}

/// Which steps a measure looks at, by the questions asked in them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFilter {
    All,
    /// No question asked.
    None,
    /// What asked, why not.
    What,
    /// Why asked (and therefore what).
    Why,
}

impl QueryFilter {
    pub const ALL: [QueryFilter; 4] = [QueryFilter::All, QueryFilter::None, QueryFilter::What, QueryFilter::Why];

    pub fn matches(self, r: &MoveRecord) -> bool {
        match self {
            QueryFilter::All => true,
            QueryFilter::None => !r.asked_what && !r.asked_why,
            QueryFilter::What => r.asked_what && !r.asked_why,
            QueryFilter::Why => r.asked_why,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QueryFilter::All => "all",
            QueryFilter::None => "none",
            QueryFilter::What => "what",
            QueryFilter::Why => "why",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceStat {
    pub mean_ms: f64,
    pub stderr_ms: f64,
    pub n: usize,
}

/// Splits `values` in order into `n_slices` contiguous bins, the first
/// `len % n_slices` bins taking one extra value, and summarises each bin.
pub fn slice_values(values: &[f64], n_slices: usize) -> Result<Vec<SliceStat>, AnalysisError> {
    if n_slices == 0 {
        return Err(AnalysisError::NoSlices);
    }
    if values.len() < n_slices {
        return Err(AnalysisError::TooFewSteps {
            steps: values.len(),
            slices: n_slices,
        });
    }
    let base = values.len() / n_slices;
    let extra = values.len() % n_slices;
    let mut out = Vec::with_capacity(n_slices);
    let mut start = 0;
    for i in 0..n_slices {
        let len = base + usize::from(i < extra);
        let m = MeanSe::of(&values[start..start + len]).expect("bins are non-empty");
        out.push(SliceStat {
            mean_ms: m.mean,
            stderr_ms: m.stderr,
            n: m.n,
        });
        start += len;
    }
    Ok(out)
}

/// Decision-time curve of one phase of one log, over the steps the filter
/// keeps.
pub fn slice_decision_times(
    log: &SessionLog,
    phase: Phase,
    filter: QueryFilter,
    n_slices: usize,
) -> Result<Vec<SliceStat>, AnalysisError> {
    let times: Vec<f64> = log
        .phase_records(phase)
        .filter(|r| filter.matches(r))
        .map(|r| r.decision_time_ms as f64)
        .collect();
    slice_values(&times, n_slices)
}

/// Per-session curves averaged bin by bin; the error is across sessions.
/// Sessions with fewer matching steps than slices are left out.
pub fn group_slice_curve(logs: &[SessionLog], phase: Phase, filter: QueryFilter, n_slices: usize) -> Vec<SliceStat> {
    let curves: Vec<Vec<SliceStat>> = logs
        .iter()
        .filter_map(|l| slice_decision_times(l, phase, filter, n_slices).ok())
        .collect();
    if curves.is_empty() {
        return Vec::new();
    }
    (0..n_slices)
        .map(|i| {
            let means: Vec<f64> = curves.iter().map(|c| c[i].mean_ms).collect();
            let m = MeanSe::of(&means).expect("at least one curve");
            SliceStat {
                mean_ms: m.mean,
                stderr_ms: m.stderr,
                n: m.n,
            }
        })
        .collect()
}

/// Share of explanations citing each feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanandumDistribution {
    /// Indexed by feature order.
    pub counts: [u64; FEATURE_COUNT],
    pub total: u64,
    pub percentages: [f64; FEATURE_COUNT],
}

impl ExplanandumDistribution {
    /// `None` when there are no explanations.
    pub fn from_counts(counts: [u64; FEATURE_COUNT]) -> Option<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let percentages = counts.map(|c| 100.0 * c as f64 / total as f64);
        Some(ExplanandumDistribution {
            counts,
            total,
            percentages,
        })
    }

    pub fn percentage(&self, feature: Feature) -> f64 {
        self.percentages[feature.index()]
    }
}

pub fn explanandum_counts<'a>(logs: impl IntoIterator<Item = &'a SessionLog>) -> [u64; FEATURE_COUNT] {
    let mut counts = [0u64; FEATURE_COUNT];
    for r in logs.into_iter().flat_map(|l| &l.records) {
        if let Some(e) = &r.explanation {
            counts[e.feature_index] += 1;
        }
    }
    counts
}

pub fn explanandum_distribution<'a>(logs: impl IntoIterator<Item = &'a SessionLog>) -> Option<ExplanandumDistribution> {
    ExplanandumDistribution::from_counts(explanandum_counts(logs))
}

/// Move types among classified steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveTypeShares {
    /// Indexed like [`MoveType::ALL`].
    pub counts: [u64; 4],
    pub total: u64,
    pub equal: f64,
    pub follow_self: f64,
    pub follow_ai: f64,
    pub other: f64,
}

impl MoveTypeShares {
    pub fn from_counts(counts: [u64; 4]) -> Option<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        let pct = |i: usize| 100.0 * counts[i] as f64 / total as f64;
        Some(MoveTypeShares {
            counts,
            total,
            equal: pct(0),
            follow_self: pct(1),
            follow_ai: pct(2),
            other: pct(3),
        })
    }

    pub fn percentage(&self, t: MoveType) -> f64 {
        match t {
            MoveType::Equal => self.equal,
            MoveType::FollowSelf => self.follow_self,
            MoveType::FollowAi => self.follow_ai,
            MoveType::Other => self.other,
        }
    }

    /// Equal / follow-self / follow-AI shares with `Other` left out.
    pub fn three_way(&self) -> Option<[f64; 3]> {
        let n = self.total - self.counts[3];
        (n > 0).then(|| [0, 1, 2].map(|i| 100.0 * self.counts[i] as f64 / n as f64))
    }
}

pub fn move_type_counts<'a>(logs: impl IntoIterator<Item = &'a SessionLog>, filter: QueryFilter) -> [u64; 4] {
    let mut counts = [0u64; 4];
    for r in logs.into_iter().flat_map(|l| &l.records) {
        if let (true, Some(t)) = (filter.matches(r), r.move_type) {
            counts[MoveType::ALL.iter().position(|x| *x == t).expect("known type")] += 1;
        }
    }
    counts
}

/// `None` when no step under the filter was classified.
pub fn move_type_percentages<'a>(
    logs: impl IntoIterator<Item = &'a SessionLog>,
    filter: QueryFilter,
) -> Option<MoveTypeShares> {
    MoveTypeShares::from_counts(move_type_counts(logs, filter))
}

type Metric = fn(&SessionSummary) -> f64;

/// Per-session figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub group: String,
    pub condition: Condition,
    pub seed: u64,
    pub totals: Totals,
    pub training: Totals,
    pub assessment: Totals,
    pub what_questions: u64,
    pub why_questions: u64,
    pub what_rate: f64,
    pub why_rate: f64,
    pub explanations: u64,
    pub mean_word_count: Option<f64>,
    pub mean_decision_ms: f64,
}

fn check_log(log: &SessionLog) -> Result<(), AnalysisError> {
    if !log.is_sealed() {
        return Err(AnalysisError::Unsealed(log.session_id().into()));
    }
    if Totals::fold(&log.records) != log.totals {
        return Err(AnalysisError::TotalsMismatch(log.session_id().into()));
    }
    Ok(())
}

pub fn summarize(log: &SessionLog, group: &str) -> Result<SessionSummary, AnalysisError> {
    check_log(log)?;
    let steps = log.records.len() as f64;
    let what = log.records.iter().filter(|r| r.asked_what).count() as u64;
    let why = log.records.iter().filter(|r| r.asked_why).count() as u64;
    let words: Vec<f64> = log
        .records
        .iter()
        .filter_map(|r| r.explanation.as_ref())
        .map(|e| e.word_count as f64)
        .collect();
    let rate = |n: u64| if steps > 0.0 { n as f64 / steps } else { 0.0 };
    let decisions: Vec<f64> = log.records.iter().map(|r| r.decision_time_ms as f64).collect();
    Ok(SessionSummary {
        session_id: log.session_id().into(),
        group: group.into(),
        condition: log.config.condition,
        seed: log.config.seed,
        totals: log.totals,
        training: Totals::fold(log.phase_records(Phase::Training)),
        assessment: Totals::fold(log.phase_records(Phase::Assessment)),
        what_questions: what,
        why_questions: why,
        what_rate: rate(what),
        why_rate: rate(why),
        explanations: words.len() as u64,
        mean_word_count: MeanSe::of(&words).map(|m| m.mean),
        mean_decision_ms: MeanSe::of(&decisions).map_or(0.0, |m| m.mean),
    })
}

/// Logs analysed together under one name.
#[derive(Debug, Clone)]
pub struct LogGroup {
    pub name: String,
    pub logs: Vec<SessionLog>,
}

/// One group per condition, in condition order.
pub fn group_by_condition(logs: Vec<SessionLog>) -> Vec<LogGroup> {
    let mut map: BTreeMap<Condition, Vec<SessionLog>> = BTreeMap::new();
    for log in logs {
        map.entry(log.config.condition).or_default().push(log);
    }
    map.into_iter()
        .map(|(c, logs)| LogGroup {
            name: c.name().into(),
            logs,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub sessions: usize,
    pub actions: MeanSe,
    pub energy: MeanSe,
    pub anomalies: MeanSe,
    pub critic_steps: MeanSe,
    pub assessment_energy: MeanSe,
    pub assessment_anomalies: MeanSe,
    pub what_rate: MeanSe,
    pub why_rate: MeanSe,
    /// Over all explanations of the group.
    pub mean_word_count: Option<f64>,
    pub explanandum: Option<ExplanandumDistribution>,
    /// Keyed by query filter name.
    pub move_types: BTreeMap<String, Option<MoveTypeShares>>,
    /// Training-phase decision-time curves keyed by query filter name.
    pub decision_slices: BTreeMap<String, Vec<SliceStat>>,
    /// Explanation counts by strategy, plus `no_reason`.
    pub strategies: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub groups: [String; 2],
    #[serde(flatten)]
    pub result: TestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub schema_version: u32,
    pub log_schema_version: u32,
    pub n_slices: usize,
    pub groups: Vec<GroupSummary>,
    pub sessions: Vec<SessionSummary>,
    pub tests: Vec<NamedTest>,
}

fn mean_se(values: impl Iterator<Item = f64>) -> MeanSe {
    let v: Vec<f64> = values.collect();
    MeanSe::of(&v).unwrap_or(MeanSe {
        mean: 0.0,
        stderr: 0.0,
        n: 0,
    })
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Classical => "classical",
        Strategy::Contrastive => "contrastive",
        Strategy::ContrastiveFallback => "contrastive_fallback",
    }
}

fn summarize_group(group: &LogGroup, sessions: &[SessionSummary], n_slices: usize) -> GroupSummary {
    let logs = &group.logs;
    let words: Vec<f64> = logs
        .iter()
        .flat_map(|l| &l.records)
        .filter_map(|r| r.explanation.as_ref())
        .map(|e| e.word_count as f64)
        .collect();
    let mut strategies = BTreeMap::new();
    for r in logs.iter().flat_map(|l| &l.records).filter(|r| r.asked_why) {
        let key = r.explanation.as_ref().map_or("no_reason", |e| strategy_name(e.strategy));
        *strategies.entry(key.to_string()).or_insert(0) += 1;
    }
    GroupSummary {
        group: group.name.clone(),
        sessions: logs.len(),
        actions: mean_se(sessions.iter().map(|s| s.totals.actions as f64)),
        energy: mean_se(sessions.iter().map(|s| s.totals.energy)),
        anomalies: mean_se(sessions.iter().map(|s| s.totals.anomalies as f64)),
        critic_steps: mean_se(sessions.iter().map(|s| s.totals.critic_steps as f64)),
        assessment_energy: mean_se(sessions.iter().map(|s| s.assessment.energy)),
        assessment_anomalies: mean_se(sessions.iter().map(|s| s.assessment.anomalies as f64)),
        what_rate: mean_se(sessions.iter().map(|s| s.what_rate)),
        why_rate: mean_se(sessions.iter().map(|s| s.why_rate)),
        mean_word_count: MeanSe::of(&words).map(|m| m.mean),
        explanandum: explanandum_distribution(logs),
        move_types: QueryFilter::ALL
            .iter()
            .map(|f| (f.name().to_string(), move_type_percentages(logs, *f)))
            .collect(),
        decision_slices: QueryFilter::ALL
            .iter()
            .map(|f| {
                (
                    f.name().to_string(),
                    group_slice_curve(logs, Phase::Training, *f, n_slices),
                )
            })
            .collect(),
        strategies,
    }
}

/// Full report over the groups, with pairwise tests between groups in the
/// order given.
pub fn group_report(groups: &[LogGroup], n_slices: usize) -> Result<GroupReport, AnalysisError> {
    if n_slices == 0 {
        return Err(AnalysisError::NoSlices);
    }
    if groups.is_empty() {
        return Err(AnalysisError::Empty(String::new()));
    }
    let first = groups
        .iter()
        .flat_map(|g| &g.logs)
        .next()
        .ok_or_else(|| AnalysisError::Empty(String::new()))?;
    let version = first.schema_version;
    for g in groups {
        if g.logs.is_empty() {
            return Err(AnalysisError::Empty(format!(" in group {}", g.name)));
        }
        for l in &g.logs {
            if l.schema_version != version {
                return Err(AnalysisError::SchemaMismatch {
                    session: l.session_id().into(),
                    found: l.schema_version,
                    expected: version,
                });
            }
        }
    }
    let per_group: Vec<Vec<SessionSummary>> = groups
        .iter()
        .map(|g| g.logs.iter().map(|l| summarize(l, &g.name)).collect())
        .collect::<Result<_, _>>()?;
    let summaries: Vec<GroupSummary> = groups
        .iter()
        .zip(&per_group)
        .map(|(g, s)| summarize_group(g, s, n_slices))
        .collect();
    let mut tests = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let names = [groups[i].name.clone(), groups[j].name.clone()];
            let table = vec![
                explanandum_counts(&groups[i].logs).to_vec(),
                explanandum_counts(&groups[j].logs).to_vec(),
            ];
            if let Some(result) = chi_square_independence(&table) {
                tests.push(NamedTest {
                    name: "explanandum_chi_square".into(),
                    groups: names.clone(),
                    result,
                });
            }
            let metrics: [(&str, Metric); 3] = [
                ("energy_welch_t", |s| s.totals.energy),
                ("anomalies_welch_t", |s| s.totals.anomalies as f64),
                ("critic_steps_welch_t", |s| s.totals.critic_steps as f64),
            ];
            for (name, f) in metrics {
                let a: Vec<f64> = per_group[i].iter().map(f).collect();
                let b: Vec<f64> = per_group[j].iter().map(f).collect();
                if let Some(result) = welch_t_test(&a, &b) {
                    tests.push(NamedTest {
                        name: name.into(),
                        groups: names.clone(),
                        result,
                    });
                }
            }
        }
    }
    Ok(GroupReport {
        schema_version: REPORT_SCHEMA_VERSION,
        log_schema_version: version,
        n_slices,
        groups: summaries,
        sessions: per_group.into_iter().flatten().collect(),
        tests,
    })
}
