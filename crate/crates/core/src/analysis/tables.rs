//! Plot-ready CSV tables, one row per session, group, feature, move type or
//! slice.

use super::GroupReport;
use crate::plant::Feature;
use crate::session::MoveType;
use std::io;
use std::path::{Path, PathBuf};

fn open(dir: &Path, name: &str, header: &[&str]) -> io::Result<(csv::Writer<std::fs::File>, PathBuf)> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    Ok((w, path))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the report's tables into `dir` and returns their paths.
pub fn write_tables(report: &GroupReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::new();

    let (mut w, p) = open(
        dir,
        "sessions.csv",
        &[
            "group",
            "session_id",
            "condition",
            "seed",
            "actions",
            "energy",
            "anomalies",
            "critic_steps",
            "assessment_energy",
            "assessment_anomalies",
            "what_questions",
            "why_questions",
            "mean_word_count",
            "mean_decision_ms",
        ],
    )?;
    for s in &report.sessions {
        w.write_record([
            s.group.clone(),
            s.session_id.clone(),
            s.condition.name().to_string(),
            s.seed.to_string(),
            s.totals.actions.to_string(),
            s.totals.energy.to_string(),
            s.totals.anomalies.to_string(),
            s.totals.critic_steps.to_string(),
            s.assessment.energy.to_string(),
            s.assessment.anomalies.to_string(),
            s.what_questions.to_string(),
            s.why_questions.to_string(),
            opt(s.mean_word_count),
            s.mean_decision_ms.to_string(),
        ])?;
    }
    w.flush()?;
    paths.push(p);

    let (mut w, p) = open(dir, "groups.csv", &["group", "measure", "mean", "stderr", "n"])?;
    for g in &report.groups {
        for (name, m) in [
            ("actions", g.actions),
            ("energy", g.energy),
            ("anomalies", g.anomalies),
            ("critic_steps", g.critic_steps),
            ("assessment_energy", g.assessment_energy),
            ("assessment_anomalies", g.assessment_anomalies),
            ("what_rate", g.what_rate),
            ("why_rate", g.why_rate),
        ] {
            w.write_record([
                g.group.clone(),
                name.to_string(),
                m.mean.to_string(),
                m.stderr.to_string(),
                m.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    paths.push(p);

    let (mut w, p) = open(dir, "explanandum.csv", &["group", "feature", "count", "percent"])?;
    for g in &report.groups {
        if let Some(d) = &g.explanandum {
            for f in Feature::ALL {
                w.write_record([
                    g.group.clone(),
                    f.name().to_string(),
                    d.counts[f.index()].to_string(),
                    d.percentages[f.index()].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    paths.push(p);

    let (mut w, p) = open(dir, "move_types.csv", &["group", "filter", "move_type", "count", "percent"])?;
    for g in &report.groups {
        for (filter, shares) in &g.move_types {
            if let Some(s) = shares {
                for (i, t) in MoveType::ALL.iter().enumerate() {
                    w.write_record([
                        g.group.clone(),
                        filter.clone(),
                        t.name().to_string(),
                        s.counts[i].to_string(),
                        s.percentage(*t).to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    paths.push(p);

    let (mut w, p) = open(dir, "slices.csv", &["group", "filter", "slice", "mean_ms", "stderr_ms", "n"])?;
    for g in &report.groups {
        for (filter, curve) in &g.decision_slices {
            for (i, b) in curve.iter().enumerate() {
                w.write_record([
                    g.group.clone(),
                    filter.clone(),
                    i.to_string(),
                    b.mean_ms.to_string(),
                    b.stderr_ms.to_string(),
                    b.n.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    paths.push(p);

    Ok(paths)
}
