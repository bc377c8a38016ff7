//! Line-delimited episode traces: one step outcome per line.

use super::{Action, StepOutcome};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub action: Action,
    pub action_index: usize,
    pub outcome: StepOutcome,
}

impl TraceRecord {
    pub fn new(step: usize, action: Action, outcome: StepOutcome) -> Self {
        TraceRecord {
            step,
            action,
            action_index: action.index(),
            outcome,
        }
    }
}

pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> io::Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
