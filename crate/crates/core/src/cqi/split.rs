//! Candidate-split statistics kept per leaf.

use crate::plant::{Feature, StateVector, ACTION_COUNT};
use crate::tree::{argmax_action, Direction, QValues};

/// Q-values and visit statistics for one side of a hypothetical split.
#[derive(Debug, Clone, PartialEq)]
pub struct SideStats {
    pub q_values: QValues,
    /// Exponentially decayed visit weight.
    pub weight: f64,
    pub visits: u64,
}

impl SideStats {
    pub fn new(q_values: QValues) -> Self {
        SideStats {
            q_values,
            weight: 0.0,
            visits: 0,
        }
    }

    fn max_q(&self) -> f64 {
        self.q_values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A hypothetical `feature <= threshold` split of a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// `[left, right]`.
    pub sides: [SideStats; 2],
}

impl SplitCandidate {
    pub fn new(feature: usize, threshold: f64, parent_q: QValues) -> Self {
        SplitCandidate {
            feature,
            threshold,
            sides: [SideStats::new(parent_q), SideStats::new(parent_q)],
        }
    }

    pub fn side_of(&self, state: &StateVector) -> usize {
        match Direction::of(state[self.feature], self.threshold) {
            Direction::LessEq => 0,
            Direction::Greater => 1,
        }
    }

    /// Q-learning update of the side `state` falls on, plus visit decay.
    pub fn update(&mut self, state: &StateVector, action: usize, target: f64, alpha: f64, decay: f64) {
        let side = self.side_of(state);
        for s in &mut self.sides {
            s.weight *= decay;
        }
        let s = &mut self.sides[side];
        s.weight += 1.0;
        s.visits += 1;
        s.q_values[action] += alpha * (target - s.q_values[action]);
    }

    /// Estimated policy improvement of performing this split: the
    /// visit-weighted greedy value of the two sides minus the leaf's greedy
    /// value. A split that leaves the greedy action unchanged on both sides
    /// improves nothing and is worth zero, as is one whose sides have not both
    /// been visited `min_side_visits` times.
    pub fn value(&self, parent_q: &QValues, min_side_visits: u64) -> f64 {
        let [l, r] = &self.sides;
        if l.visits < min_side_visits || r.visits < min_side_visits {
            return 0.0;
        }
        if argmax_action(&l.q_values) == argmax_action(&r.q_values) {
            return 0.0;
        }
        let total = l.weight + r.weight;
        if total <= 0.0 {
            return 0.0;
        }
        let parent_max = parent_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (l.weight * l.max_q() + r.weight * r.max_q()) / total - parent_max
    }
}

/// Per-leaf split bookkeeping: rod candidates exist from the start;
/// continuous candidates are the deciles of the first `warmup` visits.
#[derive(Debug, Clone)]
pub struct LeafStats {
    samples: Vec<[f64; 4]>,
    continuous_ready: bool,
    pub candidates: Vec<SplitCandidate>,
}

/// Mid-level thresholds for the rod features.
fn rod_thresholds(feature: Feature) -> &'static [f64] {
    match feature.rod_levels().len() {
        2 => &[0.5],
        3 => &[0.5, 1.5],
        _ => &[],
    }
}

/// Decile cut points of `values`, rounded to one decimal, deduplicated, and
/// restricted to cuts that leave samples on both sides.
pub fn decile_thresholds(values: &mut [f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let (lo, hi) = (values[0], values[n - 1]);
    let mut out: Vec<f64> = Vec::new();
    for k in 1..10 {
        let idx = (k * n / 10).clamp(1, n) - 1;
        let t = (values[idx] * 10.0).round() / 10.0;
        if t >= lo && t < hi && out.last() != Some(&t) {
            out.push(t);
        }
    }
    out.dedup();
    out
}

impl LeafStats {
    pub fn new(parent_q: QValues) -> Self {
        let mut candidates = Vec::new();
        for feature in Feature::ALL.iter().filter(|f| !f.is_continuous()) {
            for &t in rod_thresholds(*feature) {
                candidates.push(SplitCandidate::new(feature.index(), t, parent_q));
            }
        }
        LeafStats {
            samples: Vec::new(),
            continuous_ready: false,
            candidates,
        }
    }

    pub fn continuous_ready(&self) -> bool {
        self.continuous_ready
    }

    /// Records a visit. `leaf_q` is the leaf's Q-array after its own update,
    /// used to seed continuous candidates when warm-up completes.
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        state: &StateVector,
        action: usize,
        target: f64,
        alpha: f64,
        decay: f64,
        warmup: usize,
        leaf_q: &QValues,
    ) {
        debug_assert!(action < ACTION_COUNT);
        if !self.continuous_ready {
            self.samples.push([state[0], state[1], state[2], state[3]]);
            if self.samples.len() >= warmup {
                for f in 0..4 {
                    let mut column: Vec<f64> = self.samples.iter().map(|s| s[f]).collect();
                    for t in decile_thresholds(&mut column) {
                        self.candidates.push(SplitCandidate::new(f, t, *leaf_q));
                    }
                }
                self.samples = Vec::new();
                self.continuous_ready = true;
            }
        }
        for c in &mut self.candidates {
            c.update(state, action, target, alpha, decay);
        }
    }

    /// Highest-valued candidate; ties keep the earliest.
    pub fn best(&self, parent_q: &QValues, min_side_visits: u64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.candidates.iter().enumerate() {
            let v = c.value(parent_q, min_side_visits);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        best
    }
}
