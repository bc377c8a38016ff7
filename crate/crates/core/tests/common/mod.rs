//! Test-side oracles. Nothing here calls the descent, path or selection code
//! under test; trees are read only through their node arena.

#![allow(dead_code)]

use nppx_core::plant::{Action, Feature, StateVector, ACTION_COUNT, FEATURE_COUNT};
use nppx_core::tree::{BranchNode, DecisionTree, LeafNode, Node, NodeId};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeSet;

/// Value range used when drawing thresholds and states.
pub fn feature_range(f: Feature) -> (f64, f64) {
    match f {
        Feature::Temperature => (0.0, 400.0),
        Feature::Pressure => (50.0, 600.0),
        Feature::SgWater => (0.0, 100.0),
        Feature::Power => (0.0, 1000.0),
        _ => (0.0, 2.0),
    }
}

enum Shape {
    Leaf,
    Branch(usize, usize),
}

/// Random tree with between 1 and `max_leaves` leaves. Node ids are a random
/// permutation, so the root is rarely node 0 and children rarely follow
/// their parent.
pub fn random_tree<R: Rng>(rng: &mut R, max_leaves: usize) -> DecisionTree {
    let target = rng.random_range(1..=max_leaves);
    let mut shapes = vec![Shape::Leaf];
    let mut leaves = vec![0usize];
    while leaves.len() < target {
        let pick = rng.random_range(0..leaves.len());
        let at = leaves.swap_remove(pick);
        let (l, r) = (shapes.len(), shapes.len() + 1);
        shapes.push(Shape::Leaf);
        shapes.push(Shape::Leaf);
        shapes[at] = Shape::Branch(l, r);
        leaves.push(l);
        leaves.push(r);
    }
    let n = shapes.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut depth = vec![0u32; n];
    for i in 0..n {
        if let Shape::Branch(l, r) = shapes[i] {
            depth[l] = depth[i] + 1;
            depth[r] = depth[i] + 1;
        }
    }
    let mut nodes: Vec<Option<Node>> = (0..n).map(|_| None).collect();
    for i in 0..n {
        let node = match shapes[i] {
            Shape::Leaf => {
                let mut q = [0.0; ACTION_COUNT];
                for v in q.iter_mut() {
                    // coarse values so that ties happen
                    *v = f64::from(rng.random_range(-4..=4)) / 4.0;
                }
                Node::Leaf(LeafNode::new(q, depth[i]))
            }
            Shape::Branch(l, r) => {
                let feature = Feature::ALL[rng.random_range(0..FEATURE_COUNT)];
                let threshold = if feature.is_continuous() {
                    let (lo, hi) = feature_range(feature);
                    (rng.random_range(lo..hi) * 10.0).round() / 10.0
                } else if rng.random_bool(0.5) {
                    0.5
                } else {
                    1.5
                };
                Node::Branch(BranchNode {
                    feature: feature.index(),
                    threshold,
                    left: perm[l],
                    right: perm[r],
                    depth: depth[i],
                })
            }
        };
        nodes[perm[i]] = Some(node);
    }
    let nodes = nodes.into_iter().map(|n| n.expect("every slot filled")).collect();
    DecisionTree::from_parts(nodes, perm[0]).expect("generated tree is valid")
}

/// Random state; with probability 1/4 a feature sits exactly on one of the
/// tree's thresholds for it.
pub fn random_state<R: Rng>(rng: &mut R, tree: &DecisionTree) -> StateVector {
    let mut s = [0.0; FEATURE_COUNT];
    for f in Feature::ALL {
        let thresholds: Vec<f64> = tree
            .nodes()
            .iter()
            .filter_map(|n| n.as_branch())
            .filter(|b| b.feature == f.index())
            .map(|b| b.threshold)
            .collect();
        s[f.index()] = if !thresholds.is_empty() && rng.random_bool(0.25) {
            thresholds[rng.random_range(0..thresholds.len())]
        } else if f.is_continuous() {
            let (lo, hi) = feature_range(f);
            rng.random_range(lo..hi)
        } else {
            f64::from(rng.random_range(0..3))
        };
    }
    s
}

/// Axis-aligned region of one leaf: `lo < x <= hi` on every feature.
#[derive(Debug, Clone)]
pub struct Region {
    pub leaf: NodeId,
    pub lo: [f64; FEATURE_COUNT],
    pub hi: [f64; FEATURE_COUNT],
}

impl Region {
    pub fn contains(&self, s: &StateVector) -> bool {
        (0..FEATURE_COUNT).all(|f| self.lo[f] < s[f] && s[f] <= self.hi[f])
    }
}

/// Every leaf's region, found by narrowing boxes from the root.
pub fn leaf_regions(tree: &DecisionTree) -> Vec<Region> {
    let mut out = Vec::new();
    let mut stack = vec![Region {
        leaf: tree.root(),
        lo: [f64::NEG_INFINITY; FEATURE_COUNT],
        hi: [f64::INFINITY; FEATURE_COUNT],
    }];
    while let Some(r) = stack.pop() {
        match &tree.nodes()[r.leaf] {
            Node::Leaf(_) => out.push(r),
            Node::Branch(b) => {
                let mut left = r.clone();
                left.leaf = b.left;
                left.hi[b.feature] = left.hi[b.feature].min(b.threshold);
                let mut right = r;
                right.leaf = b.right;
                right.lo[b.feature] = right.lo[b.feature].max(b.threshold);
                stack.push(left);
                stack.push(right);
            }
        }
    }
    out
}

/// The unique leaf whose region holds `s`; panics if the regions do not
/// partition the space at `s`.
pub fn region_oracle(regions: &[Region], s: &StateVector) -> NodeId {
    let hits: Vec<NodeId> = regions.iter().filter(|r| r.contains(s)).map(|r| r.leaf).collect();
    assert_eq!(hits.len(), 1, "state {s:?} is in regions {hits:?}");
    hits[0]
}

fn parent_map(tree: &DecisionTree) -> Vec<Option<NodeId>> {
    let mut p = vec![None; tree.len()];
    for (id, n) in tree.nodes().iter().enumerate() {
        if let Node::Branch(b) = n {
            p[b.left] = Some(id);
            p[b.right] = Some(id);
        }
    }
    p
}

/// Strict ancestors of `node`.
pub fn ancestors(tree: &DecisionTree, node: NodeId) -> BTreeSet<NodeId> {
    let parents = parent_map(tree);
    let mut out = BTreeSet::new();
    let mut cur = node;
    while let Some(p) = parents[cur] {
        out.insert(p);
        cur = p;
    }
    out
}

/// Deepest common ancestor of two distinct leaves, by intersecting their
/// ancestor sets.
pub fn lca_oracle(tree: &DecisionTree, a: NodeId, b: NodeId) -> NodeId {
    let common: Vec<NodeId> = ancestors(tree, a).intersection(&ancestors(tree, b)).copied().collect();
    *common
        .iter()
        .max_by_key(|&&n| ancestors(tree, n).len())
        .expect("distinct leaves share the root")
}

fn q_with(best: Action) -> [f64; ACTION_COUNT] {
    let mut q = [0.0; ACTION_COUNT];
    q[best.index()] = 1.0;
    q
}

/// Seven-branch tree rooted at node 1. Leaf 11 (add large water) sits under
/// node 9 (temperature) under node 7 (water level), whose other child is
/// leaf 2 (skip). The other skip leaf, 0, lies across the root.
pub fn witness_tree() -> DecisionTree {
    let leaf = |a: Action, d| Node::Leaf(LeafNode::new(q_with(a), d));
    let branch = |f: Feature, threshold, left, right, depth| {
        Node::Branch(BranchNode {
            feature: f.index(),
            threshold,
            left,
            right,
            depth,
        })
    };
    let nodes = vec![
        leaf(Action::Skip, 2),
        branch(Feature::Power, 500.0, 7, 4, 0),
        leaf(Action::Skip, 2),
        leaf(Action::AddWaterSmall, 3),
        branch(Feature::Temperature, 300.0, 0, 5, 1),
        branch(Feature::Pressure, 400.0, 3, 6, 2),
        branch(Feature::RegulatoryRods, 0.5, 8, 12, 3),
        branch(Feature::SgWater, 25.0, 9, 2, 1),
        leaf(Action::RegulatoryUp, 4),
        branch(Feature::Temperature, 200.0, 11, 10, 2),
        leaf(Action::AddWaterMedium, 3),
        leaf(Action::AddWaterLarge, 3),
        leaf(Action::AddWaterLarge, 4),
    ];
    DecisionTree::from_parts(nodes, 1).expect("valid")
}

/// A state that reaches leaf 11 of [`witness_tree`].
pub fn witness_fact_state() -> StateVector {
    let mut s = [0.0; FEATURE_COUNT];
    s[Feature::Temperature.index()] = 150.0;
    s[Feature::Pressure.index()] = 200.0;
    s[Feature::SgWater.index()] = 20.0;
    s[Feature::Power.index()] = 100.0;
    s
}

/// Median of a sample (mean of the middle two for even sizes).
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}
