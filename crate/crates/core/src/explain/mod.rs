//! Answering what- and why-questions from the decision tree.
//!
//! A what-question is answered by descending the tree. A why-question picks
//! one split condition on the way:
//!
//! * classical selection takes the shallowest branch on the descent path that
//!   has not been used yet in this session (falling back to the shallowest
//!   one once every path node was used);
//! * contrastive selection takes the deepest branch that separates the
//!   suggested action's leaf (the fact) from the leaf of the action the user
//!   is expected to take (the foil).

mod render;

pub use render::{format_threshold, render, word_count, FeaturePhrases, LevelNames, Templates};

use crate::plant::{Action, Feature, StateVector};
use crate::tree::{DecisionTree, Descent, Direction, LeafNode, Node, NodeId, TreeError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("no explanation available: the descent path is empty")]
    EmptyPath,
    #[error("node {0} is not a branch")]
    NotABranch(NodeId),
    #[error("node {node} is not on the path to leaf {leaf}")]
    NotOnPath { node: NodeId, leaf: NodeId },
    #[error("fact and foil are the same leaf ({0})")]
    FactEqualsFoil(NodeId),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Classical,
    Contrastive,
    /// Contrastive mode without a usable foil; the node came from classical
    /// selection.
    ContrastiveFallback,
}

/// Which selection a session uses for why-questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Classical,
    Contrastive,
}

/// A single split condition offered as the reason for a suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub node_id: NodeId,
    pub feature_index: usize,
    pub direction: Direction,
    pub threshold: f64,
    pub strategy: Strategy,
    pub text: String,
    pub word_count: usize,
}

impl Explanation {
    /// Builds the explanation for branch `node`, on the side containing
    /// `fact_leaf`.
    pub fn for_node(
        tree: &DecisionTree,
        node: NodeId,
        fact_leaf: NodeId,
        strategy: Strategy,
        templates: &Templates,
    ) -> Result<Explanation, ExplainError> {
        let branch = tree
            .node(node)?
            .as_branch()
            .ok_or(ExplainError::NotABranch(node))?
            .clone();
        let path = tree.path_to(fact_leaf)?;
        let step = path
            .iter()
            .find(|s| s.node == node)
            .ok_or(ExplainError::NotOnPath { node, leaf: fact_leaf })?;
        let feature = Feature::from_index(branch.feature).ok_or(TreeError::BadFeature {
            node,
            feature: branch.feature,
        })?;
        let text = render(feature, step.direction, branch.threshold, templates);
        Ok(Explanation {
            node_id: node,
            feature_index: branch.feature,
            direction: step.direction,
            threshold: branch.threshold,
            strategy,
            word_count: word_count(&text),
            text,
        })
    }

    pub fn feature(&self) -> Option<Feature> {
        Feature::from_index(self.feature_index)
    }
}

/// Branch nodes already used for classical explanations in this session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTracker {
    used: BTreeSet<NodeId>,
}

impl UsageTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.used.contains(&node)
    }

    pub fn mark(&mut self, node: NodeId) {
        self.used.insert(node);
    }

    pub fn len(&self) -> usize {
        self.used.len()
    }

    pub fn is_empty(&self) -> bool {
        self.used.is_empty()
    }

    pub fn clear(&mut self) {
        self.used.clear();
    }
}

/// Suggested action for a state together with the descent that produced it.
pub fn answer_what(tree: &DecisionTree, state: &StateVector) -> Result<(Action, Descent), TreeError> {
    let descent = tree.descend(state)?;
    let action = tree.leaf(descent.leaf)?.best_action();
    Ok((action, descent))
}

/// Shallowest path node not yet in the tracker, which is then marked. When
/// every path node has been used the shallowest one is returned and the
/// tracker is left as is.
pub fn select_classical(descent: &Descent, tracker: &mut UsageTracker) -> Result<NodeId, ExplainError> {
    let first = descent.path.first().ok_or(ExplainError::EmptyPath)?;
    match descent.path.iter().find(|s| !tracker.contains(s.node)) {
        Some(step) => {
            tracker.mark(step.node);
            Ok(step.node)
        }
        None => Ok(first.node),
    }
}

/// Edge distance from `from` to every node of the tree.
fn distances(tree: &DecisionTree, from: NodeId) -> Vec<Option<usize>> {
    let parents = tree.parents();
    let mut dist = vec![None; tree.len()];
    let mut queue = VecDeque::new();
    dist[from] = Some(0);
    queue.push_back(from);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur].expect("queued nodes have a distance");
        let mut neighbours: Vec<NodeId> = parents[cur].into_iter().collect();
        if let Node::Branch(b) = &tree.nodes()[cur] {
            neighbours.push(b.left);
            neighbours.push(b.right);
        }
        for n in neighbours {
            if dist[n].is_none() {
                dist[n] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Leaf standing for the user's expected action. Among leaves whose greedy
/// action is `pre_selected`, the one nearest to the fact leaf in tree
/// distance. When no leaf selects that action, the leaf where it comes
/// closest to being selected (smallest gap between the leaf's best Q-value
/// and its own), nearest first. Remaining ties go to the lowest id. `None`
/// without a pre-selection. May return the fact leaf itself.
pub fn predict_foil(tree: &DecisionTree, fact_leaf: NodeId, pre_selected: Option<Action>) -> Option<NodeId> {
    let action = pre_selected?;
    tree.node(fact_leaf).ok()?.as_leaf()?;
    let dist = distances(tree, fact_leaf);
    let leaves: Vec<(NodeId, &LeafNode, usize)> = tree
        .leaf_ids()
        .into_iter()
        .filter_map(|id| Some((id, tree.leaf(id).ok()?, dist[id]?)))
        .collect();
    let exact = leaves
        .iter()
        .filter(|(_, leaf, _)| leaf.best_action() == action)
        .map(|&(id, _, d)| (d, id))
        .min();
    if let Some((_, id)) = exact {
        return Some(id);
    }
    let gap = |leaf: &LeafNode| {
        let best = leaf.q_values[leaf.best_action().index()];
        best - leaf.q_values[action.index()]
    };
    leaves
        .iter()
        .min_by(|a, b| gap(a.1).total_cmp(&gap(b.1)).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))
        .map(|&(id, _, _)| id)
}

/// Deepest branch whose two subtrees separate `fact_leaf` from `foil_leaf`.
pub fn select_contrastive(tree: &DecisionTree, fact_leaf: NodeId, foil_leaf: NodeId) -> Result<NodeId, ExplainError> {
    if fact_leaf == foil_leaf {
        return Err(ExplainError::FactEqualsFoil(fact_leaf));
    }
    tree.leaf(fact_leaf)?;
    tree.leaf(foil_leaf)?;
    let fact_path = tree.path_to(fact_leaf)?;
    let foil_path = tree.path_to(foil_leaf)?;
    fact_path
        .iter()
        .zip(&foil_path)
        .take_while(|(a, b)| a.node == b.node)
        .last()
        .map(|(a, _)| a.node)
        .ok_or(ExplainError::EmptyPath)
}

/// Answers a why-question for the descent of the current step.
///
/// Contrastive mode uses the user's pre-selected action as the foil. It falls
/// back to classical selection (tagged [`Strategy::ContrastiveFallback`])
/// when there is no pre-selection or the foil is the fact leaf itself. [`ExplainError::EmptyPath`] means no reason is available.
pub fn answer_why(
    tree: &DecisionTree,
    descent: &Descent,
    mode: SelectionMode,
    pre_selected: Option<Action>,
    tracker: &mut UsageTracker,
    templates: &Templates,
) -> Result<Explanation, ExplainError> {
    let fact = descent.leaf;
    let (node, strategy) = match mode {
        SelectionMode::Classical => (select_classical(descent, tracker)?, Strategy::Classical),
        SelectionMode::Contrastive => match predict_foil(tree, fact, pre_selected) {
            Some(foil) if foil != fact => (select_contrastive(tree, fact, foil)?, Strategy::Contrastive),
            _ => (
                select_classical(descent, tracker)?,
                Strategy::ContrastiveFallback,
            ),
        },
    };
    Explanation::for_node(tree, node, fact, strategy, templates)
}
