//! Binary decision-tree policy.
//!
//! Nodes live in an arena and are addressed by [`NodeId`]. Ids never change
//! once assigned: splitting a leaf turns it into a branch in place and
//! appends the two children. Branches send a state left when
//! `state[feature] <= threshold` and right otherwise. Leaves carry one
//! Q-value per [`Action`].

mod document;

pub use document::{TreeDocument, TREE_SCHEMA_VERSION};

use crate::plant::{Action, StateVector, ACTION_COUNT, FEATURE_COUNT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Expected Q-value per action, in [`Action::ALL`] order.
pub type QValues = [f64; ACTION_COUNT];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("branch node {node} points to missing child {child}")]
    DanglingChild { node: NodeId, child: NodeId },
    #[error("branch node {node} is missing its {side} child")]
    MissingChild { node: NodeId, side: &'static str },
    #[error("node {0} is reached more than once from the root")]
    SharedNode(NodeId),
    #[error("node {0} is unreachable from the root")]
    Unreachable(NodeId),
    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),
    #[error("branch node {node} splits on feature {feature}, expected 0..{}", FEATURE_COUNT)]
    BadFeature { node: NodeId, feature: usize },
    #[error("branch node {node} has a non-finite threshold")]
    BadThreshold { node: NodeId },
    #[error("node {node} has depth {found}, expected {expected}")]
    DepthMismatch {
        node: NodeId,
        expected: u32,
        found: u32,
    },
    #[error("leaf {leaf} has {len} q-values, expected {}", ACTION_COUNT)]
    BadQLength { leaf: NodeId, len: usize },
    #[error("leaf {leaf} has {len} action visit counts, expected {}", ACTION_COUNT)]
    BadVisitLength { leaf: NodeId, len: usize },
    #[error("duplicate node id {0}")]
    DuplicateId(NodeId),
    #[error("node ids must be 0..{len}; found {id}")]
    IdOutOfRange { id: NodeId, len: usize },
    #[error("tree document schema_version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("tree document {what} order does not match this build: {found}")]
    OrderMismatch { what: &'static str, found: String },
    #[error("malformed tree document: {0}")]
    Parse(String),
}

/// Side of a split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `value <= threshold`, the left subtree.
    LessEq,
    /// `value > threshold`, the right subtree.
    Greater,
}

impl Direction {
    pub fn of(value: f64, threshold: f64) -> Direction {
        if value <= threshold {
            Direction::LessEq
        } else {
            Direction::Greater
        }
    }

    pub fn holds(self, value: f64, threshold: f64) -> bool {
        Direction::of(value, threshold) == self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNode {
    pub feature: usize,
    pub threshold: f64,
    pub left: NodeId,
    pub right: NodeId,
    pub depth: u32,
}

impl BranchNode {
    pub fn child(&self, direction: Direction) -> NodeId {
        match direction {
            Direction::LessEq => self.left,
            Direction::Greater => self.right,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafNode {
    pub q_values: QValues,
    pub visit_count: u64,
    pub action_visits: [u64; ACTION_COUNT],
    pub depth: u32,
}

impl LeafNode {
    pub fn new(q_values: QValues, depth: u32) -> Self {
        LeafNode {
            q_values,
            visit_count: 0,
            action_visits: [0; ACTION_COUNT],
            depth,
        }
    }

    pub fn best_action(&self) -> Action {
        argmax_action(&self.q_values)
    }
}

/// Greedy action; ties go to the lowest action index.
pub fn argmax_action(q: &QValues) -> Action {
    let mut best = 0;
    for i in 1..ACTION_COUNT {
        if q[i] > q[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Branch(BranchNode),
    Leaf(LeafNode),
}

impl Node {
    pub fn depth(&self) -> u32 {
        match self {
            Node::Branch(b) => b.depth,
            Node::Leaf(l) => l.depth,
        }
    }

    pub fn as_branch(&self) -> Option<&BranchNode> {
        match self {
            Node::Branch(b) => Some(b),
            Node::Leaf(_) => None,
        }
    }

    pub fn as_leaf(&self) -> Option<&LeafNode> {
        match self {
            Node::Leaf(l) => Some(l),
            Node::Branch(_) => None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf(_))
    }
}

/// One branch visited during descent and the side taken there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: NodeId,
    pub direction: Direction,
}

/// Leaf reached for a state plus the branches visited, root first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descent {
    pub leaf: NodeId,
    pub path: Vec<PathStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: NodeId,
}

impl DecisionTree {
    /// A tree made of one leaf with the given Q-values.
    pub fn single_leaf(q_values: QValues) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf(LeafNode::new(q_values, 0))],
            root: 0,
        }
    }

    /// Builds a tree from an arena, checking every structural invariant.
    pub fn from_parts(nodes: Vec<Node>, root: NodeId) -> Result<Self, TreeError> {
        let tree = DecisionTree { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    fn validate(&self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(TreeError::UnknownNode(self.root));
        }
        let mut seen = vec![false; n];
        let mut stack = vec![(self.root, 0u32)];
        while let Some((id, depth)) = stack.pop() {
            if seen[id] {
                return Err(TreeError::SharedNode(id));
            }
            seen[id] = true;
            let node = &self.nodes[id];
            if node.depth() != depth {
                return Err(TreeError::DepthMismatch {
                    node: id,
                    expected: depth,
                    found: node.depth(),
                });
            }
            if let Node::Branch(b) = node {
                if b.feature >= FEATURE_COUNT {
                    return Err(TreeError::BadFeature {
                        node: id,
                        feature: b.feature,
                    });
                }
                if !b.threshold.is_finite() {
                    return Err(TreeError::BadThreshold { node: id });
                }
                for child in [b.left, b.right] {
                    if child >= n {
                        return Err(TreeError::DanglingChild { node: id, child });
                    }
                    stack.push((child, depth + 1));
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(TreeError::Unreachable(id));
        }
        Ok(())
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn leaf(&self, id: NodeId) -> Result<&LeafNode, TreeError> {
        self.node(id)?.as_leaf().ok_or(TreeError::NotALeaf(id))
    }

    pub(crate) fn leaf_mut(&mut self, id: NodeId) -> Result<&mut LeafNode, TreeError> {
        match self.nodes.get_mut(id) {
            Some(Node::Leaf(l)) => Ok(l),
            Some(Node::Branch(_)) => Err(TreeError::NotALeaf(id)),
            None => Err(TreeError::UnknownNode(id)),
        }
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn branch_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf()).collect()
    }

    /// Parent of every node; `None` for the root.
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parents = vec![None; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Branch(b) = node {
                parents[b.left] = Some(id);
                parents[b.right] = Some(id);
            }
        }
        parents
    }

    /// Branches from the root down to `node` (exclusive), with the side
    /// taken at each.
    pub fn path_to(&self, node: NodeId) -> Result<Vec<PathStep>, TreeError> {
        self.node(node)?;
        let parents = self.parents();
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(p) = parents[cur] {
            let b = self.nodes[p].as_branch().expect("parents are branches");
            let direction = if b.left == cur {
                Direction::LessEq
            } else {
                Direction::Greater
            };
            path.push(PathStep { node: p, direction });
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Follows the split rules from the root to a leaf.
    pub fn descend(&self, state: &StateVector) -> Result<Descent, TreeError> {
        let mut path = Vec::new();
        let mut cur = self.root;
        loop {
            match self.node(cur)? {
                Node::Leaf(_) => return Ok(Descent { leaf: cur, path }),
                Node::Branch(b) => {
                    let value = *state
                        .get(b.feature)
                        .ok_or(TreeError::BadFeature { node: cur, feature: b.feature })?;
                    let direction = Direction::of(value, b.threshold);
                    path.push(PathStep { node: cur, direction });
                    let next = b.child(direction);
                    if next >= self.nodes.len() {
                        return Err(TreeError::DanglingChild { node: cur, child: next });
                    }
                    if path.len() > self.nodes.len() {
                        return Err(TreeError::SharedNode(next));
                    }
                    cur = next;
                }
            }
        }
    }

    /// Leaf id reached for `state`.
    pub fn leaf_for(&self, state: &StateVector) -> Result<NodeId, TreeError> {
        self.descend(state).map(|d| d.leaf)
    }

    pub fn best_action(&self, state: &StateVector) -> Result<Action, TreeError> {
        let leaf = self.leaf_for(state)?;
        Ok(self.leaf(leaf)?.best_action())
    }

    /// Replaces a leaf with a branch. The branch keeps the leaf's id; the two
    /// new leaves get the next free ids (left first).
    pub fn split_leaf(
        &mut self,
        leaf: NodeId,
        feature: usize,
        threshold: f64,
        left_q: QValues,
        right_q: QValues,
    ) -> Result<(NodeId, NodeId), TreeError> {
        let depth = self.leaf(leaf)?.depth;
        if feature >= FEATURE_COUNT {
            return Err(TreeError::BadFeature { node: leaf, feature });
        }
        if !threshold.is_finite() {
            return Err(TreeError::BadThreshold { node: leaf });
        }
        let left = self.nodes.len();
        let right = left + 1;
        self.nodes.push(Node::Leaf(LeafNode::new(left_q, depth + 1)));
        self.nodes.push(Node::Leaf(LeafNode::new(right_q, depth + 1)));
        self.nodes[leaf] = Node::Branch(BranchNode {
            feature,
            threshold,
            left,
            right,
            depth,
        });
        Ok((left, right))
    }

    pub fn max_depth(&self) -> u32 {
        self.nodes.iter().map(Node::depth).max().unwrap_or(0)
    }

    pub fn to_document(&self) -> TreeDocument {
        TreeDocument::from_tree(self)
    }

    pub fn to_json(&self) -> String {
        self.to_document().to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        TreeDocument::from_json(text)?.into_tree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q_with(best: usize) -> QValues {
        let mut q = [0.0; ACTION_COUNT];
        q[best] = 1.0;
        q
    }

    #[test]
    fn single_leaf_has_empty_path() {
        let t = DecisionTree::single_leaf(q_with(3));
        let d = t.descend(&[0.0; FEATURE_COUNT]).unwrap();
        assert_eq!(d.leaf, 0);
        assert!(d.path.is_empty());
        assert_eq!(t.best_action(&[0.0; FEATURE_COUNT]).unwrap(), Action::FuelDown);
    }

    #[test]
    fn boundary_goes_left() {
        let mut t = DecisionTree::single_leaf([0.0; ACTION_COUNT]);
        let (l, r) = t.split_leaf(0, 2, 25.0, q_with(10), q_with(11)).unwrap();
        let mut s = [0.0; FEATURE_COUNT];
        s[2] = 25.0;
        let d = t.descend(&s).unwrap();
        assert_eq!(d.leaf, l);
        assert_eq!(d.path, vec![PathStep { node: 0, direction: Direction::LessEq }]);
        s[2] = 25.000001;
        assert_eq!(t.leaf_for(&s).unwrap(), r);
    }

    #[test]
    fn ties_pick_lowest_index() {
        assert_eq!(argmax_action(&[0.5; ACTION_COUNT]), Action::SecurityUp);
        assert_eq!(argmax_action(&q_with(11)), Action::Skip);
        let mut q = [0.0; ACTION_COUNT];
        q[4] = 2.0;
        q[9] = 2.0;
        assert_eq!(argmax_action(&q), Action::SustainUp);
    }

    #[test]
    fn split_keeps_ids_and_depths() {
        let mut t = DecisionTree::single_leaf([0.0; ACTION_COUNT]);
        let (l, r) = t.split_leaf(0, 0, 100.0, q_with(0), q_with(1)).unwrap();
        let (ll, lr) = t.split_leaf(l, 3, 500.0, q_with(2), q_with(3)).unwrap();
        assert_eq!((l, r, ll, lr), (1, 2, 3, 4));
        assert_eq!(t.node(ll).unwrap().depth(), 2);
        assert_eq!(t.max_depth(), 2);
        assert_eq!(t.leaf_ids(), vec![2, 3, 4]);
        assert_eq!(t.branch_ids(), vec![0, 1]);
        assert_eq!(
            t.path_to(lr).unwrap(),
            vec![
                PathStep { node: 0, direction: Direction::LessEq },
                PathStep { node: 1, direction: Direction::Greater }
            ]
        );
        assert!(matches!(t.split_leaf(0, 1, 1.0, q_with(0), q_with(0)), Err(TreeError::NotALeaf(0))));
    }

    #[test]
    fn rejects_malformed_arenas() {
        let leaf = |d| Node::Leaf(LeafNode::new([0.0; ACTION_COUNT], d));
        let branch = |l, r| {
            Node::Branch(BranchNode { feature: 0, threshold: 1.0, left: l, right: r, depth: 0 })
        };
        assert_eq!(
            DecisionTree::from_parts(vec![branch(1, 5), leaf(1)], 0),
            Err(TreeError::DanglingChild { node: 0, child: 5 })
        );
        assert_eq!(
            DecisionTree::from_parts(vec![branch(1, 1), leaf(1)], 0),
            Err(TreeError::SharedNode(1))
        );
        assert_eq!(
            DecisionTree::from_parts(vec![leaf(0), leaf(0)], 0),
            Err(TreeError::Unreachable(1))
        );
        assert!(matches!(
            DecisionTree::from_parts(vec![branch(1, 2), leaf(1), leaf(2)], 0),
            Err(TreeError::DepthMismatch { node: 2, .. })
        ));
    }
}
