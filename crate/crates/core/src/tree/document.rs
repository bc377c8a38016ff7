//! JSON tree documents.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "action_order": "security_up,...,skip",
//!   "feature_order": "temperature,...,regulatory_rods",
//!   "root": 0,
//!   "nodes": [
//!     {"id": 0, "depth": 0, "kind": "branch", "feature": 2, "threshold": 25.0, "left": 1, "right": 2},
//!     {"id": 1, "depth": 1, "kind": "leaf", "q_values": [...12], "visit_count": 4, "action_visits": [...12]}
//!   ]
//! }
//! ```
//!
//! Loading fails if either order fingerprint differs from this build.

use super::{BranchNode, DecisionTree, LeafNode, Node, NodeId, TreeError};
use crate::plant::{action_order_fingerprint, feature_order_fingerprint, ACTION_COUNT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TREE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub schema_version: u32,
    pub action_order: String,
    pub feature_order: String,
    pub root: NodeId,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub depth: u32,
    #[serde(flatten)]
    pub body: NodeBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeBody {
    Branch {
        feature: usize,
        threshold: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        left: Option<NodeId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        right: Option<NodeId>,
    },
    Leaf {
        q_values: Vec<f64>,
        #[serde(default)]
        visit_count: u64,
        #[serde(default)]
        action_visits: Option<Vec<u64>>,
    },
}

impl TreeDocument {
    pub fn from_tree(tree: &DecisionTree) -> Self {
        let nodes = tree
            .nodes()
            .iter()
            .enumerate()
            .map(|(id, node)| NodeRecord {
                id,
                depth: node.depth(),
                body: match node {
                    Node::Branch(b) => NodeBody::Branch {
                        feature: b.feature,
                        threshold: b.threshold,
                        left: Some(b.left),
                        right: Some(b.right),
                    },
                    Node::Leaf(l) => NodeBody::Leaf {
                        q_values: l.q_values.to_vec(),
                        visit_count: l.visit_count,
                        action_visits: Some(l.action_visits.to_vec()),
                    },
                },
            })
            .collect();
        TreeDocument {
            schema_version: TREE_SCHEMA_VERSION,
            action_order: action_order_fingerprint(),
            feature_order: feature_order_fingerprint(),
            root: tree.root(),
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("tree document serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        serde_json::from_str(text).map_err(|e| TreeError::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical JSON rendering.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn into_tree(self) -> Result<DecisionTree, TreeError> {
        if self.schema_version != TREE_SCHEMA_VERSION {
            return Err(TreeError::SchemaVersion {
                found: self.schema_version,
                expected: TREE_SCHEMA_VERSION,
            });
        }
        if self.action_order != action_order_fingerprint() {
            return Err(TreeError::OrderMismatch {
                what: "action",
                found: self.action_order,
            });
        }
        if self.feature_order != feature_order_fingerprint() {
            return Err(TreeError::OrderMismatch {
                what: "feature",
                found: self.feature_order,
            });
        }
        let len = self.nodes.len();
        let mut slots: Vec<Option<Node>> = vec![None; len];
        for record in self.nodes {
            let id = record.id;
            if id >= len {
                return Err(TreeError::IdOutOfRange { id, len });
            }
            if slots[id].is_some() {
                return Err(TreeError::DuplicateId(id));
            }
            let node = match record.body {
                NodeBody::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => Node::Branch(BranchNode {
                    feature,
                    threshold,
                    left: left.ok_or(TreeError::MissingChild { node: id, side: "left" })?,
                    right: right.ok_or(TreeError::MissingChild { node: id, side: "right" })?,
                    depth: record.depth,
                }),
                NodeBody::Leaf {
                    q_values,
                    visit_count,
                    action_visits,
                } => {
                    let q_values: [f64; ACTION_COUNT] = q_values
                        .as_slice()
                        .try_into()
                        .map_err(|_| TreeError::BadQLength { leaf: id, len: q_values.len() })?;
                    let action_visits = match action_visits {
                        Some(v) => v
                            .as_slice()
                            .try_into()
                            .map_err(|_| TreeError::BadVisitLength { leaf: id, len: v.len() })?,
                        None => [0; ACTION_COUNT],
                    };
                    Node::Leaf(LeafNode {
                        q_values,
                        visit_count,
                        action_visits,
                        depth: record.depth,
                    })
                }
            };
            slots[id] = Some(node);
        }
        let nodes = slots.into_iter().map(|n| n.expect("ids cover 0..len")).collect();
        DecisionTree::from_parts(nodes, self.root)
    }
}
