//! Perception graph domain types and the embedding-space distance primitive.
//!
//! A [`PerceptionGraph`] is one frame's semantic snapshot: weighted scene
//! objects ([`SemanticNode`]) and the relations between them
//! ([`RelationEdge`]). Every description carries a unit-length
//! [`Embedding`]; meaning lives in its direction only.

use std::collections::HashSet;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Tolerance on the L2 norm of a stored embedding.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Similarities at or above `1 - SAME_MEANING_EPS` are treated as identical meaning.
pub const SAME_MEANING_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding must have at least one component")]
    EmptyEmbedding,
    #[error("embedding has a zero or non-finite norm")]
    ZeroNorm,
    #[error("embedding contains a non-finite component")]
    NonFinite,
    #[error("embedding norm {norm} is not within {UNIT_NORM_TOLERANCE} of 1")]
    NotUnit { norm: f64 },
}

/// A unit-length vector whose direction encodes a description's meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes a raw encoder output. Zero and non-finite vectors are rejected.
    pub fn from_raw(values: Vec<f64>) -> Result<Self, GraphError> {
        if values.is_empty() {
            return Err(GraphError::EmptyEmbedding);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite);
        }
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Err(GraphError::ZeroNorm);
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Accepts an already-normalized vector as-is (bit-exact), failing if it is not unit length.
    pub fn from_unit(values: Vec<f64>) -> Result<Self, GraphError> {
        if values.is_empty() {
            return Err(GraphError::EmptyEmbedding);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(GraphError::NotUnit { norm });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticNode {
    pub node_id: String,
    pub description: String,
    pub embedding: Embedding,
    /// Contextual importance in `[0, 1]`.
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationEdge {
    pub src: String,
    pub dst: String,
    pub description: String,
    pub embedding: Embedding,
}

impl RelationEdge {
    /// Identifier used for edges in change sets and evidence, e.g. `drone->field`.
    pub fn edge_id(&self) -> String {
        format!("{}->{}", self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerceptionGraph {
    pub frame_id: String,
    /// Seconds, non-negative.
    pub timestamp: f64,
    pub nodes: Vec<SemanticNode>,
    pub edges: Vec<RelationEdge>,
}

impl PerceptionGraph {
    pub fn node(&self, node_id: &str) -> Option<&SemanticNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    /// Dimension of the first embedding found, if any.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.nodes
            .iter()
            .map(|n| n.embedding.dim())
            .chain(self.edges.iter().map(|e| e.embedding.dim()))
            .next()
    }
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64, GraphError> {
    if a.dim() != b.dim() {
        return Err(GraphError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Distance for a given cosine similarity: `sqrt(1 - clamp(sim, 0, 1))`.
///
/// Negative similarity is clamped so the scale tops out at exactly 1.0, the
/// value reserved for a missing node.
pub fn distance_from_similarity(sim: f64) -> f64 {
    if sim >= 1.0 - SAME_MEANING_EPS {
        return 0.0;
    }
    (1.0 - sim.clamp(0.0, 1.0)).sqrt()
}

pub fn semantic_distance(a: &Embedding, b: &Embedding) -> Result<f64, GraphError> {
    cosine_similarity(a, b).map(distance_from_similarity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    DuplicateNodeId,
    EmptyDescription,
    WeightOutOfRange,
    SelfLoop,
    DanglingEndpoint,
    NegativeTimestamp,
    MixedDimension,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DuplicateNodeId => "duplicate node id",
            Rule::EmptyDescription => "empty description",
            Rule::WeightOutOfRange => "weight outside [0, 1]",
            Rule::SelfLoop => "edge source equals destination",
            Rule::DanglingEndpoint => "edge endpoint does not resolve",
            Rule::NegativeTimestamp => "negative timestamp",
            Rule::MixedDimension => "embedding dimension differs within graph",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Offending element: a node id, an edge id, or the frame id.
    pub element: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.rule)
    }
}

/// Checks every structural invariant of a graph. An empty result means the graph is valid.
pub fn validate_graph(g: &PerceptionGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |element: &str, rule| {
        out.push(Violation {
            element: element.to_string(),
            rule,
        })
    };

    if g.timestamp.is_nan() || g.timestamp < 0.0 {
        push(&g.frame_id, Rule::NegativeTimestamp);
    }

    let dim = g.embedding_dim();
    let mut seen = HashSet::new();
    for node in &g.nodes {
        if !seen.insert(node.node_id.as_str()) {
            push(&node.node_id, Rule::DuplicateNodeId);
        }
        if node.description.trim().is_empty() {
            push(&node.node_id, Rule::EmptyDescription);
        }
        if !(0.0..=1.0).contains(&node.weight) {
            push(&node.node_id, Rule::WeightOutOfRange);
        }
        if dim.is_some_and(|d| d != node.embedding.dim()) {
            push(&node.node_id, Rule::MixedDimension);
        }
    }

    for edge in &g.edges {
        let id = edge.edge_id();
        if edge.src == edge.dst {
            push(&id, Rule::SelfLoop);
        }
        for endpoint in [&edge.src, &edge.dst] {
            if !seen.contains(endpoint.as_str()) {
                push(endpoint, Rule::DanglingEndpoint);
            }
        }
        if dim.is_some_and(|d| d != edge.embedding.dim()) {
            push(&id, Rule::MixedDimension);
        }
    }
    out
}
