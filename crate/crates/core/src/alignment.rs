//! Alignment of an observed perception graph against a reference graph.
//!
//! Nodes are put in correspondence by a maximum-similarity assignment; pairs
//! below `tau_match` are forbidden. Every node and edge of both graphs then
//! lands in exactly one [`NodeChange`]: matched, modified, removed or added.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{self, WeightMatrix};
use crate::graph::{
    cosine_similarity, semantic_distance, validate_graph, GraphError, PerceptionGraph,
    RelationEdge, Violation,
};

pub const DEFAULT_TAU_MATCH: f64 = 0.5;
pub const DEFAULT_MODIFY_THRESHOLD: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    Threshold { name: &'static str, value: f64 },
    #[error("graph {frame_id} is invalid: {}", .violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidGraph {
        frame_id: String,
        violations: Vec<Violation>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Matched,
    Modified,
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeChange {
    pub kind: ChangeKind,
    pub ref_id: Option<String>,
    pub obs_id: Option<String>,
    pub distance: f64,
    pub weight: f64,
}

impl NodeChange {
    /// The reference id when present, otherwise the observed id.
    pub fn element_id(&self) -> &str {
        self.ref_id
            .as_deref()
            .or(self.obs_id.as_deref())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub frame_id: String,
    pub ref_frame_id: String,
    pub changes: Vec<NodeChange>,
    pub edge_changes: Vec<NodeChange>,
}

impl ChangeSet {
    pub fn all_changes(&self) -> impl Iterator<Item = &NodeChange> {
        self.changes.iter().chain(&self.edge_changes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedPair {
    pub ref_id: String,
    pub obs_id: String,
    pub similarity: f64,
}

/// Partial injective mapping from reference node ids to observed node ids,
/// sorted by reference id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeMatching {
    pub pairs: Vec<MatchedPair>,
}

impl NodeMatching {
    pub fn total_similarity(&self) -> f64 {
        self.pairs.iter().map(|p| p.similarity).sum()
    }

    pub fn as_map(&self) -> BTreeMap<&str, &str> {
        self.pairs
            .iter()
            .map(|p| (p.ref_id.as_str(), p.obs_id.as_str()))
            .collect()
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<(), AlignError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(AlignError::Threshold { name, value })
    }
}

fn check_graph(g: &PerceptionGraph) -> Result<(), AlignError> {
    let violations = validate_graph(g);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(AlignError::InvalidGraph {
            frame_id: g.frame_id.clone(),
            violations,
        })
    }
}

/// Maximum-total-similarity partial matching of reference to observed nodes
/// with every pair at or above `tau_match`.
pub fn match_nodes(
    reference: &PerceptionGraph,
    observed: &PerceptionGraph,
    tau_match: f64,
) -> Result<NodeMatching, AlignError> {
    check_unit_interval("tau_match", tau_match)?;
    check_graph(reference)?;
    check_graph(observed)?;
    if let (Some(a), Some(b)) = (reference.embedding_dim(), observed.embedding_dim()) {
        if a != b {
            return Err(GraphError::DimensionMismatch { left: a, right: b }.into());
        }
    }

    // Sorting by id makes index order equal id order for tie-breaking.
    let mut refs: Vec<_> = reference.nodes.iter().collect();
    refs.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let mut obs: Vec<_> = observed.nodes.iter().collect();
    obs.sort_by(|a, b| a.node_id.cmp(&b.node_id));

    let mut sims = vec![vec![0.0; obs.len()]; refs.len()];
    let mut weights: WeightMatrix = vec![vec![None; obs.len()]; refs.len()];
    for (i, r) in refs.iter().enumerate() {
        for (j, o) in obs.iter().enumerate() {
            let s = cosine_similarity(&r.embedding, &o.embedding)?;
            sims[i][j] = s;
            if s >= tau_match {
                weights[i][j] = Some(s);
            }
        }
    }

    let pairs = assignment::max_weight_matching(&weights)
        .into_iter()
        .map(|(i, j)| MatchedPair {
            ref_id: refs[i].node_id.clone(),
            obs_id: obs[j].node_id.clone(),
            similarity: sims[i][j],
        })
        .collect();
    Ok(NodeMatching { pairs })
}

fn classify(distance: f64, modify_threshold: f64) -> ChangeKind {
    if distance < modify_threshold {
        ChangeKind::Matched
    } else {
        ChangeKind::Modified
    }
}

fn edge_weight(g: &PerceptionGraph, e: &RelationEdge) -> f64 {
    let w = |id: &str| g.node(id).map_or(0.0, |n| n.weight);
    w(&e.src).min(w(&e.dst))
}

/// Nearest candidate by distance; first in order wins ties.
fn nearest<'a, T>(
    candidates: impl Iterator<Item = &'a T>,
    mut dist: impl FnMut(&T) -> Result<f64, GraphError>,
) -> Result<Option<(&'a T, f64)>, GraphError>
where
    T: 'a,
{
    let mut best: Option<(&T, f64)> = None;
    for c in candidates {
        let d = dist(c)?;
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    Ok(best)
}

/// Classifies every node and edge of both graphs.
///
/// Matched pairs are scored by semantic distance. Unmatched reference
/// elements are removed with distance exactly 1.0. Unmatched observed
/// elements are added and scored by their nearest reference element, whose
/// weight they inherit. Edges correspond only through matched endpoints.
pub fn change_set(
    reference: &PerceptionGraph,
    observed: &PerceptionGraph,
    tau_match: f64,
    modify_threshold: f64,
) -> Result<ChangeSet, AlignError> {
    check_unit_interval("modify_threshold", modify_threshold)?;
    let matching = match_nodes(reference, observed, tau_match)?;
    let ref_to_obs: HashMap<&str, &str> = matching
        .pairs
        .iter()
        .map(|p| (p.ref_id.as_str(), p.obs_id.as_str()))
        .collect();
    let obs_matched: HashMap<&str, &str> = matching
        .pairs
        .iter()
        .map(|p| (p.obs_id.as_str(), p.ref_id.as_str()))
        .collect();

    let mut changes = Vec::with_capacity(reference.nodes.len() + observed.nodes.len());
    for r in &reference.nodes {
        let change = match ref_to_obs.get(r.node_id.as_str()) {
            Some(&obs_id) => {
                let o = observed.node(obs_id).expect("matched id exists");
                let d = semantic_distance(&r.embedding, &o.embedding)?;
                NodeChange {
                    kind: classify(d, modify_threshold),
                    ref_id: Some(r.node_id.clone()),
                    obs_id: Some(obs_id.to_string()),
                    distance: d,
                    weight: r.weight,
                }
            }
            None => NodeChange {
                kind: ChangeKind::Removed,
                ref_id: Some(r.node_id.clone()),
                obs_id: None,
                distance: 1.0,
                weight: r.weight,
            },
        };
        changes.push(change);
    }
    for o in &observed.nodes {
        if obs_matched.contains_key(o.node_id.as_str()) {
            continue;
        }
        let near = nearest(reference.nodes.iter(), |r| {
            semantic_distance(&r.embedding, &o.embedding)
        })?;
        let (distance, weight) = near.map_or((1.0, o.weight), |(r, d)| (d, r.weight));
        changes.push(NodeChange {
            kind: ChangeKind::Added,
            ref_id: None,
            obs_id: Some(o.node_id.clone()),
            distance,
            weight,
        });
    }

    let mut obs_edge_used = vec![false; observed.edges.len()];
    let mut edge_changes = Vec::with_capacity(reference.edges.len() + observed.edges.len());
    for re in &reference.edges {
        let weight = edge_weight(reference, re);
        let counterpart = match (
            ref_to_obs.get(re.src.as_str()),
            ref_to_obs.get(re.dst.as_str()),
        ) {
            (Some(&s), Some(&d)) => observed
                .edges
                .iter()
                .enumerate()
                .find(|(k, oe)| !obs_edge_used[*k] && oe.src == s && oe.dst == d),
            _ => None,
        };
        let change = match counterpart {
            Some((k, oe)) => {
                obs_edge_used[k] = true;
                let dist = semantic_distance(&re.embedding, &oe.embedding)?;
                NodeChange {
                    kind: classify(dist, modify_threshold),
                    ref_id: Some(re.edge_id()),
                    obs_id: Some(oe.edge_id()),
                    distance: dist,
                    weight,
                }
            }
            None => NodeChange {
                kind: ChangeKind::Removed,
                ref_id: Some(re.edge_id()),
                obs_id: None,
                distance: 1.0,
                weight,
            },
        };
        edge_changes.push(change);
    }
    for (k, oe) in observed.edges.iter().enumerate() {
        if obs_edge_used[k] {
            continue;
        }
        let near = nearest(reference.edges.iter(), |re| {
            semantic_distance(&re.embedding, &oe.embedding)
        })?;
        let (distance, weight) = near.map_or_else(
            || (1.0, edge_weight(observed, oe)),
            |(re, d)| (d, edge_weight(reference, re)),
        );
        edge_changes.push(NodeChange {
            kind: ChangeKind::Added,
            ref_id: None,
            obs_id: Some(oe.edge_id()),
            distance,
            weight,
        });
    }

    Ok(ChangeSet {
        frame_id: observed.frame_id.clone(),
        ref_frame_id: reference.frame_id.clone(),
        changes,
        edge_changes,
    })
}
