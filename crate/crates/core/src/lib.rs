//! Detection of cognitive attacks on augmented-reality scenes via perception graphs.
//!
//! Per-frame scene descriptions are encoded into [`graph::PerceptionGraph`]s,
//! aligned against trusted reference graphs ([`alignment`]), collapsed into a
//! frame distortion score and judged against a calibrated benign baseline
//! ([`scoring`]). [`scenario`] generates deterministic benign sequences and
//! attack injections; [`store`] owns every file format.

pub mod alignment;
pub mod assignment;
pub mod embedding;
pub mod graph;
pub mod scenario;
pub mod scoring;
pub mod store;

pub use alignment::{change_set, match_nodes, ChangeKind, ChangeSet, NodeChange, NodeMatching};
pub use embedding::{EmbeddingProvider, ProviderId, ProviderKind, ProviderSpec};
pub use graph::{
    cosine_similarity, semantic_distance, validate_graph, Embedding, PerceptionGraph, RelationEdge,
    SemanticNode,
};
pub use scenario::{AttackKind, AttackSpec, ScenarioConfig};
pub use scoring::{
    calibrate, detect, frame_score, z_score, BaselineStats, DetectionParams, DetectionReport,
    Verdict,
};
pub use store::ReferenceStore;
