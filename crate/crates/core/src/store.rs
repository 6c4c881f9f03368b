//! File formats: scene descriptions, reference stores and detection history.
//!
//! Every document is JSON with `"version": 1`; history is JSON lines, one
//! [`DetectionReport`] per line. Floats are written as shortest round-trip
//! decimals, so a load/save cycle is byte-identical.

use std::collections::HashSet;
use std::fs::{self, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingProvider, ProviderId};
use crate::graph::{
    validate_graph, Embedding, GraphError, PerceptionGraph, RelationEdge, SemanticNode,
};
use crate::scoring::{BaselineStats, DetectionParams, DetectionReport};

pub const FORMAT_VERSION: u64 = 1;
pub const DEFAULT_WEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Syntax(String),
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("missing or non-integer \"version\" field")]
    MissingVersion,
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("frame {frame_id}, element {element}: {reason}")]
    Scene {
        frame_id: String,
        element: String,
        reason: String,
    },
    #[error("frame {frame_id}, element {element}: {source}")]
    Embedding {
        frame_id: String,
        element: String,
        #[source]
        source: GraphError,
    },
    #[error("store invariant violated: {0}")]
    Invariant(String),
    #[error("provider mismatch: store uses {store}, got {other}")]
    ProviderMismatch { store: String, other: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a versioned JSON document, reporting schema errors with their JSON path.
fn parse_versioned<T: serde::de::DeserializeOwned>(json: &str) -> Result<T, StoreError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| StoreError::Syntax(e.to_string()))?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(StoreError::MissingVersion)?;
    if version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    serde_path_to_error::deserialize(value).map_err(|e| StoreError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

// ---------------------------------------------------------------------------
// Scene-description files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRelation {
    pub src: String,
    pub dst: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFrame {
    pub frame_id: String,
    pub timestamp: f64,
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub relations: Vec<SceneRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u64,
    pub frames: Vec<SceneFrame>,
}

fn scene_err(frame: &SceneFrame, element: &str, reason: impl Into<String>) -> StoreError {
    StoreError::Scene {
        frame_id: frame.frame_id.clone(),
        element: element.to_string(),
        reason: reason.into(),
    }
}

fn validate_scene_frame(frame: &SceneFrame) -> Result<(), StoreError> {
    if frame.frame_id.is_empty() {
        return Err(scene_err(frame, "frame_id", "frame id is empty"));
    }
    if !frame.timestamp.is_finite() || frame.timestamp < 0.0 {
        return Err(scene_err(
            frame,
            "timestamp",
            "timestamp must be finite and non-negative",
        ));
    }
    let mut ids = HashSet::new();
    for obj in &frame.objects {
        if !ids.insert(obj.id.as_str()) {
            return Err(scene_err(frame, &obj.id, "duplicate object id"));
        }
        if obj.description.trim().is_empty() {
            return Err(scene_err(frame, &obj.id, "empty description"));
        }
        if let Some(w) = obj.weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(scene_err(
                    frame,
                    &obj.id,
                    format!("weight {w} outside [0, 1]"),
                ));
            }
        }
        if let Some(p) = obj.position {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(scene_err(frame, &obj.id, "position must be finite"));
            }
        }
    }
    for rel in &frame.relations {
        let id = format!("{}->{}", rel.src, rel.dst);
        if rel.src == rel.dst {
            return Err(scene_err(frame, &id, "relation source equals destination"));
        }
        for endpoint in [&rel.src, &rel.dst] {
            if !ids.contains(endpoint.as_str()) {
                return Err(scene_err(
                    frame,
                    endpoint,
                    format!("relation {id} references unknown object"),
                ));
            }
        }
        if rel.description.trim().is_empty() {
            return Err(scene_err(frame, &id, "empty description"));
        }
    }
    Ok(())
}

/// Parses and validates a scene-description document without encoding it.
pub fn parse_scene_str(json: &str) -> Result<Vec<SceneFrame>, StoreError> {
    let file: SceneFile = parse_versioned(json)?;
    for frame in &file.frames {
        validate_scene_frame(frame)?;
    }
    Ok(file.frames)
}

/// Encodes every description of the frames with one batch call.
pub fn encode_scene(
    frames: &[SceneFrame],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PerceptionGraph>, StoreError> {
    let texts: Vec<&str> = frames
        .iter()
        .flat_map(|f| {
            f.objects
                .iter()
                .map(|o| o.description.as_str())
                .chain(f.relations.iter().map(|r| r.description.as_str()))
        })
        .collect();
    let mut embeddings = provider.encode_batch(&texts)?.into_iter();
    let mut next = || embeddings.next().expect("one embedding per description");

    Ok(frames
        .iter()
        .map(|f| PerceptionGraph {
            frame_id: f.frame_id.clone(),
            timestamp: f.timestamp,
            nodes: f
                .objects
                .iter()
                .map(|o| SemanticNode {
                    node_id: o.id.clone(),
                    description: o.description.clone(),
                    embedding: next(),
                    weight: o.weight.unwrap_or(DEFAULT_WEIGHT),
                    position: o.position,
                })
                .collect(),
            edges: f
                .relations
                .iter()
                .map(|r| RelationEdge {
                    src: r.src.clone(),
                    dst: r.dst.clone(),
                    description: r.description.clone(),
                    embedding: next(),
                })
                .collect(),
        })
        .collect())
}

pub fn read_scene_file(
    path: impl AsRef<Path>,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PerceptionGraph>, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    encode_scene(&parse_scene_str(&text)?, provider)
}

/// Drops embeddings, keeping the descriptions that regenerate them.
pub fn scene_from_graphs(graphs: &[PerceptionGraph]) -> SceneFile {
    SceneFile {
        version: FORMAT_VERSION,
        frames: graphs
            .iter()
            .map(|g| SceneFrame {
                frame_id: g.frame_id.clone(),
                timestamp: g.timestamp,
                objects: g
                    .nodes
                    .iter()
                    .map(|n| SceneObject {
                        id: n.node_id.clone(),
                        description: n.description.clone(),
                        weight: Some(n.weight),
                        position: n.position,
                    })
                    .collect(),
                relations: g
                    .edges
                    .iter()
                    .map(|e| SceneRelation {
                        src: e.src.clone(),
                        dst: e.dst.clone(),
                        description: e.description.clone(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

pub fn write_scene_file(
    path: impl AsRef<Path>,
    graphs: &[PerceptionGraph],
) -> Result<(), StoreError> {
    write_json_atomic(path.as_ref(), &scene_from_graphs(graphs))
}

// ---------------------------------------------------------------------------
// Reference stores
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceStore {
    pub version: u64,
    pub provider: ProviderId,
    pub dim: usize,
    pub references: Vec<PerceptionGraph>,
    pub baseline: Option<BaselineStats>,
    pub params: DetectionParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    node_id: String,
    description: String,
    embedding: Vec<f64>,
    weight: f64,
    #[serde(default)]
    position: Option<[f64; 3]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    src: String,
    dst: String,
    description: String,
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    frame_id: String,
    timestamp: f64,
    nodes: Vec<NodeRecord>,
    edges: Vec<EdgeRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreRecord {
    version: u64,
    provider: ProviderId,
    dim: usize,
    references: Vec<GraphRecord>,
    baseline: Option<BaselineStats>,
    params: DetectionParams,
}

impl GraphRecord {
    fn into_graph(self) -> Result<PerceptionGraph, StoreError> {
        let frame_id = self.frame_id;
        let unit = |element: String, values| {
            Embedding::from_unit(values).map_err(|source| StoreError::Embedding {
                frame_id: frame_id.clone(),
                element,
                source,
            })
        };
        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                Ok(SemanticNode {
                    embedding: unit(n.node_id.clone(), n.embedding)?,
                    node_id: n.node_id,
                    description: n.description,
                    weight: n.weight,
                    position: n.position,
                })
            })
            .collect::<Result<_, StoreError>>()?;
        let edges = self
            .edges
            .into_iter()
            .map(|e| {
                Ok(RelationEdge {
                    embedding: unit(format!("{}->{}", e.src, e.dst), e.embedding)?,
                    src: e.src,
                    dst: e.dst,
                    description: e.description,
                })
            })
            .collect::<Result<_, StoreError>>()?;
        Ok(PerceptionGraph {
            frame_id,
            timestamp: self.timestamp,
            nodes,
            edges,
        })
    }
}

impl ReferenceStore {
    /// A store without a baseline; run calibration before detection.
    pub fn new(
        provider: ProviderId,
        references: Vec<PerceptionGraph>,
        params: DetectionParams,
    ) -> Result<Self, StoreError> {
        let store = Self {
            version: FORMAT_VERSION,
            dim: provider.dim,
            provider,
            references,
            baseline: None,
            params,
        };
        store.validate()?;
        Ok(store)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        if self.version != FORMAT_VERSION {
            return Err(StoreError::VersionMismatch {
                found: self.version,
                expected: FORMAT_VERSION,
            });
        }
        if self.dim != self.provider.dim {
            return Err(StoreError::Invariant(format!(
                "store dim {} differs from provider dim {}",
                self.dim, self.provider.dim
            )));
        }
        self.params
            .validate()
            .map_err(|e| StoreError::Invariant(e.to_string()))?;
        let mut frame_ids = HashSet::new();
        for g in &self.references {
            if !frame_ids.insert(g.frame_id.as_str()) {
                return Err(StoreError::Invariant(format!(
                    "duplicate reference frame {}",
                    g.frame_id
                )));
            }
            if let Some(v) = validate_graph(g).into_iter().next() {
                return Err(StoreError::Scene {
                    frame_id: g.frame_id.clone(),
                    element: v.element,
                    reason: v.rule.to_string(),
                });
            }
            let dims = g
                .nodes
                .iter()
                .map(|n| (n.node_id.clone(), n.embedding.dim()))
                .chain(g.edges.iter().map(|e| (e.edge_id(), e.embedding.dim())));
            for (element, dim) in dims {
                if dim != self.dim {
                    return Err(StoreError::Embedding {
                        frame_id: g.frame_id.clone(),
                        element,
                        source: GraphError::DimensionMismatch {
                            left: self.dim,
                            right: dim,
                        },
                    });
                }
            }
        }
        if let Some(b) = &self.baseline {
            let n = self.references.len();
            if b.sample_count != n * n.saturating_sub(1) {
                return Err(StoreError::Invariant(format!(
                    "baseline sample_count {} does not equal n(n-1) = {} for {n} references",
                    b.sample_count,
                    n * n.saturating_sub(1)
                )));
            }
        }
        Ok(())
    }

    /// Fails unless `other` is the provider that built this store.
    pub fn check_provider(&self, other: &ProviderId) -> Result<(), StoreError> {
        if &self.provider == other {
            Ok(())
        } else {
            Err(StoreError::ProviderMismatch {
                store: self.provider.to_string(),
                other: other.to_string(),
            })
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("store values are finite");
        s.push('\n');
        s
    }
}

pub fn parse_store_str(json: &str) -> Result<ReferenceStore, StoreError> {
    let rec: StoreRecord = parse_versioned(json)?;
    let references = rec
        .references
        .into_iter()
        .map(GraphRecord::into_graph)
        .collect::<Result<_, _>>()?;
    let store = ReferenceStore {
        version: rec.version,
        provider: rec.provider,
        dim: rec.dim,
        references,
        baseline: rec.baseline,
        params: rec.params,
    };
    store.validate()?;
    Ok(store)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<ReferenceStore, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_store_str(&text)
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| StoreError::Invariant(format!("unserializable value: {e}")))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    // Temp files are created 0600; keep the existing mode or use a normal one.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = fs::metadata(path)
            .map(|m| m.permissions())
            .unwrap_or_else(|_| fs::Permissions::from_mode(0o644));
        tmp.as_file().set_permissions(perms).map_err(io_err(path))?;
    }
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

/// Validates and writes the store via write-then-rename.
pub fn save_store(store: &ReferenceStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    store.validate()?;
    write_atomic(path.as_ref(), store.to_json().as_bytes())
}

// ---------------------------------------------------------------------------
// Detection history (JSON lines)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub records: Vec<DetectionReport>,
    /// Skipped lines: an unterminated trailing line or a line that does not parse.
    pub warnings: usize,
}

pub fn report_to_line(report: &DetectionReport) -> Result<String, StoreError> {
    serde_json::to_string(report)
        .map_err(|e| StoreError::Invariant(format!("unserializable report: {e}")))
}

/// Appends one report as a single line. A partial trailing line left by an
/// interrupted write is terminated first so the new record stays intact.
pub fn append_history(path: impl AsRef<Path>, report: &DetectionReport) -> Result<(), StoreError> {
    let path = path.as_ref();
    let mut line = report_to_line(report)?;
    line.push('\n');
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let len = file.metadata().map_err(io_err(path))?.len();
    if len > 0 {
        let mut last = [0u8; 1];
        file.seek(SeekFrom::Start(len - 1)).map_err(io_err(path))?;
        file.read_exact(&mut last).map_err(io_err(path))?;
        if last[0] != b'\n' {
            line.insert(0, '\n');
        }
    }
    file.write_all(line.as_bytes()).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

pub fn parse_history_str(text: &str) -> History {
    let mut history = History::default();
    let mut segments: Vec<&str> = text.split('\n').collect();
    let trailing = segments.pop().unwrap_or_default();
    if !trailing.is_empty() {
        history.warnings += 1;
    }
    for line in segments {
        match serde_json::from_str::<DetectionReport>(line) {
            Ok(r) => history.records.push(r),
            Err(_) => history.warnings += 1,
        }
    }
    history
}

pub fn read_history(path: impl AsRef<Path>) -> Result<History, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8_lossy(&bytes);
    Ok(parse_history_str(&text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::TokenHashProvider;
    use crate::scoring::Verdict;

    const MINIMAL: &str = r#"{"version":1,"frames":[{"frame_id":"f0","timestamp":0,
        "objects":[{"id":"drone","description":"red drone"}]}]}"#;

    fn provider() -> TokenHashProvider {
        TokenHashProvider::new(16, 1).unwrap()
    }

    fn report(id: &str) -> DetectionReport {
        DetectionReport {
            frame_id: id.into(),
            ref_frame_id: "r0".into(),
            score: 0.25,
            z: -0.5,
            verdict: Verdict::Benign,
            evidence: vec![],
            reference_scores: vec![],
        }
    }

    #[test]
    fn minimal_scene_defaults_weight() {
        let frames = parse_scene_str(MINIMAL).unwrap();
        let graphs = encode_scene(&frames, &provider()).unwrap();
        assert_eq!(graphs.len(), 1);
        assert_eq!(graphs[0].nodes.len(), 1);
        assert_eq!(graphs[0].nodes[0].weight, DEFAULT_WEIGHT);
        assert!(graphs[0].edges.is_empty());
    }

    #[test]
    fn duplicate_object_id_names_frame_and_id() {
        let json = r#"{"version":1,"frames":[{"frame_id":"f7","timestamp":0,"objects":[
            {"id":"a","description":"x"},{"id":"a","description":"y"}]}]}"#;
        let err = parse_scene_str(json).unwrap_err().to_string();
        assert!(err.contains("f7") && err.contains(" a:"), "{err}");
    }

    #[test]
    fn dangling_relation_and_bad_weight() {
        let json = r#"{"version":1,"frames":[{"frame_id":"f","timestamp":0,
            "objects":[{"id":"a","description":"x"}],
            "relations":[{"src":"a","dst":"ghost","description":"a near ghost"}]}]}"#;
        assert!(parse_scene_str(json)
            .unwrap_err()
            .to_string()
            .contains("ghost"));
        let json = r#"{"version":1,"frames":[{"frame_id":"f","timestamp":0,
            "objects":[{"id":"a","description":"x","weight":1.2}]}]}"#;
        let err = parse_scene_str(json).unwrap_err().to_string();
        assert!(
            err.contains("frame f") && err.contains("element a"),
            "{err}"
        );
    }

    #[test]
    fn scene_version_and_schema_errors() {
        let err = parse_scene_str(r#"{"version":2,"frames":[]}"#).unwrap_err();
        assert!(matches!(
            err,
            StoreError::VersionMismatch {
                found: 2,
                expected: 1
            }
        ));
        let err = parse_scene_str(
            r#"{"version":1,"frames":[{"frame_id":"f","timestamp":"x","objects":[]}]}"#,
        )
        .unwrap_err();
        match err {
            StoreError::Schema { path, .. } => assert_eq!(path, "frames[0].timestamp"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_scene_str("{}"),
            Err(StoreError::MissingVersion)
        ));
        assert!(matches!(parse_scene_str("{"), Err(StoreError::Syntax(_))));
    }

    #[test]
    fn empty_frames_list_parses_empty() {
        assert!(parse_scene_str(r#"{"version":1,"frames":[]}"#)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn store_rejects_non_unit_embedding_naming_node() {
        let p = provider();
        let graphs = encode_scene(&parse_scene_str(MINIMAL).unwrap(), &p).unwrap();
        let store = ReferenceStore::new(p.id(), graphs, DetectionParams::default()).unwrap();
        let mut value: serde_json::Value = serde_json::from_str(&store.to_json()).unwrap();
        let emb = &mut value["references"][0]["nodes"][0]["embedding"];
        let halved: Vec<f64> = emb
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap() * 0.5)
            .collect();
        *emb = serde_json::json!(halved);
        let err = parse_store_str(&value.to_string()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("drone") && msg.contains("norm"), "{msg}");
    }

    #[test]
    fn store_version_99_rejected() {
        let p = provider();
        let store = ReferenceStore::new(p.id(), vec![], DetectionParams::default()).unwrap();
        let json = store
            .to_json()
            .replacen("\"version\": 1", "\"version\": 99", 1);
        let err = parse_store_str(&json).unwrap_err();
        assert!(matches!(
            err,
            StoreError::VersionMismatch {
                found: 99,
                expected: 1
            }
        ));
        assert!(err.to_string().contains("99"));
    }

    #[test]
    fn baseline_count_must_match_references() {
        let p = provider();
        let mut store = ReferenceStore::new(p.id(), vec![], DetectionParams::default()).unwrap();
        store.baseline = Some(BaselineStats {
            mu: 0.1,
            sigma: 0.1,
            sample_count: 2,
            degenerate: false,
        });
        assert!(matches!(store.validate(), Err(StoreError::Invariant(_))));
    }

    #[test]
    fn provider_mismatch_detected() {
        let p = provider();
        let store = ReferenceStore::new(p.id(), vec![], DetectionParams::default()).unwrap();
        assert!(store.check_provider(&p.id()).is_ok());
        let q = TokenHashProvider::new(16, 2).unwrap();
        assert!(matches!(
            store.check_provider(&q.id()),
            Err(StoreError::ProviderMismatch { .. })
        ));
    }

    #[test]
    fn history_append_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        for id in ["a", "b", "c"] {
            append_history(&path, &report(id)).unwrap();
        }
        let h = read_history(&path).unwrap();
        assert_eq!(h.warnings, 0);
        let ids: Vec<_> = h.records.iter().map(|r| r.frame_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn empty_history() {
        assert_eq!(parse_history_str(""), History::default());
    }

    #[test]
    fn truncated_last_line_is_skipped_with_warning() {
        let full = format!(
            "{}\n{}\n{}\n",
            report_to_line(&report("a")).unwrap(),
            report_to_line(&report("b")).unwrap(),
            report_to_line(&report("c")).unwrap()
        );
        let cut = &full[..full.len() - 10];
        let h = parse_history_str(cut);
        assert_eq!(h.records.len(), 2);
        assert_eq!(h.warnings, 1);
    }

    #[test]
    fn append_after_truncation_keeps_new_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.jsonl");
        append_history(&path, &report("a")).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"frame_id\":\"par").unwrap();
        drop(f);
        append_history(&path, &report("b")).unwrap();
        let h = read_history(&path).unwrap();
        let ids: Vec<_> = h.records.iter().map(|r| r.frame_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(h.warnings, 1);
    }

    #[test]
    fn unreadable_history_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            read_history(dir.path().join("missing")),
            Err(StoreError::Io { .. })
        ));
    }
}
