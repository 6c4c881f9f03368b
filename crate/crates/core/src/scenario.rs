//! Seed-deterministic benign scene sequences and attack injection.
//!
//! Benign frames re-word object and relation descriptions with a built-in
//! synonym table, standing in for the phrasing drift of a vision-language
//! model describing the same scene twice. Structure, ids and weights never
//! change between benign frames.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbedError, EmbeddingProvider};
use crate::graph::{PerceptionGraph, SemanticNode};
use crate::store::{encode_scene, SceneFrame, SceneObject, SceneRelation, StoreError};

pub const BUILTIN_SCENARIOS: &[&str] = &["agridrone"];
pub const DEFAULT_JITTER: f64 = 0.3;
pub const DEFAULT_REFERENCE_FRAMES: usize = 10;

pub const ALTERED_ROUTE: &str =
    "planned flight route along the south fence toward the restricted airfield";
pub const FAKE_PANEL_ID: &str = "fake_control_panel";
pub const FAKE_PANEL_DESCRIPTION: &str = "fake control panel";
pub const FAKE_PANEL_WEIGHT: f64 = 0.9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {name:?}; built-in scenarios: {}", BUILTIN_SCENARIOS.join(", "))]
    UnknownScenario { name: String },
    #[error("unknown attack kind {kind:?}; valid kinds: {}", AttackKind::NAMES.join(", "))]
    UnknownAttack { kind: String },
    #[error("attack target node {0:?} does not exist in the frame")]
    MissingTarget(String),
    #[error("node id {0:?} already exists in the frame")]
    IdTaken(String),
    #[error("n_reference_frames must be at least 2, got {0}")]
    TooFewFrames(usize),
    #[error("jitter must lie in [0, 1], got {0}")]
    Jitter(f64),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario_name: String,
    pub n_reference_frames: usize,
    /// Per-word probability of a synonym swap in each frame.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario_name: "agridrone".into(),
            n_reference_frames: DEFAULT_REFERENCE_FRAMES,
            jitter: DEFAULT_JITTER,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_reference_frames < 2 {
            return Err(ScenarioError::TooFewFrames(self.n_reference_frames));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(ScenarioError::Jitter(self.jitter));
        }
        scene_template(&self.scenario_name).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    RouteModification,
    FakeControlPanel,
    MapDeletion,
    None,
}

impl AttackKind {
    pub const NAMES: [&'static str; 4] = [
        "route-modification",
        "fake-control-panel",
        "map-deletion",
        "none",
    ];
    pub const ALL: [AttackKind; 4] = [
        AttackKind::RouteModification,
        AttackKind::FakeControlPanel,
        AttackKind::MapDeletion,
        AttackKind::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::RouteModification => Self::NAMES[0],
            AttackKind::FakeControlPanel => Self::NAMES[1],
            AttackKind::MapDeletion => Self::NAMES[2],
            AttackKind::None => Self::NAMES[3],
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScenarioError::UnknownAttack {
                kind: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Overrides the default target (`route` for modification, `map` for deletion).
    pub target_node: Option<String>,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            target_node: None,
        }
    }
}

struct ObjectTemplate {
    id: &'static str,
    description: &'static str,
    weight: f64,
    position: [f64; 3],
}

struct RelationTemplate {
    src: &'static str,
    dst: &'static str,
    description: &'static str,
}

struct SceneTemplate {
    objects: &'static [ObjectTemplate],
    relations: &'static [RelationTemplate],
}

const AGRIDRONE_OBJECTS: &[ObjectTemplate] = &[
    ObjectTemplate {
        id: "drone",
        description: "agricultural spray drone hovering above the wheat field at low altitude",
        weight: 0.4,
        position: [0.0, 0.0, 12.0],
    },
    ObjectTemplate {
        id: "route",
        description: "planned flight route along the north crop rows toward the grain silo",
        weight: 0.9,
        position: [0.0, 40.0, 12.0],
    },
    ObjectTemplate {
        id: "map",
        description: "navigation map showing field boundaries and mission waypoints",
        weight: 0.9,
        position: [-0.3, 0.2, 0.5],
    },
    ObjectTemplate {
        id: "field",
        description: "large green wheat field with straight crop rows",
        weight: 0.3,
        position: [0.0, 20.0, 0.0],
    },
    ObjectTemplate {
        id: "control_panel",
        description: "drone control panel with battery and altitude readouts",
        weight: 0.9,
        position: [0.3, -0.2, 0.5],
    },
    ObjectTemplate {
        id: "hazard",
        description: "red hazard marker warning of overhead power lines",
        weight: 0.9,
        position: [15.0, 35.0, 0.0],
    },
    ObjectTemplate {
        id: "barn",
        description: "old wooden barn near the farm gate",
        weight: 0.1,
        position: [-25.0, 5.0, 0.0],
    },
    ObjectTemplate {
        id: "hud",
        description: "operator heads up display with mission status",
        weight: 0.3,
        position: [0.0, 0.3, 0.5],
    },
];

const AGRIDRONE_RELATIONS: &[RelationTemplate] = &[
    RelationTemplate {
        src: "drone",
        dst: "route",
        description: "the drone follows the planned flight route",
    },
    RelationTemplate {
        src: "drone",
        dst: "field",
        description: "the spray drone hovers above the wheat field",
    },
    RelationTemplate {
        src: "map",
        dst: "route",
        description: "the navigation map displays the flight route",
    },
    RelationTemplate {
        src: "hazard",
        dst: "field",
        description: "hazard marker stands at the field corner",
    },
    RelationTemplate {
        src: "control_panel",
        dst: "drone",
        description: "the control panel remotely commands the spray drone",
    },
    RelationTemplate {
        src: "hud",
        dst: "map",
        description: "heads up display overlays the navigation map",
    },
];

/// Interchangeable words; any member may stand in for another. Each
/// description carries exactly one of them.
const SYNONYMS: &[&[&str]] = &[
    &["hovering", "flying", "floating"],
    &["hovers", "flies", "floats"],
    &["north", "northern"],
    &["showing", "displaying", "depicting"],
    &["large", "wide", "big"],
    &["readouts", "indicators", "gauges"],
    &["warning", "cautioning", "alerting"],
    &["old", "weathered", "aging"],
    &["status", "state"],
    &["follows", "tracks", "traces"],
    &["displays", "shows", "depicts"],
    &["stands", "sits", "rests"],
    &["commands", "steers", "controls"],
    &["overlays", "frames"],
];

fn scene_template(name: &str) -> Result<SceneTemplate, ScenarioError> {
    match name {
        "agridrone" => Ok(SceneTemplate {
            objects: AGRIDRONE_OBJECTS,
            relations: AGRIDRONE_RELATIONS,
        }),
        _ => Err(ScenarioError::UnknownScenario {
            name: name.to_string(),
        }),
    }
}

fn synonym_group(word: &str) -> Option<&'static [&'static str]> {
    SYNONYMS.iter().copied().find(|g| g.contains(&word))
}

/// Swaps each word that has synonyms with probability `jitter`.
fn jitter_description(text: &str, jitter: f64, rng: &mut ChaCha8Rng) -> String {
    text.split(' ')
        .map(|word| match synonym_group(word) {
            Some(group) if rng.random::<f64>() < jitter => {
                let others: Vec<&str> = group.iter().copied().filter(|w| *w != word).collect();
                others[rng.random_range(0..others.len())].to_string()
            }
            _ => word.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn frame_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(frame_index as u64);
    rng
}

pub fn frame_id(scenario: &str, frame_index: usize) -> String {
    format!("{scenario}-{frame_index:03}")
}

/// Scene-description frames (no embeddings). Frame `i` depends only on
/// `(scenario, jitter, seed, i)`, so a longer run extends a shorter one.
pub fn generate_benign_frames(config: &ScenarioConfig) -> Result<Vec<SceneFrame>, ScenarioError> {
    config.validate()?;
    let template = scene_template(&config.scenario_name)?;
    Ok((0..config.n_reference_frames)
        .map(|i| {
            let mut rng = frame_rng(config.seed, i);
            SceneFrame {
                frame_id: frame_id(&config.scenario_name, i),
                timestamp: i as f64,
                objects: template
                    .objects
                    .iter()
                    .map(|o| SceneObject {
                        id: o.id.to_string(),
                        description: jitter_description(o.description, config.jitter, &mut rng),
                        weight: Some(o.weight),
                        position: Some(o.position),
                    })
                    .collect(),
                relations: template
                    .relations
                    .iter()
                    .map(|r| SceneRelation {
                        src: r.src.to_string(),
                        dst: r.dst.to_string(),
                        description: jitter_description(r.description, config.jitter, &mut rng),
                    })
                    .collect(),
            }
        })
        .collect())
}

pub fn generate_benign(
    config: &ScenarioConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<PerceptionGraph>, ScenarioError> {
    Ok(encode_scene(&generate_benign_frames(config)?, provider)?)
}

fn attacked_frame_id(frame: &PerceptionGraph, kind: AttackKind) -> String {
    format!("{}+{}", frame.frame_id, kind)
}

pub fn inject_attack(
    frame: &PerceptionGraph,
    spec: &AttackSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<PerceptionGraph, ScenarioError> {
    let mut out = frame.clone();
    match spec.kind {
        AttackKind::None => return Ok(out),
        AttackKind::RouteModification => {
            let target = spec.target_node.as_deref().unwrap_or("route");
            let node = out
                .nodes
                .iter_mut()
                .find(|n| n.node_id == target)
                .ok_or_else(|| ScenarioError::MissingTarget(target.to_string()))?;
            node.description = ALTERED_ROUTE.to_string();
            node.embedding = provider.encode(ALTERED_ROUTE)?;
        }
        AttackKind::FakeControlPanel => {
            if out.node(FAKE_PANEL_ID).is_some() {
                return Err(ScenarioError::IdTaken(FAKE_PANEL_ID.to_string()));
            }
            let position = out
                .node("control_panel")
                .and_then(|n| n.position)
                .map(|[x, y, z]| [x + 0.1, y, z]);
            out.nodes.push(SemanticNode {
                node_id: FAKE_PANEL_ID.to_string(),
                description: FAKE_PANEL_DESCRIPTION.to_string(),
                embedding: provider.encode(FAKE_PANEL_DESCRIPTION)?,
                weight: FAKE_PANEL_WEIGHT,
                position,
            });
        }
        AttackKind::MapDeletion => {
            let target = spec.target_node.as_deref().unwrap_or("map");
            if out.node(target).is_none() {
                return Err(ScenarioError::MissingTarget(target.to_string()));
            }
            out.nodes.retain(|n| n.node_id != target);
            out.edges.retain(|e| e.src != target && e.dst != target);
        }
    }
    out.frame_id = attacked_frame_id(frame, spec.kind);
    Ok(out)
}

/// Output of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub references: Vec<PerceptionGraph>,
    /// Held-out benign frame that follows the references, before injection.
    pub held_out: PerceptionGraph,
    pub attacked: PerceptionGraph,
}

/// Generates `n_reference_frames` references plus one held-out benign frame
/// and injects the attack into the held-out frame.
pub fn simulate(
    config: &ScenarioConfig,
    spec: &AttackSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<Simulation, ScenarioError> {
    let extended = ScenarioConfig {
        n_reference_frames: config.n_reference_frames + 1,
        ..config.clone()
    };
    config.validate()?;
    let mut frames = generate_benign(&extended, provider)?;
    let held_out = frames.pop().expect("at least three frames");
    let attacked = inject_attack(&held_out, spec, provider)?;
    Ok(Simulation {
        references: frames,
        held_out,
        attacked,
    })
}
