//! Frame distortion scores, benign baseline calibration, Z-scores and verdicts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{
    change_set, AlignError, ChangeSet, NodeChange, DEFAULT_MODIFY_THRESHOLD, DEFAULT_TAU_MATCH,
};
use crate::graph::PerceptionGraph;

pub const SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_W_MIN: f64 = 0.2;
pub const DEFAULT_Z_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("calibration needs at least 2 reference frames, got {0}")]
    TooFewReferences(usize),
    #[error("calibration needs at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("detection needs at least one reference frame")]
    NoReferences,
    #[error("{name} = {value} is out of range")]
    Param { name: &'static str, value: f64 },
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Thresholds shared by alignment, scoring and verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub tau_match: f64,
    pub modify_threshold: f64,
    pub w_min: f64,
    pub z_threshold: f64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        Self {
            tau_match: DEFAULT_TAU_MATCH,
            modify_threshold: DEFAULT_MODIFY_THRESHOLD,
            w_min: DEFAULT_W_MIN,
            z_threshold: DEFAULT_Z_THRESHOLD,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<(), ScoringError> {
        let open = |name, value: f64| {
            if value > 0.0 && value < 1.0 {
                Ok(())
            } else {
                Err(ScoringError::Param { name, value })
            }
        };
        open("tau_match", self.tau_match)?;
        open("modify_threshold", self.modify_threshold)?;
        if !(0.0..=1.0).contains(&self.w_min) {
            return Err(ScoringError::Param {
                name: "w_min",
                value: self.w_min,
            });
        }
        if !self.z_threshold.is_finite() {
            return Err(ScoringError::Param {
                name: "z_threshold",
                value: self.z_threshold,
            });
        }
        Ok(())
    }
}

/// Benign score distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mu: f64,
    /// Floored at [`SIGMA_FLOOR`].
    pub sigma: f64,
    pub sample_count: usize,
    /// Raw sigma was below the floor.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Benign,
    Attack,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Benign => "benign",
            Verdict::Attack => "attack",
        })
    }
}

impl FromStr for Verdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benign" => Ok(Verdict::Benign),
            "attack" => Ok(Verdict::Attack),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScore {
    pub ref_frame_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub frame_id: String,
    /// Reference achieving the reported (minimum) score.
    pub ref_frame_id: String,
    pub score: f64,
    pub z: f64,
    pub verdict: Verdict,
    /// Changes against the winning reference, by `weight * distance` descending.
    pub evidence: Vec<NodeChange>,
    /// Score against every reference, in reference order.
    #[serde(default)]
    pub reference_scores: Vec<ReferenceScore>,
}

impl DetectionReport {
    pub fn top_evidence(&self) -> Option<&NodeChange> {
        self.evidence.first()
    }
}

/// Maximum distance over node and edge changes whose weight passes `w_min`; 0 if none do.
pub fn frame_score(cs: &ChangeSet, w_min: f64) -> f64 {
    cs.all_changes()
        .filter(|c| c.weight >= w_min)
        .map(|c| c.distance)
        .fold(0.0, f64::max)
}

pub fn z_score(d: f64, stats: &BaselineStats) -> f64 {
    (d - stats.mu) / stats.sigma
}

pub fn verdict_for(z: f64, z_threshold: f64) -> Verdict {
    if z > z_threshold {
        Verdict::Attack
    } else {
        Verdict::Benign
    }
}

/// Sample mean and (n-1) standard deviation of benign scores, sigma floored.
pub fn baseline_from_scores(scores: &[f64]) -> Result<BaselineStats, ScoringError> {
    let n = scores.len();
    if n < 2 {
        return Err(ScoringError::TooFewScores(n));
    }
    let mu = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
    let raw_sigma = var.sqrt();
    let degenerate = raw_sigma < SIGMA_FLOOR;
    Ok(BaselineStats {
        mu,
        sigma: if degenerate { SIGMA_FLOOR } else { raw_sigma },
        sample_count: n,
        degenerate,
    })
}

/// Scores of every ordered pair `(observed = i, reference = j)`, `i != j`, row-major.
pub fn pairwise_scores(
    references: &[PerceptionGraph],
    params: &DetectionParams,
) -> Result<Vec<f64>, ScoringError> {
    let n = references.len();
    let mut scores = Vec::with_capacity(n * n.saturating_sub(1));
    for (i, obs) in references.iter().enumerate() {
        for (j, reference) in references.iter().enumerate() {
            if i == j {
                continue;
            }
            let cs = change_set(reference, obs, params.tau_match, params.modify_threshold)?;
            scores.push(frame_score(&cs, params.w_min));
        }
    }
    Ok(scores)
}

pub fn calibrate(
    references: &[PerceptionGraph],
    params: &DetectionParams,
) -> Result<BaselineStats, ScoringError> {
    params.validate()?;
    if references.len() < 2 {
        return Err(ScoringError::TooFewReferences(references.len()));
    }
    baseline_from_scores(&pairwise_scores(references, params)?)
}

fn sort_evidence(evidence: &mut [NodeChange]) {
    evidence.sort_by(|a, b| {
        (b.weight * b.distance)
            .total_cmp(&(a.weight * a.distance))
            .then_with(|| a.element_id().cmp(b.element_id()))
    });
}

/// Scores `observed` against every reference and keeps the most favorable one.
pub fn detect(
    observed: &PerceptionGraph,
    references: &[PerceptionGraph],
    stats: &BaselineStats,
    params: &DetectionParams,
) -> Result<DetectionReport, ScoringError> {
    params.validate()?;
    if references.is_empty() {
        return Err(ScoringError::NoReferences);
    }
    let mut best: Option<(f64, ChangeSet)> = None;
    let mut reference_scores = Vec::with_capacity(references.len());
    for reference in references {
        let cs = change_set(
            reference,
            observed,
            params.tau_match,
            params.modify_threshold,
        )?;
        let score = frame_score(&cs, params.w_min);
        reference_scores.push(ReferenceScore {
            ref_frame_id: reference.frame_id.clone(),
            score,
        });
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, cs));
        }
    }
    let (score, cs) = best.expect("at least one reference");
    let z = z_score(score, stats);
    let mut evidence: Vec<NodeChange> = cs.all_changes().cloned().collect();
    sort_evidence(&mut evidence);
    Ok(DetectionReport {
        frame_id: observed.frame_id.clone(),
        ref_frame_id: cs.ref_frame_id,
        score,
        z,
        verdict: verdict_for(z, params.z_threshold),
        evidence,
        reference_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::ChangeKind;

    fn change(kind: ChangeKind, id: &str, distance: f64, weight: f64) -> NodeChange {
        NodeChange {
            kind,
            ref_id: Some(id.into()),
            obs_id: None,
            distance,
            weight,
        }
    }

    fn cs(changes: Vec<NodeChange>) -> ChangeSet {
        ChangeSet {
            frame_id: "o".into(),
            ref_frame_id: "r".into(),
            changes,
            edge_changes: vec![],
        }
    }

    fn published_stats() -> BaselineStats {
        BaselineStats {
            mu: 0.32,
            sigma: 0.11,
            sample_count: 90,
            degenerate: false,
        }
    }

    #[test]
    fn frame_score_examples() {
        let zero = cs(vec![change(ChangeKind::Matched, "a", 0.0, 0.9)]);
        assert_eq!(frame_score(&zero, 0.2), 0.0);

        let removed = cs(vec![
            change(ChangeKind::Matched, "a", 0.1, 0.9),
            change(ChangeKind::Removed, "map", 1.0, 0.9),
        ]);
        assert_eq!(frame_score(&removed, 0.2), 1.0);

        let gated = cs(vec![
            change(ChangeKind::Matched, "a", 0.30, 0.8),
            change(ChangeKind::Modified, "b", 0.72, 0.9),
            change(ChangeKind::Modified, "c", 0.50, 0.1),
        ]);
        assert_eq!(frame_score(&gated, 0.2), 0.72);
        assert_eq!(frame_score(&cs(vec![]), 0.2), 0.0);
    }

    #[test]
    fn gate_is_inclusive() {
        let c = cs(vec![change(ChangeKind::Removed, "x", 1.0, 0.2)]);
        assert_eq!(frame_score(&c, 0.2), 1.0);
        assert_eq!(frame_score(&c, 0.2000001), 0.0);
    }

    #[test]
    fn z_score_examples() {
        let s = published_stats();
        assert!((z_score(0.72, &s) - 3.6364).abs() < 1e-4);
        assert!((z_score(0.64, &s) - 2.9091).abs() < 1e-4);
        assert!((z_score(1.0, &s) - 6.1818).abs() < 1e-4);
        assert_eq!(z_score(0.32, &s), 0.0);
        let z = z_score(0.50, &s);
        assert!((z - 1.6364).abs() < 1e-4);
        assert_eq!(verdict_for(z, 2.0), Verdict::Benign);
    }

    #[test]
    fn baseline_from_two_scores() {
        let b = baseline_from_scores(&[0.2, 0.4]).unwrap();
        assert!((b.mu - 0.3).abs() < 1e-15);
        assert!((b.sigma - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(b.sample_count, 2);
        assert!(!b.degenerate);
        assert_eq!(
            baseline_from_scores(&[0.1]),
            Err(ScoringError::TooFewScores(1))
        );
    }

    #[test]
    fn flat_scores_are_degenerate() {
        let b = baseline_from_scores(&[0.0; 6]).unwrap();
        assert_eq!(b.mu, 0.0);
        assert_eq!(b.sigma, SIGMA_FLOOR);
        assert!(b.degenerate);
    }

    #[test]
    fn verdict_boundary() {
        let s = published_stats();
        let edge = s.mu + 2.0 * s.sigma;
        assert_eq!(verdict_for(z_score(edge + 1e-9, &s), 2.0), Verdict::Attack);
        assert_eq!(verdict_for(z_score(edge - 1e-9, &s), 2.0), Verdict::Benign);
    }

    #[test]
    fn evidence_order() {
        let mut ev = vec![
            change(ChangeKind::Matched, "b", 0.1, 0.9),
            change(ChangeKind::Removed, "z", 1.0, 0.3),
            change(ChangeKind::Matched, "a", 0.1, 0.9),
            change(ChangeKind::Removed, "map", 1.0, 0.9),
        ];
        sort_evidence(&mut ev);
        let ids: Vec<_> = ev.iter().map(NodeChange::element_id).collect();
        assert_eq!(ids, ["map", "z", "a", "b"]);
    }

    #[test]
    fn params_validation() {
        assert!(DetectionParams::default().validate().is_ok());
        let bad = DetectionParams {
            w_min: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn detect_and_calibrate_need_references() {
        assert_eq!(
            calibrate(&[], &DetectionParams::default()),
            Err(ScoringError::TooFewReferences(0))
        );
        let g = PerceptionGraph {
            frame_id: "f".into(),
            timestamp: 0.0,
            nodes: vec![],
            edges: vec![],
        };
        assert_eq!(
            detect(&g, &[], &published_stats(), &DetectionParams::default()),
            Err(ScoringError::NoReferences)
        );
    }
}
