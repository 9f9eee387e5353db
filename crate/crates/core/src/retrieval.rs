//! Evidence selection: score every corpus record against a queried camera
//! action and keep a budgeted subset, split into on-time and off-time parts.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EvidenceCorpus, EvidenceRecord, RecordKey};
use crate::geometry::{CameraAction, FrustumSampler, DEFAULT_FRUSTUM_SEED};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Top-M by score, the exact optimum of a modular objective.
    #[serde(rename = "paper_topM")]
    TopM,
    /// Greedy marginal gain with diminishing returns for redundant coverage.
    #[serde(rename = "coverage_greedy")]
    CoverageGreedy,
}

/// Which records may be retrieved at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetrievalScope {
    /// Any `(j, i)` in the corpus.
    #[serde(rename = "4d_informed")]
    FourDInformed,
    /// Only records with `i = t`.
    #[serde(rename = "time_local")]
    TimeLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceWeights {
    pub geometry: f64,
    pub time: f64,
    pub scale: f64,
}

impl Default for RelevanceWeights {
    fn default() -> Self {
        Self {
            geometry: 0.6,
            time: 0.2,
            scale: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub budget: usize,
    /// `τ` in frames.
    pub temporal_scale: f64,
    pub weights: RelevanceWeights,
    pub frustum_samples: usize,
    /// Depth interval in meters over which frustum overlap is measured.
    pub depth_range: (f64, f64),
    pub mode: SelectionMode,
    pub scope: RetrievalScope,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            budget: 8,
            temporal_scale: 15.0,
            weights: RelevanceWeights::default(),
            frustum_samples: 256,
            depth_range: (0.5, 60.0),
            mode: SelectionMode::TopM,
            scope: RetrievalScope::FourDInformed,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::InvalidConfig(m.to_string()));
        let w = &self.weights;
        if self.budget == 0 {
            return bad("budget must be >= 1");
        }
        if !(self.temporal_scale > 0.0 && self.temporal_scale.is_finite()) {
            return bad("temporal_scale must be positive");
        }
        if [w.geometry, w.time, w.scale].iter().any(|v| !(*v >= 0.0)) {
            return bad("weights must be nonnegative");
        }
        if ((w.geometry + w.time + w.scale) - 1.0).abs() > 1e-9 {
            return bad("weights must sum to 1");
        }
        if self.frustum_samples == 0 {
            return bad("frustum_samples must be >= 1");
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad("depth_range must satisfy 0 < lo < hi");
        }
        Ok(())
    }

    fn sampler(&self) -> FrustumSampler {
        FrustumSampler::new(self.frustum_samples, DEFAULT_FRUSTUM_SEED)
    }
}

/// The three terms of a relevance score and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceTerms {
    pub overlap: f64,
    pub temporal: f64,
    pub scale: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredIndex {
    pub key: RecordKey,
    #[serde(flatten)]
    pub terms: RelevanceTerms,
}

impl ScoredIndex {
    pub fn score(&self) -> f64 {
        self.terms.score
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSelection {
    pub query_time: u32,
    /// Selected records, scores nonincreasing.
    pub indices: Vec<ScoredIndex>,
    /// Eligible records passed over because they carry no depth. In top-M
    /// mode these are the ones ranked ahead of the last pick; they do not
    /// count against the budget.
    pub skipped: Vec<RecordKey>,
}

impl EvidenceSelection {
    pub fn keys(&self) -> Vec<RecordKey> {
        self.indices.iter().map(|s| s.key).collect()
    }

    pub fn on_time(&self) -> Vec<RecordKey> {
        self.partition().0
    }

    pub fn off_time(&self) -> Vec<RecordKey> {
        self.partition().1
    }

    /// `(on_time, off_time)`: indices with `i = t` and the rest, in list order.
    pub fn partition(&self) -> (Vec<RecordKey>, Vec<RecordKey>) {
        self.indices
            .iter()
            .map(|s| s.key)
            .partition(|k| k.time == self.query_time)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }
}

/// Typical viewing distance of a record: its mean valid depth, or the
/// geometric mean of the configured depth range when it has none.
fn reference_depth(record: &EvidenceRecord, cfg: &RetrievalConfig) -> f64 {
    record
        .mean_depth()
        .unwrap_or_else(|| (cfg.depth_range.0 * cfg.depth_range.1).sqrt())
}

/// Ratio of per-pixel footprints on the surface the candidate looks at,
/// folded into `(0, 1]`. Zero when that surface is behind the query.
fn scale_term(record: &EvidenceRecord, query: &CameraAction, cfg: &RetrievalConfig) -> f64 {
    let cand = record.action();
    let d_c = reference_depth(record, cfg);
    let target = cand.pose.center() + cand.pose.forward() * d_c;
    let d_q = query.pose.transform_point(&target).z;
    if !(d_q > 0.0) {
        return 0.0;
    }
    let rho = (query.intrinsics.focal() / d_q) / (cand.intrinsics.focal() / d_c);
    rho.min(1.0 / rho)
}

fn terms_with(
    sampler: &FrustumSampler,
    record: &EvidenceRecord,
    query: &CameraAction,
    cfg: &RetrievalConfig,
) -> RelevanceTerms {
    let overlap = sampler.overlap(record.action(), query, cfg.depth_range);
    let gap = (record.time() as f64 - query.time as f64).abs();
    let temporal = (-gap / cfg.temporal_scale).exp();
    let scale = scale_term(record, query, cfg);
    let w = &cfg.weights;
    RelevanceTerms {
        overlap,
        temporal,
        scale,
        score: w.geometry * overlap + w.time * temporal + w.scale * scale,
    }
}

pub fn relevance_terms(
    record: &EvidenceRecord,
    query: &CameraAction,
    cfg: &RetrievalConfig,
) -> RelevanceTerms {
    terms_with(&cfg.sampler(), record, query, cfg)
}

/// Relevance score in `[0, 1]`.
pub fn relevance(record: &EvidenceRecord, query: &CameraAction, cfg: &RetrievalConfig) -> f64 {
    relevance_terms(record, query, cfg).score
}

/// Ranking order: higher score, then smaller `|i - t|`, then smaller `j`,
/// then smaller `i`.
pub fn rank_order(a: &ScoredIndex, b: &ScoredIndex, t: u32) -> Ordering {
    b.score()
        .total_cmp(&a.score())
        .then_with(|| a.key.time.abs_diff(t).cmp(&b.key.time.abs_diff(t)))
        .then_with(|| a.key.iteration.cmp(&b.key.iteration))
        .then_with(|| a.key.time.cmp(&b.key.time))
}

/// Scores all eligible records, best first.
pub fn score_corpus(
    corpus: &EvidenceCorpus,
    query: &CameraAction,
    cfg: &RetrievalConfig,
) -> Result<Vec<ScoredIndex>, RetrievalError> {
    cfg.validate()?;
    let sampler = cfg.sampler();
    let records: Vec<&EvidenceRecord> = corpus
        .records()
        .filter(|r| cfg.scope == RetrievalScope::FourDInformed || r.time() == query.time)
        .collect();
    let mut scored: Vec<ScoredIndex> = records
        .par_iter()
        .map(|r| ScoredIndex {
            key: r.key(),
            terms: terms_with(&sampler, r, query, cfg),
        })
        .collect();
    scored.sort_by(|a, b| rank_order(a, b, query.time));
    Ok(scored)
}

pub fn select_evidence(
    corpus: &EvidenceCorpus,
    query: &CameraAction,
    cfg: &RetrievalConfig,
) -> Result<EvidenceSelection, RetrievalError> {
    let ranked = score_corpus(corpus, query, cfg)?;
    let usable = |s: &ScoredIndex| corpus.get(s.key).is_some_and(EvidenceRecord::has_depth);
    let mut skipped = Vec::new();
    let indices = match cfg.mode {
        SelectionMode::TopM => {
            let mut picked = Vec::with_capacity(cfg.budget);
            for s in ranked {
                if picked.len() == cfg.budget {
                    break;
                }
                if usable(&s) {
                    picked.push(s);
                } else {
                    skipped.push(s.key);
                }
            }
            picked
        }
        SelectionMode::CoverageGreedy => {
            let sampler = cfg.sampler();
            let mut pool = Vec::new();
            for s in ranked {
                if usable(&s) {
                    let action = corpus.get(s.key).expect("ranked key exists").action();
                    let cov = sampler.coverage(action, query, cfg.depth_range);
                    pool.push((s, cov));
                } else {
                    skipped.push(s.key);
                }
            }
            let mut covered = vec![false; sampler.len()];
            let mut picked = Vec::with_capacity(cfg.budget);
            while picked.len() < cfg.budget && !pool.is_empty() {
                // Pool stays in rank order, so the first maximum wins ties.
                let mut best = 0;
                let mut best_gain = f64::NEG_INFINITY;
                for (idx, (s, cov)) in pool.iter().enumerate() {
                    let fresh = cov.iter().zip(&covered).filter(|(c, d)| **c && !**d).count();
                    let gain = s.score() * fresh as f64 / covered.len() as f64;
                    if gain > best_gain {
                        best_gain = gain;
                        best = idx;
                    }
                }
                let (s, cov) = pool.remove(best);
                for (d, c) in covered.iter_mut().zip(&cov) {
                    *d |= *c;
                }
                picked.push(s);
            }
            picked.sort_by(|a, b| rank_order(a, b, query.time));
            picked
        }
    };
    Ok(EvidenceSelection {
        query_time: query.time,
        indices,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ActionSequence, CameraIntrinsics, Pose};
    use crate::image::{DepthMap, Frame, Mask, RgbImage};
    use nalgebra::Vector3;

    fn camera(yaw_deg: f64, time: u32) -> CameraAction {
        let k = CameraIntrinsics::centered(20.0, 16, 12, 0.1, 100.0).unwrap();
        let pose = Pose::from_axis_angle(Vector3::y(), yaw_deg.to_radians());
        CameraAction::new(k, pose, time)
    }

    fn frame(depth: bool) -> Frame {
        Frame::new(
            RgbImage::filled(16, 12, [9, 9, 9]),
            depth.then(|| DepthMap::from_vec(16, 12, vec![5.0; 192]).unwrap()),
            Some(Mask::new(16, 12)),
        )
        .unwrap()
    }

    fn corpus_from(actions: &[CameraAction], horizon: u32, with_depth: &[bool]) -> EvidenceCorpus {
        let mut c = EvidenceCorpus::new(horizon);
        for (a, d) in actions.iter().zip(with_depth) {
            let seq = ActionSequence::constant(a, horizon).unwrap();
            let frames = (1..=horizon)
                .map(|t| (t == a.time).then(|| frame(*d)))
                .collect();
            c = c.add_partial_iteration(&seq, frames).unwrap();
        }
        c
    }

    #[test]
    fn identical_action_scores_one() {
        let q = camera(0.0, 3);
        let c = corpus_from(&[q], 5, &[true]);
        let r = c.records().next().unwrap();
        assert!((relevance(r, &q, &RetrievalConfig::default()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_splits_by_time() {
        let sel = EvidenceSelection {
            query_time: 7,
            indices: [(1, 7), (1, 4), (2, 7)]
                .iter()
                .map(|(j, i)| ScoredIndex {
                    key: RecordKey::new(*j, *i),
                    terms: RelevanceTerms {
                        overlap: 0.0,
                        temporal: 0.0,
                        scale: 0.0,
                        score: 0.0,
                    },
                })
                .collect(),
            skipped: vec![],
        };
        let (on, off) = sel.partition();
        assert_eq!(on, vec![RecordKey::new(1, 7), RecordKey::new(2, 7)]);
        assert_eq!(off, vec![RecordKey::new(1, 4)]);
    }

    #[test]
    fn budget_larger_than_corpus_takes_all() {
        let acts: Vec<_> = (1..=3).map(|t| camera(0.0, t)).collect();
        let c = corpus_from(&acts, 3, &[true; 3]);
        let cfg = RetrievalConfig {
            budget: 10,
            ..Default::default()
        };
        assert_eq!(select_evidence(&c, &camera(0.0, 2), &cfg).unwrap().len(), 3);
    }

    #[test]
    fn equal_scores_prefer_closer_time() {
        // Geometry and scale terms are equal; with w_time = 0 the scores tie.
        let acts = [camera(0.0, 2), camera(0.0, 5)];
        let c = corpus_from(&acts, 6, &[true, true]);
        let cfg = RetrievalConfig {
            budget: 1,
            weights: RelevanceWeights {
                geometry: 0.5,
                time: 0.0,
                scale: 0.5,
            },
            ..Default::default()
        };
        let sel = select_evidence(&c, &camera(0.0, 4), &cfg).unwrap();
        assert_eq!(sel.keys(), vec![RecordKey::new(2, 5)]);
    }

    #[test]
    fn records_without_depth_do_not_use_budget() {
        let acts = [camera(0.0, 3), camera(5.0, 3)];
        let c = corpus_from(&acts, 3, &[false, true]);
        let cfg = RetrievalConfig {
            budget: 1,
            ..Default::default()
        };
        let sel = select_evidence(&c, &camera(0.0, 3), &cfg).unwrap();
        assert_eq!(sel.keys(), vec![RecordKey::new(2, 3)]);
        assert_eq!(sel.skipped, vec![RecordKey::new(1, 3)]);
    }

    #[test]
    fn time_local_only_sees_query_time() {
        let acts = [camera(0.0, 1), camera(0.0, 2)];
        let c = corpus_from(&acts, 3, &[true, true]);
        let cfg = RetrievalConfig {
            scope: RetrievalScope::TimeLocal,
            ..Default::default()
        };
        assert!(select_evidence(&c, &camera(0.0, 3), &cfg).unwrap().is_empty());
        let sel = select_evidence(&c, &camera(0.0, 2), &cfg).unwrap();
        assert_eq!(sel.keys(), vec![RecordKey::new(2, 2)]);
    }

    #[test]
    fn greedy_prefers_new_coverage() {
        // Two near-duplicates of the query and one camera looking elsewhere
        // that still sees part of the query frustum.
        let acts = [camera(0.0, 1), camera(0.0, 1), camera(30.0, 1)];
        let c = corpus_from(&acts, 1, &[true; 3]);
        let q = camera(15.0, 1);
        let top = select_evidence(
            &c,
            &q,
            &RetrievalConfig {
                budget: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let greedy = select_evidence(
            &c,
            &q,
            &RetrievalConfig {
                budget: 2,
                mode: SelectionMode::CoverageGreedy,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(top.len(), 2);
        assert_eq!(greedy.len(), 2);
        let scores: Vec<f64> = greedy.indices.iter().map(ScoredIndex::score).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = RetrievalConfig {
            budget: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RetrievalConfig {
            weights: RelevanceWeights {
                geometry: 0.5,
                time: 0.5,
                scale: 0.5,
            },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_uses_mode_names() {
        let json = serde_json::to_string(&RetrievalConfig::default()).unwrap();
        assert!(json.contains("\"paper_topM\""));
        assert!(json.contains("\"4d_informed\""));
    }
}
