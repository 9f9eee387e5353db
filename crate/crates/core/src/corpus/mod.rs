//! Append-only history of `(frame, action)` observations, indexed by
//! iteration `j >= 1` and time `i` in `1..=T`.
//!
//! A corpus value is an immutable snapshot. [`EvidenceCorpus::add_iteration`]
//! returns a new snapshot and leaves the old one untouched; records are
//! shared between snapshots through `Arc`.

pub mod codec;
mod persist;

pub use persist::{CorpusManifest, ManifestIteration, ManifestRecord, MANIFEST_FILE};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{ActionSequence, CameraAction};
use crate::image::Frame;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("expected {expected} frames for horizon, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("record {key}: frame is {frame_w}x{frame_h} but the action expects {action_w}x{action_h}")]
    DimensionMismatch {
        key: RecordKey,
        frame_w: u32,
        frame_h: u32,
        action_w: u32,
        action_h: u32,
    },
    #[error("record {key}: action time {action_time} does not match record time")]
    TimeMismatch { key: RecordKey, action_time: u32 },
    #[error("horizon mismatch: corpus has T = {corpus}, actions have T = {actions}")]
    HorizonMismatch { corpus: u32, actions: u32 },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("record {key}: missing file {file}")]
    MissingFile { key: RecordKey, file: String },
    #[error("record {key}: checksum mismatch for {file}")]
    ChecksumMismatch { key: RecordKey, file: String },
    #[error("record {key}: bad {what} data: {reason}")]
    BadData {
        key: RecordKey,
        what: &'static str,
        reason: String,
    },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `(j, i)`: iteration and time index of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordKey {
    pub iteration: u32,
    pub time: u32,
}

impl RecordKey {
    pub fn new(iteration: u32, time: u32) -> Self {
        Self { iteration, time }
    }
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.iteration, self.time)
    }
}

#[derive(Debug, Clone)]
pub struct EvidenceRecord {
    key: RecordKey,
    frame: Frame,
    action: CameraAction,
    mean_depth: Option<f64>,
}

impl EvidenceRecord {
    pub fn new(key: RecordKey, frame: Frame, action: CameraAction) -> Result<Self, CorpusError> {
        let (fw, fh) = frame.dims();
        let k = &action.intrinsics;
        if (fw, fh) != (k.width(), k.height()) {
            return Err(CorpusError::DimensionMismatch {
                key,
                frame_w: fw,
                frame_h: fh,
                action_w: k.width(),
                action_h: k.height(),
            });
        }
        if action.time != key.time {
            return Err(CorpusError::TimeMismatch {
                key,
                action_time: action.time,
            });
        }
        let mean_depth = frame.depth.as_ref().and_then(|d| {
            let (sum, n) = d
                .as_slice()
                .iter()
                .filter(|v| **v > 0.0)
                .fold((0.0f64, 0usize), |(s, n), v| (s + *v as f64, n + 1));
            (n > 0).then(|| sum / n as f64)
        });
        Ok(Self {
            key,
            frame,
            action,
            mean_depth,
        })
    }

    pub fn key(&self) -> RecordKey {
        self.key
    }
    pub fn iteration(&self) -> u32 {
        self.key.iteration
    }
    pub fn time(&self) -> u32 {
        self.key.time
    }
    pub fn frame(&self) -> &Frame {
        &self.frame
    }
    pub fn action(&self) -> &CameraAction {
        &self.action
    }
    /// Mean of the valid depths, when the frame has any.
    pub fn mean_depth(&self) -> Option<f64> {
        self.mean_depth
    }
    /// Records without depth cannot be lifted into the point proxy.
    pub fn has_depth(&self) -> bool {
        self.frame.depth.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceCorpus {
    horizon: u32,
    /// Full action sequence of every executed iteration, including time
    /// steps whose frames were not observed.
    iterations: Vec<Arc<ActionSequence>>,
    records: BTreeMap<RecordKey, Arc<EvidenceRecord>>,
}

impl PartialEq for EvidenceRecord {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.action == other.action && self.frame.bit_eq(&other.frame)
    }
}

impl EvidenceCorpus {
    pub fn new(horizon: u32) -> Self {
        Self {
            horizon,
            iterations: Vec::new(),
            records: BTreeMap::new(),
        }
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Number of completed iterations, `k - 1`.
    pub fn iteration_count(&self) -> u32 {
        self.iterations.len() as u32
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: RecordKey) -> Option<&EvidenceRecord> {
        self.records.get(&key).map(Arc::as_ref)
    }

    /// Records in `(j, i)` order.
    pub fn records(&self) -> impl Iterator<Item = &EvidenceRecord> {
        self.records.values().map(Arc::as_ref)
    }

    pub fn keys(&self) -> impl Iterator<Item = RecordKey> + '_ {
        self.records.keys().copied()
    }

    /// Action sequence executed at 1-based iteration `j`.
    pub fn iteration_actions(&self, j: u32) -> Option<&ActionSequence> {
        j.checked_sub(1)
            .and_then(|i| self.iterations.get(i as usize))
            .map(Arc::as_ref)
    }

    /// Appends a fully observed iteration.
    pub fn add_iteration(
        &self,
        actions: &ActionSequence,
        frames: Vec<Frame>,
    ) -> Result<Self, CorpusError> {
        self.add_partial_iteration(actions, frames.into_iter().map(Some).collect())
    }

    /// Appends an iteration in which some time steps produced no frame.
    /// `frames` still has one slot per time step.
    pub fn add_partial_iteration(
        &self,
        actions: &ActionSequence,
        frames: Vec<Option<Frame>>,
    ) -> Result<Self, CorpusError> {
        if actions.horizon() != self.horizon {
            return Err(CorpusError::HorizonMismatch {
                corpus: self.horizon,
                actions: actions.horizon(),
            });
        }
        if frames.len() != self.horizon as usize {
            return Err(CorpusError::LengthMismatch {
                expected: self.horizon as usize,
                got: frames.len(),
            });
        }
        let j = self.iteration_count() + 1;
        let mut next = self.clone();
        for (action, frame) in actions.iter().zip(frames) {
            if let Some(frame) = frame {
                let key = RecordKey::new(j, action.time);
                let record = EvidenceRecord::new(key, frame, *action)?;
                next.records.insert(key, Arc::new(record));
            }
        }
        next.iterations.push(Arc::new(actions.clone()));
        Ok(next)
    }

    /// Content hash over actions and all pixel, depth and mask data.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.horizon.to_le_bytes());
        for seq in &self.iterations {
            h.update(serde_json::to_vec(seq.as_ref()).expect("actions serialize"));
        }
        for (key, rec) in &self.records {
            h.update(key.iteration.to_le_bytes());
            h.update(key.time.to_le_bytes());
            h.update(rec.frame.rgb.as_raw());
            match &rec.frame.depth {
                Some(d) => {
                    h.update([1u8]);
                    for v in d.as_slice() {
                        h.update(v.to_le_bytes());
                    }
                }
                None => h.update([0u8]),
            }
            match &rec.frame.dynamic_mask {
                Some(m) => {
                    h.update([1u8]);
                    h.update(m.as_slice().iter().map(|b| *b as u8).collect::<Vec<_>>());
                }
                None => h.update([0u8]),
            }
        }
        hex::encode(h.finalize())
    }
}
