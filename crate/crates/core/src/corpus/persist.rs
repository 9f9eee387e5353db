use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::codec::{self, CodecError};
use super::{CorpusError, EvidenceCorpus, EvidenceRecord, RecordKey};
use crate::geometry::{ActionSequence, CameraAction};
use crate::image::Frame;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "aw4re-corpus/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub horizon: u32,
    pub iterations: Vec<ManifestIteration>,
    pub records: Vec<ManifestRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestIteration {
    pub iteration: u32,
    pub actions: String,
    pub actions_sha256: String,
}

/// One record's files, relative to the corpus directory. Depth and mask are
/// optional for imported data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub iteration: u32,
    pub time: u32,
    pub rgb: String,
    pub rgb_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_sha256: Option<String>,
    pub action: String,
    pub action_sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8]) -> Result<String, CorpusError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(sha256_hex(bytes))
}

fn codec_err(key: RecordKey, what: &'static str) -> impl FnOnce(CodecError) -> CorpusError {
    move |e| CorpusError::BadData {
        key,
        what,
        reason: e.to_string(),
    }
}

impl EvidenceCorpus {
    /// Writes the corpus to `dir` (created if needed). Output is a pure
    /// function of the corpus contents.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CorpusError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut iterations = Vec::with_capacity(self.iterations.len());
        for (idx, seq) in self.iterations.iter().enumerate() {
            let j = idx as u32 + 1;
            let rel = format!("iterations/{j:04}_actions.json");
            let bytes = serde_json::to_vec_pretty(seq.as_ref()).expect("actions serialize");
            let sha = write_file(dir, &rel, &bytes)?;
            iterations.push(ManifestIteration {
                iteration: j,
                actions: rel,
                actions_sha256: sha,
            });
        }
        let mut records = Vec::with_capacity(self.records.len());
        for (key, rec) in &self.records {
            let stem = format!("records/j{:04}_t{:04}", key.iteration, key.time);
            let frame = &rec.frame;
            let rgb_rel = format!("{stem}_rgb.png");
            let rgb_sha = write_file(
                dir,
                &rgb_rel,
                &codec::encode_rgb_png(&frame.rgb).map_err(codec_err(*key, "rgb"))?,
            )?;
            let (depth, depth_sha256) = match &frame.depth {
                Some(d) => {
                    let rel = format!("{stem}_depth.bin");
                    let sha = write_file(dir, &rel, &codec::encode_depth(d))?;
                    (Some(rel), Some(sha))
                }
                None => (None, None),
            };
            let (mask, mask_sha256) = match &frame.dynamic_mask {
                Some(m) => {
                    let rel = format!("{stem}_mask.png");
                    let bytes = codec::encode_mask_png(m).map_err(codec_err(*key, "mask"))?;
                    let sha = write_file(dir, &rel, &bytes)?;
                    (Some(rel), Some(sha))
                }
                None => (None, None),
            };
            let action_rel = format!("{stem}_action.json");
            let action_bytes = serde_json::to_vec_pretty(&rec.action).expect("action serializes");
            let action_sha = write_file(dir, &action_rel, &action_bytes)?;
            records.push(ManifestRecord {
                iteration: key.iteration,
                time: key.time,
                rgb: rgb_rel,
                rgb_sha256: rgb_sha,
                depth,
                depth_sha256,
                mask,
                mask_sha256,
                action: action_rel,
                action_sha256: action_sha,
            });
        }
        let manifest = CorpusManifest {
            format: FORMAT.to_string(),
            horizon: self.horizon,
            iterations,
            records,
        };
        let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        write_file(dir, MANIFEST_FILE, &bytes)?;
        Ok(())
    }

    /// Reads a corpus directory written by [`EvidenceCorpus::save`] or by any
    /// external tool following the same layout. Every file is checked
    /// against its manifest checksum.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let manifest_path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&manifest_path).map_err(|e| {
            CorpusError::CorruptManifest(format!("cannot read {}: {e}", manifest_path.display()))
        })?;
        let manifest: CorpusManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CorpusError::CorruptManifest(e.to_string()))?;
        if manifest.format != FORMAT {
            return Err(CorpusError::CorruptManifest(format!(
                "unknown format {:?}",
                manifest.format
            )));
        }
        if manifest.horizon == 0 {
            return Err(CorpusError::CorruptManifest("horizon must be >= 1".into()));
        }

        let mut iterations = Vec::with_capacity(manifest.iterations.len());
        for (idx, it) in manifest.iterations.iter().enumerate() {
            let j = idx as u32 + 1;
            if it.iteration != j {
                return Err(CorpusError::CorruptManifest(format!(
                    "iteration entries must be numbered 1..; found {} at position {idx}",
                    it.iteration
                )));
            }
            let key = RecordKey::new(j, 0);
            let bytes = read_checked(dir, key, &it.actions, &it.actions_sha256)?;
            let seq: ActionSequence = serde_json::from_slice(&bytes)
                .map_err(|e| CorpusError::CorruptManifest(format!("iteration {j} actions: {e}")))?;
            if seq.horizon() != manifest.horizon {
                return Err(CorpusError::HorizonMismatch {
                    corpus: manifest.horizon,
                    actions: seq.horizon(),
                });
            }
            iterations.push(Arc::new(seq));
        }

        let mut records = BTreeMap::new();
        for r in &manifest.records {
            let key = RecordKey::new(r.iteration, r.time);
            if r.iteration == 0 || r.iteration as usize > iterations.len() {
                return Err(CorpusError::CorruptManifest(format!(
                    "record {key} refers to an unknown iteration"
                )));
            }
            if r.time == 0 || r.time > manifest.horizon {
                return Err(CorpusError::CorruptManifest(format!(
                    "record {key} lies outside the horizon"
                )));
            }
            let rgb = codec::decode_rgb_png(&read_checked(dir, key, &r.rgb, &r.rgb_sha256)?)
                .map_err(codec_err(key, "rgb"))?;
            let depth = match (&r.depth, &r.depth_sha256) {
                (Some(file), Some(sha)) => Some(
                    codec::decode_depth(&read_checked(dir, key, file, sha)?)
                        .map_err(codec_err(key, "depth"))?,
                ),
                (None, None) => None,
                _ => {
                    return Err(CorpusError::CorruptManifest(format!(
                        "record {key}: depth file and checksum must appear together"
                    )))
                }
            };
            let mask = match (&r.mask, &r.mask_sha256) {
                (Some(file), Some(sha)) => Some(
                    codec::decode_mask_png(&read_checked(dir, key, file, sha)?)
                        .map_err(codec_err(key, "mask"))?,
                ),
                (None, None) => None,
                _ => {
                    return Err(CorpusError::CorruptManifest(format!(
                        "record {key}: mask file and checksum must appear together"
                    )))
                }
            };
            let action: CameraAction =
                serde_json::from_slice(&read_checked(dir, key, &r.action, &r.action_sha256)?)
                    .map_err(|e| CorpusError::BadData {
                        key,
                        what: "action",
                        reason: e.to_string(),
                    })?;
            let planned = iterations[r.iteration as usize - 1].at(r.time).copied();
            if planned != Some(action) {
                return Err(CorpusError::CorruptManifest(format!(
                    "record {key}: action differs from the iteration's action sequence"
                )));
            }
            let frame = Frame::new(rgb, depth, mask).map_err(|e| CorpusError::BadData {
                key,
                what: "frame",
                reason: e.to_string(),
            })?;
            let record = EvidenceRecord::new(key, frame, action)?;
            if records.insert(key, Arc::new(record)).is_some() {
                return Err(CorpusError::CorruptManifest(format!("duplicate record {key}")));
            }
        }
        Ok(EvidenceCorpus {
            horizon: manifest.horizon,
            iterations,
            records,
        })
    }
}

fn read_checked(dir: &Path, key: RecordKey, rel: &str, sha: &str) -> Result<Vec<u8>, CorpusError> {
    let path = dir.join(rel);
    let bytes = fs::read(&path).map_err(|_| CorpusError::MissingFile {
        key,
        file: rel.to_string(),
    })?;
    if !sha256_hex(&bytes).eq_ignore_ascii_case(sha) {
        return Err(CorpusError::ChecksumMismatch {
            key,
            file: rel.to_string(),
        });
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::image::{DepthMap, Mask, RgbImage};

    fn corpus() -> EvidenceCorpus {
        let k = CameraIntrinsics::centered(10.0, 5, 3, 0.1, 10.0).unwrap();
        let seq = ActionSequence::constant(&CameraAction::new(k, Pose::identity(), 1), 3).unwrap();
        let frame = |v: u8| {
            Frame::new(
                RgbImage::from_raw(5, 3, (0..45).map(|p| (p as u8).wrapping_mul(v)).collect())
                    .unwrap(),
                Some(DepthMap::from_vec(5, 3, (0..15).map(|p| 0.1 + p as f32 / 7.0).collect()).unwrap()),
                Some(Mask::from_fn(5, 3, |x, y| (x + y) % 2 == 0)),
            )
            .unwrap()
        };
        EvidenceCorpus::new(3)
            .add_partial_iteration(&seq, vec![Some(frame(3)), None, Some(frame(5))])
            .unwrap()
            .add_iteration(
                &seq,
                vec![
                    frame(7),
                    Frame::new(RgbImage::filled(5, 3, [1, 2, 3]), None, None).unwrap(),
                    frame(11),
                ],
            )
            .unwrap()
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let c = corpus();
        c.save(dir.path()).unwrap();
        let back = EvidenceCorpus::load(dir.path()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
    }

    #[test]
    fn save_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        corpus().save(a.path()).unwrap();
        corpus().save(b.path()).unwrap();
        let ma = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        let mb = fs::read(b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn missing_file_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        corpus().save(dir.path()).unwrap();
        fs::remove_file(dir.path().join("records/j0002_t0003_depth.bin")).unwrap();
        let err = EvidenceCorpus::load(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile { key, .. } if key == RecordKey::new(2, 3)));
        assert!(err.to_string().contains("(2, 3)"));
    }

    #[test]
    fn tampered_file_fails_checksum() {
        let dir = tempfile::tempdir().unwrap();
        corpus().save(dir.path()).unwrap();
        let path = dir.path().join("records/j0001_t0001_rgb.png");
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        let err = EvidenceCorpus::load(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::ChecksumMismatch { key, .. } if key == RecordKey::new(1, 1)));
    }

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            EvidenceCorpus::load(dir.path()),
            Err(CorpusError::CorruptManifest(_))
        ));
    }
}
