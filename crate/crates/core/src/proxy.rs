//! Local point proxy for one query frame.
//!
//! On-time records contribute every pixel with a valid depth. Off-time
//! records contribute only static pixels (dynamic mask clear), so moving
//! objects seen at other times never leak into the query.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EvidenceCorpus, EvidenceRecord, RecordKey};
use crate::geometry::{project, unproject, CameraAction};
use crate::image::Mask;
use crate::retrieval::EvidenceSelection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OnTime,
    OffTimeStatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    MissingRecord,
    MissingDepth,
    MissingMask,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProxyError {
    #[error("record {0}: off-time evidence needs a dynamic mask")]
    MissingMask(RecordKey),
    #[error("no usable proxy points")]
    EmptyProxy { skipped: Vec<(RecordKey, SkipReason)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyPoint {
    pub position: Vector3<f64>,
    pub color: [u8; 3],
    pub source: RecordKey,
    pub pixel: (u32, u32),
    /// Camera-frame depth in the source record, as stored.
    pub depth: f32,
    /// Surface extent of one source pixel at this depth, meters.
    pub footprint: f64,
    pub provenance: Provenance,
    /// Captured at the query time by the query camera itself.
    pub anchored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// Sorted by source `(j, i)`, then pixel row-major.
    pub points: Vec<ProxyPoint>,
    /// Query pixels that an anchored record observed as empty (no valid
    /// depth). Nothing may be drawn there.
    pub anchored_empty: Option<Mask>,
    pub skipped: Vec<(RecordKey, SkipReason)>,
}

impl PointCloud {
    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            anchored_empty: None,
            skipped: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.points.iter().filter(|p| p.provenance == provenance).count()
    }

    /// ASCII PLY point list with color and source columns.
    pub fn to_ply(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ply\nformat ascii 1.0\nelement vertex {}", self.points.len());
        for prop in ["float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"] {
            let _ = writeln!(s, "property {prop}");
        }
        for prop in ["int iteration", "int time", "uchar on_time"] {
            let _ = writeln!(s, "property {prop}");
        }
        s.push_str("end_header\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.color[0],
                p.color[1],
                p.color[2],
                p.source.iteration,
                p.source.time,
                (p.provenance == Provenance::OnTime) as u8
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub frustum_prefilter: bool,
    /// Relative margin around the query image kept by the prefilter.
    pub prefilter_dilation: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            frustum_prefilter: true,
            prefilter_dilation: 0.1,
        }
    }
}

/// Pixels with a valid depth for the record's own camera.
pub fn valid_depth_mask(record: &EvidenceRecord) -> Option<Mask> {
    let depth = record.frame().depth.as_ref()?;
    let k = &record.action().intrinsics;
    let data = depth.as_slice().iter().map(|d| k.valid_depth(*d as f64)).collect();
    Some(Mask::from_vec(depth.width(), depth.height(), data).expect("same dims"))
}

/// Static pixels with valid depth: dynamic mask clear and depth usable.
pub fn static_mask_apply(record: &EvidenceRecord) -> Result<Mask, ProxyError> {
    let dynamic = record
        .frame()
        .dynamic_mask
        .as_ref()
        .ok_or(ProxyError::MissingMask(record.key()))?;
    let valid = valid_depth_mask(record).unwrap_or_else(|| {
        let (w, h) = record.frame().dims();
        Mask::new(w, h)
    });
    let data = valid
        .as_slice()
        .iter()
        .zip(dynamic.as_slice())
        .map(|(v, d)| *v && !*d)
        .collect();
    Ok(Mask::from_vec(valid.width(), valid.height(), data).expect("same dims"))
}

fn in_dilated_frustum(point: &Vector3<f64>, query: &CameraAction, dilation: f64) -> bool {
    let k = &query.intrinsics;
    match project(point, query) {
        Ok((px, z)) => {
            let (w, h) = (k.width() as f64, k.height() as f64);
            z <= k.far() * (1.0 + dilation)
                && px.x >= -dilation * w
                && px.x <= (1.0 + dilation) * w
                && px.y >= -dilation * h
                && px.y <= (1.0 + dilation) * h
        }
        Err(_) => false,
    }
}

fn lift(
    record: &EvidenceRecord,
    keep: &Mask,
    provenance: Provenance,
    anchored: bool,
    query: &CameraAction,
    cfg: &ProxyConfig,
) -> Vec<ProxyPoint> {
    let frame = record.frame();
    let depth = frame.depth.as_ref().expect("caller checked depth");
    let action = record.action();
    let focal = action.intrinsics.focal();
    let w = keep.width();
    keep.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, k)| **k)
        .filter_map(|(idx, _)| {
            let (x, y) = ((idx as u32) % w, (idx as u32) / w);
            let d = depth.as_slice()[idx];
            let center = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let position = unproject(&center, d as f64, action).ok()?;
            if cfg.frustum_prefilter
                && !anchored
                && !in_dilated_frustum(&position, query, cfg.prefilter_dilation)
            {
                return None;
            }
            Some(ProxyPoint {
                position,
                color: frame.rgb.at(idx),
                source: record.key(),
                pixel: (x, y),
                depth: d,
                footprint: d as f64 / focal,
                provenance,
                anchored,
            })
        })
        .collect()
}

/// Builds the point proxy for `query` from the selected records.
pub fn build_proxy(
    query: &CameraAction,
    selection: &EvidenceSelection,
    corpus: &EvidenceCorpus,
    cfg: &ProxyConfig,
) -> Result<PointCloud, ProxyError> {
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    let mut keys = selection.keys();
    keys.sort();
    for key in keys {
        let Some(record) = corpus.get(key) else {
            skipped.push((key, SkipReason::MissingRecord));
            continue;
        };
        let Some(valid) = valid_depth_mask(record) else {
            skipped.push((key, SkipReason::MissingDepth));
            continue;
        };
        if key.time == selection.query_time {
            let anchored = record.time() == query.time && record.action().same_camera(query);
            jobs.push((record, valid, Provenance::OnTime, anchored));
        } else {
            match static_mask_apply(record) {
                Ok(keep) => jobs.push((record, keep, Provenance::OffTimeStatic, false)),
                Err(e) => {
                    warn!("{e}; record skipped");
                    skipped.push((key, SkipReason::MissingMask));
                }
            }
        }
    }

    let mut anchored_empty: Option<Mask> = None;
    for (record, _, _, anchored) in &jobs {
        if *anchored {
            let valid = valid_depth_mask(record).expect("checked above");
            let empty = Mask::from_vec(
                valid.width(),
                valid.height(),
                valid.as_slice().iter().map(|v| !v).collect(),
            )
            .expect("same dims");
            anchored_empty = Some(match anchored_empty {
                Some(prev) => prev.and(&empty),
                None => empty,
            });
        }
    }

    let per_record: Vec<Vec<ProxyPoint>> = jobs
        .par_iter()
        .map(|(record, keep, prov, anchored)| lift(record, keep, *prov, *anchored, query, cfg))
        .collect();
    let points: Vec<ProxyPoint> = per_record.into_iter().flatten().collect();
    if points.is_empty() && anchored_empty.is_none() {
        return Err(ProxyError::EmptyProxy { skipped });
    }
    Ok(PointCloud {
        points,
        anchored_empty,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ActionSequence, CameraIntrinsics, Pose};
    use crate::image::{DepthMap, Frame, RgbImage};
    use crate::retrieval::{RelevanceTerms, ScoredIndex};

    const W: u32 = 8;
    const H: u32 = 6;

    fn action(t: u32) -> CameraAction {
        let k = CameraIntrinsics::centered(10.0, W, H, 0.1, 50.0).unwrap();
        CameraAction::new(k, Pose::identity(), t)
    }

    fn record_frame(dynamic: impl Fn(u32, u32) -> bool, sky: impl Fn(u32, u32) -> bool) -> Frame {
        let depth = (0..W * H)
            .map(|i| if sky(i % W, i / W) { 0.0 } else { 4.0 + (i % 3) as f32 })
            .collect();
        Frame::new(
            RgbImage::from_raw(W, H, (0..W * H * 3).map(|v| v as u8).collect()).unwrap(),
            Some(DepthMap::from_vec(W, H, depth).unwrap()),
            Some(Mask::from_fn(W, H, dynamic)),
        )
        .unwrap()
    }

    fn select(t: u32, keys: &[(u32, u32)]) -> EvidenceSelection {
        EvidenceSelection {
            query_time: t,
            indices: keys
                .iter()
                .map(|(j, i)| ScoredIndex {
                    key: RecordKey::new(*j, *i),
                    terms: RelevanceTerms {
                        overlap: 1.0,
                        temporal: 1.0,
                        scale: 1.0,
                        score: 1.0,
                    },
                })
                .collect(),
            skipped: vec![],
        }
    }

    fn corpus(frames: Vec<Option<Frame>>) -> EvidenceCorpus {
        let seq = ActionSequence::constant(&action(1), frames.len() as u32).unwrap();
        EvidenceCorpus::new(frames.len() as u32)
            .add_partial_iteration(&seq, frames)
            .unwrap()
    }

    #[test]
    fn on_time_record_contributes_every_pixel() {
        let c = corpus(vec![Some(record_frame(|x, _| x < 4, |_, _| false))]);
        let cloud = build_proxy(&action(1), &select(1, &[(1, 1)]), &c, &ProxyConfig::default())
            .unwrap();
        assert_eq!(cloud.len(), (W * H) as usize);
        assert_eq!(cloud.count(Provenance::OnTime), cloud.len());
        assert!(cloud.points.iter().all(|p| p.anchored));
    }

    #[test]
    fn fully_dynamic_off_time_record_is_empty() {
        let c = corpus(vec![Some(record_frame(|_, _| true, |_, _| false)), None]);
        let err = build_proxy(&action(2), &select(2, &[(1, 1)]), &c, &ProxyConfig::default())
            .unwrap_err();
        assert!(matches!(err, ProxyError::EmptyProxy { .. }));
    }

    #[test]
    fn static_mask_counts() {
        let c = corpus(vec![Some(record_frame(|_, y| y < 3, |x, _| x == 0))]);
        let r = c.records().next().unwrap();
        let keep = static_mask_apply(r).unwrap();
        // Rows 3..6 survive, minus the sky column.
        assert_eq!(keep.count(), 3 * (W as usize - 1));
        let none = corpus(vec![Some(record_frame(|_, _| false, |_, _| false))]);
        assert_eq!(static_mask_apply(none.records().next().unwrap()).unwrap().count(), 48);
    }

    #[test]
    fn off_time_without_mask_is_skipped() {
        let f = Frame::new(
            RgbImage::filled(W, H, [1, 2, 3]),
            Some(DepthMap::from_vec(W, H, vec![3.0; (W * H) as usize]).unwrap()),
            None,
        )
        .unwrap();
        let c = corpus(vec![Some(f), Some(record_frame(|_, _| false, |_, _| false))]);
        let cloud = build_proxy(&action(2), &select(2, &[(1, 1), (1, 2)]), &c, &ProxyConfig::default())
            .unwrap();
        assert_eq!(cloud.skipped, vec![(RecordKey::new(1, 1), SkipReason::MissingMask)]);
        assert_eq!(cloud.len(), (W * H) as usize);
    }

    #[test]
    fn points_reproject_to_their_source_pixels() {
        let c = corpus(vec![Some(record_frame(|_, _| false, |x, y| x == y))]);
        let cloud = build_proxy(&action(1), &select(1, &[(1, 1)]), &c, &ProxyConfig::default())
            .unwrap();
        for p in &cloud.points {
            let (px, z) = project(&p.position, &action(1)).unwrap();
            assert!((px.x - (p.pixel.0 as f64 + 0.5)).abs() < 1e-6);
            assert!((px.y - (p.pixel.1 as f64 + 0.5)).abs() < 1e-6);
            assert!((z - p.depth as f64).abs() < 1e-9);
        }
        assert_eq!(cloud.anchored_empty.as_ref().unwrap().count(), H as usize);
    }

    #[test]
    fn ply_has_one_line_per_point() {
        let c = corpus(vec![Some(record_frame(|_, _| false, |_, _| false))]);
        let cloud = build_proxy(&action(1), &select(1, &[(1, 1)]), &c, &ProxyConfig::default())
            .unwrap();
        let ply = cloud.to_ply();
        let body = ply.split("end_header\n").nth(1).unwrap();
        assert_eq!(body.lines().count(), cloud.len());
    }
}
