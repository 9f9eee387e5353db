//! Projection of the point proxy into the query camera, followed by
//! scale-aware densification of sparse support.

use serde::{Deserialize, Serialize};

use crate::corpus::{EvidenceCorpus, RecordKey};
use crate::fill::{distance_to_set, pull_push, to_rgb8};
use crate::geometry::{project, CameraAction};
use crate::image::{DepthMap, Mask, RgbImage};
use crate::proxy::{build_proxy, PointCloud, Provenance, ProxyConfig, ProxyError};
use crate::retrieval::EvidenceSelection;

const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderConfig {
    /// Support fraction at or above which densification is skipped.
    pub dense_threshold: f64,
    /// Pull steps at native scale; zoom adds `ceil(log2(zoom))`.
    pub base_levels: u32,
    /// Largest distance, in native-scale pixels, at which a filled pixel
    /// still counts as supported.
    pub max_fill_radius: f64,
    /// Upper bound on the side of one splat, pixels.
    pub max_splat: u32,
    pub proxy: ProxyConfig,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            dense_threshold: 0.6,
            base_levels: 3,
            max_fill_radius: 8.0,
            max_splat: 32,
            proxy: ProxyConfig::default(),
        }
    }
}

/// Where a decoded pixel's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelOrigin {
    None,
    Splat { source: RecordKey, provenance: Provenance },
    Fill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartialObservation {
    pub rgb: RgbImage,
    pub support_mask: Mask,
    pub support_density: f64,
    /// Query-camera depth of the winning point; 0 where nothing landed.
    pub depth_buffer: DepthMap,
    pub origin: Vec<PixelOrigin>,
    /// Pixels known to be empty from anchored evidence; never filled.
    pub blocked: Mask,
}

impl PartialObservation {
    pub fn unsupported(query: &CameraAction) -> Self {
        let (w, h) = (query.intrinsics.width(), query.intrinsics.height());
        Self {
            rgb: RgbImage::new(w, h),
            support_mask: Mask::new(w, h),
            support_density: 0.0,
            depth_buffer: DepthMap::new(w, h),
            origin: vec![PixelOrigin::None; w as usize * h as usize],
            blocked: Mask::new(w, h),
        }
    }

    pub fn dims(&self) -> (u32, u32) {
        self.rgb.dims()
    }

    fn refresh_density(&mut self) {
        self.support_density = self.support_mask.fraction();
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    z: f64,
    anchored: bool,
    on_time: bool,
    key: RecordKey,
    point: usize,
}

/// True when `a` should replace `b` in the z-buffer.
fn beats(a: &Candidate, b: &Candidate) -> bool {
    if a.anchored != b.anchored {
        return a.anchored;
    }
    if (a.z - b.z).abs() <= TIE_TOLERANCE {
        if a.on_time != b.on_time {
            return a.on_time;
        }
        return (a.key, a.point) < (b.key, b.point);
    }
    a.z < b.z
}

/// Z-buffered square splats of every proxy point.
pub fn splat(cloud: &PointCloud, query: &CameraAction, cfg: &DecoderConfig) -> PartialObservation {
    let k = &query.intrinsics;
    let (w, h) = (k.width() as i64, k.height() as i64);
    let f_q = k.focal();
    let mut zbuf: Vec<Option<Candidate>> = vec![None; (w * h) as usize];
    for (idx, p) in cloud.points.iter().enumerate() {
        let Ok((px, z)) = project(&p.position, query) else {
            continue;
        };
        if z > k.far() {
            continue;
        }
        let side = (f_q * p.footprint / z).round().clamp(1.0, cfg.max_splat as f64) as i64;
        let x0 = (px.x - side as f64 / 2.0 + 0.5).floor() as i64;
        let y0 = (px.y - side as f64 / 2.0 + 0.5).floor() as i64;
        let cand = Candidate {
            z,
            anchored: p.anchored,
            on_time: p.provenance == Provenance::OnTime,
            key: p.source,
            point: idx,
        };
        for y in y0.max(0)..(y0 + side).min(h) {
            for x in x0.max(0)..(x0 + side).min(w) {
                let slot = &mut zbuf[(y * w + x) as usize];
                if slot.as_ref().is_none_or(|cur| beats(&cand, cur)) {
                    *slot = Some(cand);
                }
            }
        }
    }

    let mut out = PartialObservation::unsupported(query);
    if let Some(empty) = &cloud.anchored_empty {
        if empty.dims() == out.dims() {
            out.blocked = empty.clone();
        }
    }
    for (i, slot) in zbuf.iter().enumerate() {
        let Some(c) = slot else { continue };
        if out.blocked.as_slice()[i] && !c.anchored {
            continue;
        }
        let p = &cloud.points[c.point];
        out.rgb.set_at(i, p.color);
        out.support_mask.as_mut_slice()[i] = true;
        out.depth_buffer.as_mut_slice()[i] = c.z as f32;
        out.origin[i] = PixelOrigin::Splat {
            source: p.source,
            provenance: p.provenance,
        };
    }
    out.refresh_density();
    out
}

/// Pull-push fill of sparse support. Identity when the support density
/// already reaches the threshold.
pub fn densify(partial: &PartialObservation, zoom_ratio: f64, cfg: &DecoderConfig) -> PartialObservation {
    if partial.support_density >= cfg.dense_threshold || !partial.support_mask.any() {
        return partial.clone();
    }
    let zoom = if zoom_ratio.is_finite() && zoom_ratio > 0.0 { zoom_ratio } else { 1.0 };
    let extra = zoom.log2().ceil().max(0.0) as usize;
    let levels = cfg.base_levels as usize + extra;
    let radius = (cfg.max_fill_radius * zoom).max(1.0);

    let (colors, filled) = pull_push(&partial.rgb, &partial.support_mask, Some(levels));
    let distance = distance_to_set(&partial.support_mask);
    let mut out = partial.clone();
    for i in 0..colors.len() {
        if partial.support_mask.as_slice()[i] || partial.blocked.as_slice()[i] {
            continue;
        }
        if filled[i] && distance[i] <= radius {
            out.rgb.set_at(i, to_rgb8(colors[i]));
            out.support_mask.as_mut_slice()[i] = true;
            out.origin[i] = PixelOrigin::Fill;
        }
    }
    out.refresh_density();
    out
}

/// Query focal over the median focal of the selected sources.
pub fn zoom_ratio(query: &CameraAction, selection: &EvidenceSelection, corpus: &EvidenceCorpus) -> f64 {
    let mut focals: Vec<f64> = selection
        .keys()
        .into_iter()
        .filter_map(|k| corpus.get(k))
        .map(|r| r.action().intrinsics.focal())
        .collect();
    if focals.is_empty() {
        return 1.0;
    }
    focals.sort_by(f64::total_cmp);
    let n = focals.len();
    let median = if n % 2 == 1 {
        focals[n / 2]
    } else {
        0.5 * (focals[n / 2 - 1] + focals[n / 2])
    };
    query.intrinsics.focal() / median
}

/// Proxy, splat and densify for one query frame. An empty proxy yields an
/// all-unsupported observation.
pub fn decode(
    query: &CameraAction,
    selection: &EvidenceSelection,
    corpus: &EvidenceCorpus,
    cfg: &DecoderConfig,
) -> PartialObservation {
    let cloud = match build_proxy(query, selection, corpus, &cfg.proxy) {
        Ok(cloud) => cloud,
        Err(ProxyError::EmptyProxy { .. }) | Err(ProxyError::MissingMask(_)) => {
            return PartialObservation::unsupported(query)
        }
    };
    let splatted = splat(&cloud, query, cfg);
    densify(&splatted, zoom_ratio(query, selection, corpus), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::proxy::ProxyPoint;
    use nalgebra::{Vector2, Vector3};

    fn query() -> CameraAction {
        let k = CameraIntrinsics::centered(10.0, 12, 10, 0.1, 50.0).unwrap();
        CameraAction::new(k, Pose::identity(), 1)
    }

    fn point(pixel: (u32, u32), depth: f64, color: [u8; 3], key: RecordKey) -> ProxyPoint {
        let q = query();
        let c = Vector2::new(pixel.0 as f64 + 0.5, pixel.1 as f64 + 0.5);
        ProxyPoint {
            position: crate::geometry::unproject(&c, depth, &q).unwrap(),
            color,
            source: key,
            pixel,
            depth: depth as f32,
            footprint: depth / 10.0,
            provenance: Provenance::OnTime,
            anchored: false,
        }
    }

    fn cloud(points: Vec<ProxyPoint>) -> PointCloud {
        PointCloud {
            points,
            anchored_empty: None,
            skipped: vec![],
        }
    }

    #[test]
    fn empty_cloud_has_no_support() {
        let out = splat(&PointCloud::empty(), &query(), &DecoderConfig::default());
        assert_eq!(out.support_density, 0.0);
        assert!(out.rgb.as_raw().iter().all(|v| *v == 0));
    }

    #[test]
    fn nearer_point_wins() {
        let key = RecordKey::new(1, 1);
        let c = cloud(vec![point((3, 4), 5.0, [1, 1, 1], key), point((3, 4), 2.0, [9, 9, 9], key)]);
        let out = splat(&c, &query(), &DecoderConfig::default());
        assert_eq!(out.rgb.get(3, 4), [9, 9, 9]);
        assert_eq!(out.support_mask.count(), 1);
    }

    #[test]
    fn ties_prefer_on_time_then_lower_key() {
        let mut off = point((2, 2), 3.0, [5, 5, 5], RecordKey::new(1, 1));
        off.provenance = Provenance::OffTimeStatic;
        let on = point((2, 2), 3.0, [7, 7, 7], RecordKey::new(2, 1));
        let out = splat(&cloud(vec![off.clone(), on]), &query(), &DecoderConfig::default());
        assert_eq!(out.rgb.get(2, 2), [7, 7, 7]);
        let a = point((2, 2), 3.0, [1, 0, 0], RecordKey::new(3, 1));
        let b = point((2, 2), 3.0, [2, 0, 0], RecordKey::new(2, 1));
        let out = splat(&cloud(vec![a, b]), &query(), &DecoderConfig::default());
        assert_eq!(out.rgb.get(2, 2), [2, 0, 0]);
    }

    #[test]
    fn anchored_points_override_nearer_ones() {
        let mut anchor = point((5, 5), 8.0, [200, 0, 0], RecordKey::new(2, 1));
        anchor.anchored = true;
        let near = point((5, 5), 1.0, [0, 200, 0], RecordKey::new(1, 1));
        let out = splat(&cloud(vec![near, anchor]), &query(), &DecoderConfig::default());
        assert_eq!(out.rgb.get(5, 5), [200, 0, 0]);
    }

    #[test]
    fn zoomed_query_grows_splats() {
        let key = RecordKey::new(1, 1);
        let c = cloud(vec![point((6, 5), 4.0, [3, 3, 3], key)]);
        let mut q = query();
        q.intrinsics = q.intrinsics.zoomed(3.0).unwrap();
        let out = splat(&c, &q, &DecoderConfig::default());
        assert_eq!(out.support_mask.count(), 9);
    }

    #[test]
    fn dense_support_is_left_alone() {
        let key = RecordKey::new(1, 1);
        let pts = (0..10)
            .flat_map(|y| (0..12).map(move |x| (x, y)))
            .map(|p| point(p, 4.0, [8, 8, 8], key))
            .collect();
        let out = splat(&cloud(pts), &query(), &DecoderConfig::default());
        assert_eq!(out.support_density, 1.0);
        assert_eq!(densify(&out, 1.0, &DecoderConfig::default()), out);
    }

    #[test]
    fn isolated_support_fills_only_near_field() {
        let k = CameraIntrinsics::centered(10.0, 64, 48, 0.1, 50.0).unwrap();
        let q = CameraAction::new(k, Pose::identity(), 1);
        let mut partial = PartialObservation::unsupported(&q);
        partial.rgb.put(10, 10, [90, 90, 90]);
        partial.support_mask.set(10, 10, true);
        partial.refresh_density();
        let cfg = DecoderConfig {
            base_levels: 10,
            ..Default::default()
        };
        let out = densify(&partial, 1.0, &cfg);
        for y in 0..48u32 {
            for x in 0..64u32 {
                let d = ((x as f64 - 10.0).powi(2) + (y as f64 - 10.0).powi(2)).sqrt();
                assert_eq!(out.support_mask.get(x, y), d <= 8.0, "({x}, {y})");
                if !out.support_mask.get(x, y) {
                    assert_eq!(out.rgb.get(x, y), [0, 0, 0]);
                }
            }
        }
    }

    #[test]
    fn blocked_pixels_stay_empty() {
        let mut partial = PartialObservation::unsupported(&query());
        partial.support_mask.set(0, 0, true);
        partial.rgb.put(0, 0, [50, 50, 50]);
        partial.blocked.set(1, 0, true);
        partial.refresh_density();
        let out = densify(&partial, 1.0, &DecoderConfig::default());
        assert!(!out.support_mask.get(1, 0));
        assert!(out.support_mask.get(0, 1));
    }

    #[test]
    fn behind_camera_points_are_ignored() {
        let mut p = point((1, 1), 2.0, [1, 1, 1], RecordKey::new(1, 1));
        p.position = Vector3::new(0.0, 0.0, -3.0);
        assert_eq!(splat(&cloud(vec![p]), &query(), &DecoderConfig::default()).support_density, 0.0);
    }
}
