use nalgebra::Vector2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{project, unproject, CameraAction};

pub const DEFAULT_FRUSTUM_SEED: u64 = 0x5eed_f0c5;

// Jitter stays strictly inside each stratum so samples never sit on the
// image border or the depth clip planes.
const JITTER_LO: f64 = 0.05;
const JITTER_HI: f64 = 0.95;

/// Seeded, stratified sample pattern over a camera frustum.
///
/// Samples are stored in normalized form: fractions of image width and
/// height and a fraction of the log-depth interval. Each of the three
/// dimensions is stratified independently (latin hypercube), so the pattern
/// is reproducible and independent of the camera it is later applied to.
#[derive(Debug, Clone)]
pub struct FrustumSampler {
    samples: Vec<[f64; 3]>,
}

impl FrustumSampler {
    pub fn new(count: usize, seed: u64) -> Self {
        let count = count.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims: [Vec<f64>; 3] = Default::default();
        for dim in dims.iter_mut() {
            let mut strata: Vec<usize> = (0..count).collect();
            strata.shuffle(&mut rng);
            *dim = strata
                .into_iter()
                .map(|s| (s as f64 + rng.random_range(JITTER_LO..JITTER_HI)) / count as f64)
                .collect();
        }
        let samples = (0..count)
            .map(|i| [dims[0][i], dims[1][i], dims[2][i]])
            .collect();
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// World-space sample points inside the frustum of `query`, restricted to
    /// `depth_range` intersected with the camera clip range. Empty when that
    /// intersection is empty.
    pub fn world_points(
        &self,
        query: &CameraAction,
        depth_range: (f64, f64),
    ) -> Vec<nalgebra::Vector3<f64>> {
        let k = &query.intrinsics;
        let lo = depth_range.0.max(k.near());
        let hi = depth_range.1.min(k.far());
        if !(lo > 0.0 && lo < hi) {
            return Vec::new();
        }
        let (log_lo, log_hi) = (lo.ln(), hi.ln());
        self.samples
            .iter()
            .filter_map(|s| {
                let pixel = Vector2::new(s[0] * k.width() as f64, s[1] * k.height() as f64);
                let depth = (log_lo + s[2] * (log_hi - log_lo)).exp();
                unproject(&pixel, depth.clamp(lo, hi), query).ok()
            })
            .collect()
    }

    /// Per-sample visibility of the query frustum samples in `candidate`.
    pub fn coverage(
        &self,
        candidate: &CameraAction,
        query: &CameraAction,
        depth_range: (f64, f64),
    ) -> Vec<bool> {
        let points = self.world_points(query, depth_range);
        if points.len() != self.samples.len() {
            return vec![false; self.samples.len()];
        }
        points
            .iter()
            .map(|p| match project(p, candidate) {
                Ok((pixel, depth)) => {
                    candidate.intrinsics.contains_pixel(&pixel)
                        && depth <= candidate.intrinsics.far()
                }
                Err(_) => false,
            })
            .collect()
    }

    pub fn overlap(
        &self,
        candidate: &CameraAction,
        query: &CameraAction,
        depth_range: (f64, f64),
    ) -> f64 {
        let covered = self.coverage(candidate, query, depth_range);
        covered.iter().filter(|c| **c).count() as f64 / covered.len() as f64
    }
}

/// Fraction of the query frustum (uniform over pixels, log-uniform over
/// `depth_range`) that is visible from the candidate camera.
pub fn frustum_overlap(
    candidate: &CameraAction,
    query: &CameraAction,
    samples: usize,
    depth_range: (f64, f64),
) -> f64 {
    FrustumSampler::new(samples, DEFAULT_FRUSTUM_SEED).overlap(candidate, query, depth_range)
}
