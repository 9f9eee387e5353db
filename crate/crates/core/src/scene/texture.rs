use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Two-color value-noise albedo, evaluated over 3D surface coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub base: [f64; 3],
    pub accent: [f64; 3],
    /// Lattice cells per meter of the first octave.
    pub frequency: f64,
    pub seed: u64,
}

impl TextureParams {
    pub fn albedo(&self, p: &Vector3<f64>) -> [f64; 3] {
        let q = p * self.frequency;
        let n1 = value_noise(&q, self.seed);
        let n2 = value_noise(&(q * 2.7 + Vector3::new(17.1, -3.3, 5.9)), self.seed ^ 0x9e37_79b9);
        let mix = 0.65 * n1 + 0.35 * n2;
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = self.base[c] + (self.accent[c] - self.base[c]) * mix;
        }
        out
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(ix: i64, iy: i64, iz: i64, seed: u64) -> f64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ ix as u64);
    h = splitmix(h ^ iy as u64);
    h = splitmix(h ^ iz as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smooth trilinear value noise in `[0, 1)`.
pub fn value_noise(p: &Vector3<f64>, seed: u64) -> f64 {
    let base = p.map(f64::floor);
    let f = p - base;
    let (ix, iy, iz) = (base.x as i64, base.y as i64, base.z as i64);
    let (u, v, w) = (fade(f.x), fade(f.y), fade(f.z));
    let mut acc = 0.0;
    for dz in 0..2 {
        for dy in 0..2 {
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - u } else { u };
                let wy = if dy == 0 { 1.0 - v } else { v };
                let wz = if dz == 0 { 1.0 - w } else { w };
                acc += wx * wy * wz * lattice(ix + dx, iy + dy, iz + dz, seed);
            }
        }
    }
    acc
}
