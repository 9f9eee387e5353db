//! Procedural 4D ground-truth world.
//!
//! A scene is a ground plane plus static boxes and spheres, and a set of
//! moving objects with closed-form motion. It is rendered by analytic
//! raycasting with view-independent Lambert shading, so every pixel color is
//! a function of the surface point alone and reprojection between views is
//! exact up to 8-bit quantization.

mod render;
mod texture;

pub use render::{render_oracle, surface_color};
pub use texture::{value_noise, TextureParams};

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("time {t} outside the horizon 1..={horizon}")]
    OutOfHorizon { t: u32, horizon: u32 },
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub ambient: f64,
    pub diffuse: f64,
    /// Direction pointing from surfaces towards the light.
    pub direction: [f64; 3],
}

impl Default for Light {
    fn default() -> Self {
        Self {
            ambient: 0.35,
            diffuse: 0.65,
            direction: [0.4, 0.25, 0.88],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub horizon: u32,
    /// Static boxes and spheres in addition to the ground plane.
    pub n_static: usize,
    pub n_dynamic: usize,
    /// Objects are placed in `[-extent, extent]²`.
    pub extent: f64,
    pub texture_frequency: f64,
    /// Probability that a dynamic object moves on a circle rather than a line.
    pub circular_fraction: f64,
    /// Dynamic object speed range, meters per frame.
    pub speed_range: (f64, f64),
    pub light: Light,
    pub sky: [u8; 3],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            horizon: 121,
            n_static: 6,
            n_dynamic: 3,
            extent: 6.0,
            texture_frequency: 1.2,
            circular_fraction: 0.0,
            speed_range: (0.08, 0.2),
            light: Light::default(),
            sky: [150, 180, 215],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StaticShape {
    GroundPlane { height: f64 },
    Box { center: [f64; 3], half_extents: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPrimitive {
    pub shape: StaticShape,
    pub texture: TextureParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicShape {
    Sphere { radius: f64 },
    Box { half_extents: [f64; 3] },
}

/// Closed-form trajectory of a dynamic object's center, indexed by 1-based time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// `center(t) = start + (t - 1) * velocity`
    Linear { start: [f64; 3], velocity: [f64; 3] },
    /// Rotation of `start` about the vertical axis through `pivot`, by
    /// `angular_rate * (t - 1)` radians.
    Circular {
        pivot: [f64; 3],
        start: [f64; 3],
        angular_rate: f64,
    },
}

impl Motion {
    pub fn center(&self, t: u32) -> Vector3<f64> {
        let dt = t as f64 - 1.0;
        match self {
            Motion::Linear { start, velocity } => {
                Vector3::from(*start) + Vector3::from(*velocity) * dt
            }
            Motion::Circular {
                pivot,
                start,
                angular_rate,
            } => {
                let pivot = Vector3::from(*pivot);
                let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), angular_rate * dt);
                pivot + rot * (Vector3::from(*start) - pivot)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub shape: DynamicShape,
    pub motion: Motion,
    pub texture: TextureParams,
}

/// Complete, immutable description of a synthetic world over its horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub horizon: u32,
    pub static_primitives: Vec<StaticPrimitive>,
    pub dynamic_objects: Vec<DynamicObject>,
    pub light: Light,
    pub sky: [u8; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Static,
    Dynamic,
}

/// Pose of one object at one time step. Objects only translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub kind: ObjectKind,
    pub index: usize,
    pub center: [f64; 3],
}

impl SceneSpec {
    pub fn check_time(&self, t: u32) -> Result<(), SceneError> {
        if t == 0 || t > self.horizon {
            return Err(SceneError::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

fn random_texture(rng: &mut ChaCha8Rng, frequency: f64) -> TextureParams {
    let mut color = |lo: f64, hi: f64| {
        [
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
            rng.random_range(lo..hi),
        ]
    };
    let base = color(0.15, 0.55);
    let accent = color(0.5, 0.95);
    TextureParams {
        base,
        accent,
        frequency: frequency * rng.random_range(0.8..1.25),
        seed: rng.random(),
    }
}

/// Deterministic scene for `(seed, config)`.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<SceneSpec, SceneError> {
    if config.horizon == 0 {
        return Err(SceneError::EmptyHorizon);
    }
    if !(config.extent > 0.0 && config.texture_frequency > 0.0) {
        return Err(SceneError::InvalidConfig(
            "extent and texture_frequency must be positive".into(),
        ));
    }
    let (speed_lo, speed_hi) = config.speed_range;
    if !(speed_lo > 0.0 && speed_lo <= speed_hi) {
        return Err(SceneError::InvalidConfig(
            "speed_range must satisfy 0 < lo <= hi".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = config.extent;
    let mut static_primitives = vec![StaticPrimitive {
        shape: StaticShape::GroundPlane { height: 0.0 },
        texture: random_texture(&mut rng, config.texture_frequency),
    }];
    for _ in 0..config.n_static {
        let x = rng.random_range(-extent..extent);
        let y = rng.random_range(-extent..extent);
        let shape = if rng.random_bool(0.5) {
            let h = [
                rng.random_range(0.3..1.0),
                rng.random_range(0.3..1.0),
                rng.random_range(0.3..1.2),
            ];
            StaticShape::Box {
                center: [x, y, h[2]],
                half_extents: h,
            }
        } else {
            let r = rng.random_range(0.4..1.0);
            StaticShape::Sphere {
                center: [x, y, r],
                radius: r,
            }
        };
        static_primitives.push(StaticPrimitive {
            shape,
            texture: random_texture(&mut rng, config.texture_frequency),
        });
    }
    let mut dynamic_objects = Vec::with_capacity(config.n_dynamic);
    for _ in 0..config.n_dynamic {
        let (shape, lift) = if rng.random_bool(0.5) {
            let r = rng.random_range(0.4..0.8);
            (DynamicShape::Sphere { radius: r }, r)
        } else {
            let h = [
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.7),
                rng.random_range(0.3..0.6),
            ];
            (DynamicShape::Box { half_extents: h }, h[2])
        };
        let speed = rng.random_range(speed_lo..=speed_hi);
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let motion = if rng.random_bool(config.circular_fraction.clamp(0.0, 1.0)) {
            let pivot = [
                rng.random_range(-extent..extent) * 0.5,
                rng.random_range(-extent..extent) * 0.5,
                lift,
            ];
            let radius = rng.random_range(1.5..4.0);
            let start = [
                pivot[0] + radius * heading.cos(),
                pivot[1] + radius * heading.sin(),
                lift,
            ];
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Motion::Circular {
                pivot,
                start,
                angular_rate: sign * speed / radius,
            }
        } else {
            let start = [
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                lift,
            ];
            Motion::Linear {
                start,
                velocity: [speed * heading.cos(), speed * heading.sin(), 0.0],
            }
        };
        dynamic_objects.push(DynamicObject {
            shape,
            motion,
            texture: random_texture(&mut rng, config.texture_frequency),
        });
    }
    Ok(SceneSpec {
        seed,
        horizon: config.horizon,
        static_primitives,
        dynamic_objects,
        light: config.light.clone(),
        sky: config.sky,
    })
}

/// Closed-form object poses at time `t`: statics first, then dynamics.
pub fn scene_state(scene: &SceneSpec, t: u32) -> Result<Vec<ObjectState>, SceneError> {
    scene.check_time(t)?;
    let statics = scene
        .static_primitives
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let center = match &p.shape {
                StaticShape::GroundPlane { height } => [0.0, 0.0, *height],
                StaticShape::Box { center, .. } | StaticShape::Sphere { center, .. } => *center,
            };
            ObjectState {
                kind: ObjectKind::Static,
                index,
                center,
            }
        });
    let dynamics = scene.dynamic_objects.iter().enumerate().map(|(index, o)| {
        let c = o.motion.center(t);
        ObjectState {
            kind: ObjectKind::Dynamic,
            index,
            center: [c.x, c.y, c.z],
        }
    });
    Ok(statics.chain(dynamics).collect())
}
