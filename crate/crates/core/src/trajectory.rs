//! Built-in camera trajectory generators. The world is z-up; every
//! generator looks at a target point from above the ground.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{ActionSequence, CameraAction, CameraIntrinsics, GeometryError, Pose};

fn look(k: &CameraIntrinsics, eye: Vector3<f64>, target: Vector3<f64>, t: u32) -> Result<CameraAction, GeometryError> {
    Ok(CameraAction::new(*k, Pose::look_at(eye, target, Vector3::z())?, t))
}

/// Linear interpolation parameter in `[0, 1]` for 1-based `t`.
fn phase(t: u32, horizon: u32) -> f64 {
    if horizon <= 1 {
        0.0
    } else {
        (t - 1) as f64 / (horizon - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub target: [f64; 3],
    pub radius: f64,
    pub height: f64,
    pub start_deg: f64,
    pub sweep_deg: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        Self {
            target: [0.0, 0.0, 0.0],
            radius: 9.0,
            height: 7.0,
            start_deg: -90.0,
            sweep_deg: 60.0,
        }
    }
}

/// Camera circling `target` at constant height, sweeping `sweep_deg` over
/// the horizon.
pub fn orbit(k: &CameraIntrinsics, horizon: u32, spec: &OrbitSpec) -> Result<ActionSequence, GeometryError> {
    let target = Vector3::from(spec.target);
    let actions = (1..=horizon)
        .map(|t| {
            let a = (spec.start_deg + spec.sweep_deg * phase(t, horizon)).to_radians();
            let eye = target + Vector3::new(spec.radius * a.cos(), spec.radius * a.sin(), spec.height);
            look(k, eye, target, t)
        })
        .collect::<Result<_, _>>()?;
    ActionSequence::new(actions)
}

/// Fixed camera over the whole horizon.
pub fn static_camera(
    k: &CameraIntrinsics,
    eye: [f64; 3],
    target: [f64; 3],
    horizon: u32,
) -> Result<ActionSequence, GeometryError> {
    let a = look(k, Vector3::from(eye), Vector3::from(target), 1)?;
    ActionSequence::constant(&a, horizon)
}

/// `base` with focal lengths ramped linearly from 1x to `factor`x.
pub fn zoom(base: &ActionSequence, factor: f64) -> Result<ActionSequence, GeometryError> {
    let horizon = base.horizon();
    let actions = base
        .iter()
        .map(|a| {
            let f = 1.0 + (factor - 1.0) * phase(a.time, horizon);
            Ok(CameraAction::new(a.intrinsics.zoomed(f)?, a.pose, a.time))
        })
        .collect::<Result<_, GeometryError>>()?;
    ActionSequence::new(actions)
}

/// Fixed eye whose gaze pans from `target` to `target + offset`.
pub fn corner(
    k: &CameraIntrinsics,
    eye: [f64; 3],
    target: [f64; 3],
    offset: [f64; 3],
    horizon: u32,
) -> Result<ActionSequence, GeometryError> {
    let (eye, target, offset) = (Vector3::from(eye), Vector3::from(target), Vector3::from(offset));
    let actions = (1..=horizon)
        .map(|t| look(k, eye, target + offset * phase(t, horizon), t))
        .collect::<Result<_, _>>()?;
    ActionSequence::new(actions)
}

/// `a_t = base_min(t, freeze)`: the camera stops at `freeze`.
pub fn hold(base: &ActionSequence, freeze: u32) -> Result<ActionSequence, GeometryError> {
    remap(base, |t| t.min(freeze))
}

/// `a_t = base_max(t, from)`: before `from` the camera waits where it will
/// be at `from`.
pub fn rewind(base: &ActionSequence, from: u32) -> Result<ActionSequence, GeometryError> {
    remap(base, |t| t.max(from))
}

fn remap(base: &ActionSequence, f: impl Fn(u32) -> u32) -> Result<ActionSequence, GeometryError> {
    let horizon = base.horizon();
    let actions = (1..=horizon)
        .map(|t| {
            let src = f(t).clamp(1, horizon);
            base.at(src).expect("in horizon").at_time(t)
        })
        .collect();
    ActionSequence::new(actions)
}

/// Named generators, as accepted on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Orbit(OrbitSpec),
    Static { eye: [f64; 3], target: [f64; 3] },
    Zoom { eye: [f64; 3], target: [f64; 3], factor: f64 },
    Corner { eye: [f64; 3], target: [f64; 3], offset: [f64; 3] },
    Hold { orbit: OrbitSpec, freeze: u32 },
    Rewind { orbit: OrbitSpec, from: u32 },
}

pub const DEFAULT_EYE: [f64; 3] = [0.0, -7.0, 8.0];
pub const DEFAULT_TARGET: [f64; 3] = [0.0, 0.0, 0.0];

impl Generator {
    /// Default parameters for a generator name.
    pub fn named(name: &str) -> Option<Self> {
        let (eye, target) = (DEFAULT_EYE, DEFAULT_TARGET);
        Some(match name {
            "orbit" => Self::Orbit(OrbitSpec::default()),
            "static" => Self::Static { eye, target },
            "zoom" => Self::Zoom { eye, target, factor: 2.0 },
            "corner" => Self::Corner {
                eye,
                target,
                offset: [4.0, 3.0, 0.0],
            },
            "hold" => Self::Hold {
                orbit: OrbitSpec::default(),
                freeze: 20,
            },
            "rewind" => Self::Rewind {
                orbit: OrbitSpec::default(),
                from: 55,
            },
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 6] = ["orbit", "static", "zoom", "corner", "hold", "rewind"];

    pub fn build(&self, k: &CameraIntrinsics, horizon: u32) -> Result<ActionSequence, GeometryError> {
        match self {
            Self::Orbit(spec) => orbit(k, horizon, spec),
            Self::Static { eye, target } => static_camera(k, *eye, *target, horizon),
            Self::Zoom { eye, target, factor } => zoom(&static_camera(k, *eye, *target, horizon)?, *factor),
            Self::Corner { eye, target, offset } => corner(k, *eye, *target, *offset, horizon),
            Self::Hold { orbit: spec, freeze } => hold(&orbit(k, horizon, spec)?, *freeze),
            Self::Rewind { orbit: spec, from } => rewind(&orbit(k, horizon, spec)?, *from),
        }
    }
}
