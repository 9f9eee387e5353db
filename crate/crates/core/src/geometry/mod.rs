//! Pinhole cameras, rigid poses and frustum overlap.
//!
//! Conventions used throughout the crate:
//!
//! - extrinsics are stored camera-from-world: `p_cam = R * p_world + t`;
//! - `+z` is the viewing direction, `+x` points right and `+y` points down
//!   in the image;
//! - the pixel origin is the top-left corner of the image and pixel `(x, y)`
//!   has its center at `(x + 0.5, y + 0.5)`.
//!
//! Depth always means the camera-frame `z` coordinate, never the euclidean
//! distance to the camera center.

mod camera;
mod frustum;

pub use camera::{
    project, unproject, ActionSequence, CameraAction, CameraIntrinsics, Pose,
};
pub use frustum::{frustum_overlap, FrustumSampler, DEFAULT_FRUSTUM_SEED};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point lies behind the camera or inside the near plane (z = {z})")]
    BehindCamera { z: f64 },
    #[error("depth {depth} outside the valid range ({near}, {far}]")]
    DepthOutOfRange { depth: f64, near: f64, far: f64 },
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid action sequence: {0}")]
    InvalidSequence(String),
}
