use nalgebra::{Matrix3, Rotation3, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole intrinsics plus the depth clip range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
}

impl CameraIntrinsics {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self, GeometryError> {
        let all = [fx, fy, cx, cy, near, far];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be at least 1x1 (got {width}x{height})"
            )));
        }
        if !(near > 0.0 && near < far) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "need 0 < near < far (near = {near}, far = {far})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
            far,
        })
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn centered(
        focal: f64,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self, GeometryError> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            near,
            far,
        )
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }
    pub fn near(&self) -> f64 {
        self.near
    }
    pub fn far(&self) -> f64 {
        self.far
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Mean focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    /// Same camera with both focal lengths multiplied by `factor`; the
    /// principal point and image size are kept.
    pub fn zoomed(&self, factor: f64) -> Result<Self, GeometryError> {
        Self::new(
            self.fx * factor,
            self.fy * factor,
            self.cx,
            self.cy,
            self.width,
            self.height,
            self.near,
            self.far,
        )
    }

    pub fn contains_pixel(&self, pixel: &Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    pub fn valid_depth(&self, depth: f64) -> bool {
        depth > self.near && depth <= self.far
    }
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: IntrinsicsRepr) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.near, r.far)
    }
}

impl From<CameraIntrinsics> for IntrinsicsRepr {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            near: k.near,
            far: k.far,
        }
    }
}

/// Rigid camera-from-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let gram = rotation.transpose() * rotation;
        let ortho_err = (gram - Matrix3::identity()).abs().max();
        if ortho_err > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {ortho_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`, with `up` giving the world
    /// direction that should appear towards the top of the image.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(GeometryError::InvalidPose("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-12 {
            return Err(GeometryError::InvalidPose(
                "viewing direction is parallel to the up vector".into(),
            ));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        let translation = -(rotation * eye);
        Self::new(rotation, translation)
    }

    /// Rotation about a world axis through the origin (camera-from-world).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn transform_point(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * world + self.translation
    }

    pub fn inverse_transform_point(&self, cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Geodesic angle between two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let relative = self.rotation * other.rotation.transpose();
        let cos = ((relative.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos()
    }
}

/// One sensing configuration: intrinsics, extrinsics and a 1-based time index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ActionRepr", into = "ActionRepr")]
pub struct CameraAction {
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub time: u32,
}

impl CameraAction {
    pub fn new(intrinsics: CameraIntrinsics, pose: Pose, time: u32) -> Self {
        Self {
            intrinsics,
            pose,
            time,
        }
    }

    pub fn at_time(&self, time: u32) -> Self {
        Self { time, ..*self }
    }

    /// True when both actions describe the same camera (bitwise), ignoring time.
    pub fn same_camera(&self, other: &CameraAction) -> bool {
        self.intrinsics == other.intrinsics && self.pose == other.pose
    }

    /// Ray direction (unnormalized, camera-frame `z = 1`) through a pixel
    /// coordinate, expressed in world coordinates.
    pub fn ray_direction(&self, pixel: &Vector2<f64>) -> Vector3<f64> {
        let k = &self.intrinsics;
        let cam = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        self.pose.rotation.transpose() * cam
    }
}

/// Flat JSON layout: `{fx,fy,cx,cy,width,height,near,far,rotation[9],translation[3],time}`.
#[derive(Serialize, Deserialize)]
struct ActionRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    near: f64,
    far: f64,
    /// Row-major.
    rotation: [f64; 9],
    translation: [f64; 3],
    time: u32,
}

impl TryFrom<ActionRepr> for CameraAction {
    type Error = GeometryError;
    fn try_from(r: ActionRepr) -> Result<Self, Self::Error> {
        let intrinsics =
            CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height, r.near, r.far)?;
        let rotation = Matrix3::from_row_slice(&r.rotation);
        let pose = Pose::new(rotation, Vector3::from(r.translation))?;
        if r.time == 0 {
            return Err(GeometryError::InvalidSequence("time indices start at 1".into()));
        }
        Ok(CameraAction::new(intrinsics, pose, r.time))
    }
}

impl From<CameraAction> for ActionRepr {
    fn from(a: CameraAction) -> Self {
        let k = a.intrinsics;
        let r = a.pose.rotation;
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        ActionRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            near: k.near,
            far: k.far,
            rotation,
            translation: [a.pose.translation.x, a.pose.translation.y, a.pose.translation.z],
            time: a.time,
        }
    }
}

/// A full sensing action over the horizon: `actions[t - 1].time == t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CameraAction>", into = "Vec<CameraAction>")]
pub struct ActionSequence {
    actions: Vec<CameraAction>,
}

impl ActionSequence {
    pub fn new(actions: Vec<CameraAction>) -> Result<Self, GeometryError> {
        if actions.is_empty() {
            return Err(GeometryError::InvalidSequence("empty action sequence".into()));
        }
        for (idx, a) in actions.iter().enumerate() {
            let expected = idx as u32 + 1;
            if a.time != expected {
                return Err(GeometryError::InvalidSequence(format!(
                    "action at position {idx} has time {}, expected {expected}",
                    a.time
                )));
            }
        }
        Ok(Self { actions })
    }

    /// Repeats one camera over `horizon` steps.
    pub fn constant(camera: &CameraAction, horizon: u32) -> Result<Self, GeometryError> {
        Self::new((1..=horizon).map(|t| camera.at_time(t)).collect())
    }

    pub fn horizon(&self) -> u32 {
        self.actions.len() as u32
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Action at 1-based time `t`.
    pub fn at(&self, t: u32) -> Option<&CameraAction> {
        t.checked_sub(1).and_then(|i| self.actions.get(i as usize))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CameraAction> {
        self.actions.iter()
    }

    pub fn as_slice(&self) -> &[CameraAction] {
        &self.actions
    }
}

impl TryFrom<Vec<CameraAction>> for ActionSequence {
    type Error = GeometryError;
    fn try_from(v: Vec<CameraAction>) -> Result<Self, Self::Error> {
        ActionSequence::new(v)
    }
}

impl From<ActionSequence> for Vec<CameraAction> {
    fn from(s: ActionSequence) -> Self {
        s.actions
    }
}

impl<'a> IntoIterator for &'a ActionSequence {
    type Item = &'a CameraAction;
    type IntoIter = std::slice::Iter<'a, CameraAction>;
    fn into_iter(self) -> Self::IntoIter {
        self.actions.iter()
    }
}

/// Projects a world point into the camera of `action`.
///
/// Returns the continuous pixel coordinate and the camera-frame depth. The
/// pixel may fall outside the image; callers filter.
pub fn project(
    point: &Vector3<f64>,
    action: &CameraAction,
) -> Result<(Vector2<f64>, f64), GeometryError> {
    if !point.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let cam = action.pose.transform_point(point);
    let k = &action.intrinsics;
    if cam.z <= k.near {
        return Err(GeometryError::BehindCamera { z: cam.z });
    }
    let pixel = Vector2::new(k.fx * cam.x / cam.z + k.cx, k.fy * cam.y / cam.z + k.cy);
    Ok((pixel, cam.z))
}

/// Inverse of [`project`] for a pixel coordinate and camera-frame depth.
pub fn unproject(
    pixel: &Vector2<f64>,
    depth: f64,
    action: &CameraAction,
) -> Result<Vector3<f64>, GeometryError> {
    if !(pixel.x.is_finite() && pixel.y.is_finite() && depth.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let k = &action.intrinsics;
    if !k.valid_depth(depth) {
        return Err(GeometryError::DepthOutOfRange {
            depth,
            near: k.near,
            far: k.far,
        });
    }
    let cam = Vector3::new(
        (pixel.x - k.cx) / k.fx * depth,
        (pixel.y - k.cy) / k.fy * depth,
        depth,
    );
    Ok(action.pose.inverse_transform_point(&cam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn cam100() -> CameraAction {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100, 0.1, 100.0).unwrap();
        CameraAction::new(k, Pose::identity(), 1)
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let (px, depth) = project(&Vector3::new(0.0, 0.0, 2.0), &cam100()).unwrap();
        assert_eq!(px, Vector2::new(50.0, 50.0));
        assert_eq!(depth, 2.0);
    }

    #[test]
    fn point_behind_camera_is_rejected() {
        let err = project(&Vector3::new(0.0, 0.0, -1.0), &cam100()).unwrap_err();
        assert!(matches!(err, GeometryError::BehindCamera { .. }));
        let err = project(&Vector3::new(f64::NAN, 0.0, 1.0), &cam100()).unwrap_err();
        assert_eq!(err, GeometryError::NonFinite);
    }

    #[test]
    fn unproject_principal_point() {
        let p = unproject(&Vector2::new(50.0, 50.0), 3.5, &cam100()).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 3.5));
        let err = unproject(&Vector2::new(50.0, 50.0), 0.0, &cam100()).unwrap_err();
        assert!(matches!(err, GeometryError::DepthOutOfRange { .. }));
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 1, 1, 0.1, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 1, 0.1, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1, 1, 1.0, 1.0).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 1, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn pose_rejects_non_rotations() {
        let scaled = Matrix3::identity() * 2.0;
        assert!(Pose::new(scaled, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose::new(reflection, Vector3::zeros()).is_err());
    }

    #[test]
    fn look_at_points_forward_axis_at_target() {
        let eye = Vector3::new(3.0, -4.0, 2.0);
        let target = Vector3::new(0.5, 0.5, 0.0);
        let pose = Pose::look_at(eye, target, Vector3::z()).unwrap();
        assert!((pose.center() - eye).norm() < 1e-12);
        let cam = pose.transform_point(&target);
        assert!(cam.x.abs() < 1e-12 && cam.y.abs() < 1e-12 && cam.z > 0.0);
        // world up appears towards the top of the image (negative camera y)
        let above = pose.transform_point(&(target + Vector3::z()));
        assert!(above.y < 0.0);
    }

    #[test]
    fn rotation_angle_of_quarter_yaw() {
        let a = Pose::identity();
        let b = Pose::from_axis_angle(Vector3::y(), FRAC_PI_2);
        assert!((a.rotation_angle_to(&b) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn json_layout_is_flat() {
        let action = cam100();
        let json = serde_json::to_value(action).unwrap();
        let obj = json.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            [
                "cx", "cy", "far", "fx", "fy", "height", "near", "rotation", "time",
                "translation", "width"
            ]
        );
        assert_eq!(obj["rotation"].as_array().unwrap().len(), 9);
        let back: CameraAction = serde_json::from_value(json).unwrap();
        assert_eq!(back, action);
    }

    #[test]
    fn sequence_requires_consecutive_times() {
        let a = cam100();
        assert!(ActionSequence::new(vec![a.at_time(1), a.at_time(3)]).is_err());
        let seq = ActionSequence::constant(&a, 4).unwrap();
        assert_eq!(seq.horizon(), 4);
        assert_eq!(seq.at(4).unwrap().time, 4);
        assert!(seq.at(0).is_none());
        assert!(seq.at(5).is_none());
    }
}
