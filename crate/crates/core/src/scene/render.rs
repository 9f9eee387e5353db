use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::{DynamicShape, SceneError, SceneSpec, StaticShape, TextureParams};
use crate::geometry::CameraAction;
use crate::image::{DepthMap, Frame, Mask, RgbImage};

const EPS: f64 = 1e-12;

/// Surface description at a ray hit.
struct Hit<'a> {
    depth: f64,
    normal: Vector3<f64>,
    /// Point in texture space (world for statics, object-local for dynamics).
    tex_point: Vector3<f64>,
    texture: &'a TextureParams,
    dynamic: bool,
}

/// Ray parameter interval handed to intersection routines: accepted hits
/// satisfy `near < s` and `(s as f32) <= far` so the stored depth is valid.
#[derive(Clone, Copy)]
struct Clip {
    near: f64,
    far: f64,
}

impl Clip {
    fn accepts(&self, s: f64) -> bool {
        let stored = s as f32 as f64;
        s > self.near && stored > self.near && stored <= self.far
    }
}

fn intersect_sphere(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    radius: f64,
    clip: Clip,
) -> Option<f64> {
    let oc = origin - center;
    let a = dir.dot(dir);
    let b = 2.0 * oc.dot(dir);
    let c = oc.dot(&oc) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let s1 = (-b - sq) / (2.0 * a);
    let s2 = (-b + sq) / (2.0 * a);
    [s1, s2].into_iter().find(|s| clip.accepts(*s))
}

fn intersect_box(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    half: &Vector3<f64>,
    clip: Clip,
) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for axis in 0..3 {
        let lo = center[axis] - half[axis];
        let hi = center[axis] + half[axis];
        if dir[axis].abs() < EPS {
            if origin[axis] < lo || origin[axis] > hi {
                return None;
            }
            continue;
        }
        let t1 = (lo - origin[axis]) / dir[axis];
        let t2 = (hi - origin[axis]) / dir[axis];
        t_enter = t_enter.max(t1.min(t2));
        t_exit = t_exit.min(t1.max(t2));
    }
    if t_enter > t_exit {
        return None;
    }
    [t_enter, t_exit].into_iter().find(|s| clip.accepts(*s))
}

fn box_normal(p: &Vector3<f64>, center: &Vector3<f64>, half: &Vector3<f64>) -> Vector3<f64> {
    let local = p - center;
    let mut axis = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..3 {
        let r = local[i].abs() / half[i];
        if r > best {
            best = r;
            axis = i;
        }
    }
    let mut n = Vector3::zeros();
    n[axis] = local[axis].signum();
    n
}

fn intersect_plane(origin: &Vector3<f64>, dir: &Vector3<f64>, height: f64, clip: Clip) -> Option<f64> {
    if dir.z.abs() < EPS {
        return None;
    }
    let s = (height - origin.z) / dir.z;
    clip.accepts(s).then_some(s)
}

fn trace<'a>(
    scene: &'a SceneSpec,
    t: u32,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    clip: Clip,
) -> Option<Hit<'a>> {
    let mut best: Option<Hit<'a>> = None;
    let mut consider = |hit: Hit<'a>| {
        if best.as_ref().is_none_or(|b| hit.depth < b.depth) {
            best = Some(hit);
        }
    };
    for prim in &scene.static_primitives {
        match &prim.shape {
            StaticShape::GroundPlane { height } => {
                if let Some(s) = intersect_plane(origin, dir, *height, clip) {
                    let p = origin + dir * s;
                    consider(Hit {
                        depth: s,
                        normal: Vector3::z(),
                        tex_point: p,
                        texture: &prim.texture,
                        dynamic: false,
                    });
                }
            }
            StaticShape::Box {
                center,
                half_extents,
            } => {
                let (c, h) = (Vector3::from(*center), Vector3::from(*half_extents));
                if let Some(s) = intersect_box(origin, dir, &c, &h, clip) {
                    let p = origin + dir * s;
                    consider(Hit {
                        depth: s,
                        normal: box_normal(&p, &c, &h),
                        tex_point: p,
                        texture: &prim.texture,
                        dynamic: false,
                    });
                }
            }
            StaticShape::Sphere { center, radius } => {
                let c = Vector3::from(*center);
                if let Some(s) = intersect_sphere(origin, dir, &c, *radius, clip) {
                    let p = origin + dir * s;
                    consider(Hit {
                        depth: s,
                        normal: (p - c) / *radius,
                        tex_point: p,
                        texture: &prim.texture,
                        dynamic: false,
                    });
                }
            }
        }
    }
    for obj in &scene.dynamic_objects {
        let c = obj.motion.center(t);
        let hit = match &obj.shape {
            DynamicShape::Sphere { radius } => intersect_sphere(origin, dir, &c, *radius, clip)
                .map(|s| {
                    let p = origin + dir * s;
                    (s, (p - c) / *radius, p)
                }),
            DynamicShape::Box { half_extents } => {
                let h = Vector3::from(*half_extents);
                intersect_box(origin, dir, &c, &h, clip).map(|s| {
                    let p = origin + dir * s;
                    (s, box_normal(&p, &c, &h), p)
                })
            }
        };
        if let Some((s, normal, p)) = hit {
            consider(Hit {
                depth: s,
                normal,
                tex_point: p - c,
                texture: &obj.texture,
                dynamic: true,
            });
        }
    }
    best
}

fn shade(scene: &SceneSpec, normal: &Vector3<f64>, texture: &TextureParams, tex_point: &Vector3<f64>) -> [u8; 3] {
    let light = Vector3::from(scene.light.direction).normalize();
    let lambert = normal.dot(&light).max(0.0);
    let intensity = scene.light.ambient + scene.light.diffuse * lambert;
    let albedo = texture.albedo(tex_point);
    albedo.map(|a| ((a * intensity).clamp(0.0, 1.0) * 255.0).round() as u8)
}

/// Ground-truth observation of `scene` under `action`.
///
/// Each pixel center casts a ray; the nearest hit with depth in
/// `(near, far]` decides color, depth (camera-frame `z`) and whether the
/// pixel shows a dynamic object. Misses get the sky color and depth 0.
pub fn render_oracle(scene: &SceneSpec, action: &CameraAction) -> Result<Frame, SceneError> {
    scene.check_time(action.time)?;
    let k = &action.intrinsics;
    let (w, h) = (k.width(), k.height());
    let origin = action.pose.center();
    let clip = Clip {
        near: k.near(),
        far: k.far(),
    };
    let rows: Vec<(Vec<u8>, Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rgb = Vec::with_capacity(w as usize * 3);
            let mut depth = Vec::with_capacity(w as usize);
            let mut dynamic = Vec::with_capacity(w as usize);
            for x in 0..w {
                let pixel = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let dir = action.ray_direction(&pixel);
                match trace(scene, action.time, &origin, &dir, clip) {
                    Some(hit) => {
                        rgb.extend_from_slice(&shade(scene, &hit.normal, hit.texture, &hit.tex_point));
                        depth.push(hit.depth as f32);
                        dynamic.push(hit.dynamic);
                    }
                    None => {
                        rgb.extend_from_slice(&scene.sky);
                        depth.push(0.0);
                        dynamic.push(false);
                    }
                }
            }
            (rgb, depth, dynamic)
        })
        .collect();
    let mut rgb = Vec::with_capacity(k.pixel_count() * 3);
    let mut depth = Vec::with_capacity(k.pixel_count());
    let mut dynamic = Vec::with_capacity(k.pixel_count());
    for (r, d, m) in rows {
        rgb.extend(r);
        depth.extend(d);
        dynamic.extend(m);
    }
    let frame = Frame::new(
        RgbImage::from_raw(w, h, rgb).expect("row sizes"),
        Some(DepthMap::from_vec(w, h, depth).expect("row sizes")),
        Some(Mask::from_vec(w, h, dynamic).expect("row sizes")),
    )
    .expect("consistent dims");
    Ok(frame)
}

/// Color of the surface passing closest to `point` at time `t`, if some
/// surface lies within `tolerance` meters. Shares the shading model with
/// [`render_oracle`]; useful to check reprojected evidence.
pub fn surface_color(scene: &SceneSpec, point: &Vector3<f64>, t: u32, tolerance: f64) -> Option<[u8; 3]> {
    // (signed distance, normal, texture-space point, texture)
    let mut candidates: Vec<(f64, Vector3<f64>, Vector3<f64>, &TextureParams)> = Vec::new();
    for prim in &scene.static_primitives {
        let (dist, normal) = match &prim.shape {
            StaticShape::GroundPlane { height } => (point.z - height, Vector3::z()),
            StaticShape::Box {
                center,
                half_extents,
            } => {
                let (c, h) = (Vector3::from(*center), Vector3::from(*half_extents));
                (box_sdf(point, &c, &h), box_normal(point, &c, &h))
            }
            StaticShape::Sphere { center, radius } => {
                let c = Vector3::from(*center);
                ((point - c).norm() - radius, (point - c).normalize())
            }
        };
        candidates.push((dist, normal, *point, &prim.texture));
    }
    for obj in &scene.dynamic_objects {
        let c = obj.motion.center(t);
        let (dist, normal) = match &obj.shape {
            DynamicShape::Sphere { radius } => ((point - c).norm() - radius, (point - c).normalize()),
            DynamicShape::Box { half_extents } => {
                let h = Vector3::from(*half_extents);
                (box_sdf(point, &c, &h), box_normal(point, &c, &h))
            }
        };
        candidates.push((dist, normal, point - c, &obj.texture));
    }
    candidates
        .into_iter()
        .filter(|c| c.0.abs() <= tolerance)
        .min_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .map(|(_, n, tp, tex)| shade(scene, &n, tex, &tp))
}

fn box_sdf(p: &Vector3<f64>, center: &Vector3<f64>, half: &Vector3<f64>) -> f64 {
    let q = (p - center).abs() - half;
    let outside = q.map(|v| v.max(0.0)).norm();
    outside + q.max().min(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraIntrinsics, Pose};
    use crate::scene::{generate_scene, Light, SceneConfig, StaticPrimitive};

    fn tex() -> TextureParams {
        TextureParams {
            base: [0.3, 0.3, 0.3],
            accent: [0.9, 0.7, 0.5],
            frequency: 1.0,
            seed: 1,
        }
    }

    fn bare_scene(statics: Vec<StaticShape>) -> SceneSpec {
        SceneSpec {
            seed: 0,
            horizon: 4,
            static_primitives: statics
                .into_iter()
                .map(|shape| StaticPrimitive {
                    shape,
                    texture: tex(),
                })
                .collect(),
            dynamic_objects: vec![],
            light: Light::default(),
            sky: [1, 2, 3],
        }
    }

    #[test]
    fn looking_at_the_sky_sees_nothing() {
        let scene = bare_scene(vec![StaticShape::GroundPlane { height: 0.0 }]);
        let k = CameraIntrinsics::centered(50.0, 32, 24, 0.1, 100.0).unwrap();
        // camera at z=2 looking straight up
        let pose = Pose::look_at(
            Vector3::new(0.0, 0.0, 2.0),
            Vector3::new(0.0, 0.0, 10.0),
            Vector3::x(),
        )
        .unwrap();
        let frame = render_oracle(&scene, &CameraAction::new(k, pose, 1)).unwrap();
        assert!(frame.depth.as_ref().unwrap().as_slice().iter().all(|d| *d == 0.0));
        assert!(!frame.dynamic_mask.as_ref().unwrap().any());
        assert!(frame.rgb.as_raw().chunks(3).all(|p| p == [1, 2, 3]));
    }

    #[test]
    fn sphere_on_axis_depth_is_distance_minus_radius() {
        let scene = bare_scene(vec![StaticShape::Sphere {
            center: [0.0, 0.0, 5.0],
            radius: 1.25,
        }]);
        // odd size, principal point on the center pixel's center
        let k = CameraIntrinsics::new(60.0, 60.0, 10.5, 10.5, 21, 21, 0.1, 100.0).unwrap();
        let frame = render_oracle(&scene, &CameraAction::new(k, Pose::identity(), 1)).unwrap();
        let d = frame.depth.unwrap().get(10, 10);
        assert_eq!(d, (5.0f64 - 1.25) as f32);
    }

    #[test]
    fn rendering_is_bit_deterministic() {
        let scene = generate_scene(11, &SceneConfig::default()).unwrap();
        let k = CameraIntrinsics::centered(60.0, 40, 30, 0.1, 100.0).unwrap();
        let pose = Pose::look_at(Vector3::new(8.0, -6.0, 5.0), Vector3::zeros(), Vector3::z()).unwrap();
        let a = CameraAction::new(k, pose, 3);
        let f1 = render_oracle(&scene, &a).unwrap();
        let f2 = render_oracle(&scene, &a).unwrap();
        assert!(f1.bit_eq(&f2));
    }

    #[test]
    fn out_of_horizon_time_is_rejected() {
        let scene = bare_scene(vec![StaticShape::GroundPlane { height: 0.0 }]);
        let k = CameraIntrinsics::centered(50.0, 8, 8, 0.1, 100.0).unwrap();
        assert!(render_oracle(&scene, &CameraAction::new(k, Pose::identity(), 5)).is_err());
    }

    #[test]
    fn box_sdf_is_signed() {
        let c = Vector3::zeros();
        let h = Vector3::new(1.0, 1.0, 1.0);
        assert!((box_sdf(&Vector3::new(2.0, 0.0, 0.0), &c, &h) - 1.0).abs() < 1e-12);
        assert!((box_sdf(&Vector3::new(0.5, 0.0, 0.0), &c, &h) + 0.5).abs() < 1e-12);
    }
}
