use aw4re_core::geometry::{project, unproject, CameraAction, CameraIntrinsics, Pose};
use aw4re_core::scene::{generate_scene, render_oracle, scene_state, SceneConfig};
use nalgebra::{Vector2, Vector3};

/// Camera at `eye` whose principal point is shifted so that `target`
/// projects exactly onto the center of pixel `(20, 15)`.
fn camera_through(eye: Vector3<f64>, target: &Vector3<f64>, t: u32) -> CameraAction {
    let pose = Pose::look_at(eye, Vector3::zeros(), Vector3::z()).unwrap();
    let cam = pose.transform_point(target);
    let f = 60.0;
    let cx = 20.5 - f * cam.x / cam.z;
    let cy = 15.5 - f * cam.y / cam.z;
    let k = CameraIntrinsics::new(f, f, cx, cy, 41, 31, 0.1, 80.0).unwrap();
    CameraAction::new(k, pose, t)
}

#[test]
fn reprojected_surface_points_keep_their_color() {
    let scene = generate_scene(
        8,
        &SceneConfig {
            horizon: 3,
            ..Default::default()
        },
    )
    .unwrap();
    let k = CameraIntrinsics::centered(60.0, 64, 48, 0.1, 80.0).unwrap();
    let a = CameraAction::new(
        k,
        Pose::look_at(Vector3::new(0.0, -8.0, 7.0), Vector3::zeros(), Vector3::z()).unwrap(),
        2,
    );
    let frame = render_oracle(&scene, &a).unwrap();
    let depth = frame.depth.as_ref().unwrap();
    let mut compared = 0;
    for (x, y) in (0..64).step_by(7).flat_map(|x| (0..48).step_by(5).map(move |y| (x, y))) {
        let d = depth.get(x, y) as f64;
        if !k.valid_depth(d) {
            continue;
        }
        let p = unproject(&Vector2::new(x as f64 + 0.5, y as f64 + 0.5), d, &a).unwrap();
        let b = camera_through(Vector3::new(5.0, -6.0, 8.0), &p, 2);
        let other = render_oracle(&scene, &b).unwrap();
        let (_, zb) = project(&p, &b).unwrap();
        let seen = other.depth.as_ref().unwrap().get(20, 15) as f64;
        if (seen - zb).abs() > 1e-3 {
            continue;
        }
        assert_eq!(other.rgb.get(20, 15), frame.rgb.get(x, y), "pixel ({x},{y})");
        compared += 1;
    }
    assert!(compared > 30, "only {compared} mutually visible samples");
}

#[test]
fn dynamic_mask_marks_exactly_the_moving_hits() {
    let scene = generate_scene(
        9,
        &SceneConfig {
            horizon: 4,
            n_dynamic: 4,
            ..Default::default()
        },
    )
    .unwrap();
    let k = CameraIntrinsics::centered(60.0, 64, 48, 0.1, 80.0).unwrap();
    let pose = Pose::look_at(Vector3::new(0.0, -9.0, 8.0), Vector3::zeros(), Vector3::z()).unwrap();
    let moving = scene_state(&scene, 1)
        .unwrap()
        .iter()
        .zip(scene_state(&scene, 4).unwrap())
        .filter(|(a, b)| a.center != b.center)
        .count();
    assert_eq!(moving, scene.dynamic_objects.len());
    let with = render_oracle(&scene, &CameraAction::new(k, pose, 3)).unwrap();
    let mut still = scene.clone();
    still.dynamic_objects.clear();
    let without = render_oracle(&still, &CameraAction::new(k, pose, 3)).unwrap();
    let mask = with.dynamic_mask.as_ref().unwrap();
    assert!(mask.any());
    for i in 0..mask.as_slice().len() {
        let changed = with.rgb.at(i) != without.rgb.at(i)
            || with.depth.as_ref().unwrap().as_slice()[i] != without.depth.as_ref().unwrap().as_slice()[i];
        assert_eq!(mask.as_slice()[i], changed, "pixel {i}");
    }
}
