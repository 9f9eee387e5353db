use aw4re_core::geometry::{frustum_overlap, project, unproject, CameraAction, CameraIntrinsics, Pose};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(220.0, 210.0, 161.0, 118.5, 320, 240, 0.1, 80.0).unwrap()
}

prop_compose! {
    fn pose()(ax in -1.0..1.0f64, ay in -1.0..1.0f64, az in -1.0..1.0f64, angle in 0.0..3.1f64,
              tx in -20.0..20.0f64, ty in -20.0..20.0f64, tz in -20.0..20.0f64) -> Pose {
        let axis = Vector3::new(ax, ay, az + 1e-3);
        let rot = Pose::from_axis_angle(axis, angle);
        Pose::new(*rot.rotation(), Vector3::new(tx, ty, tz)).unwrap()
    }
}

proptest! {
    #[test]
    fn pixel_depth_round_trip(p in pose(), u in 0.0..320.0f64, v in 0.0..240.0f64, d in 0.11..80.0f64) {
        let a = CameraAction::new(intrinsics(), p, 1);
        let world = unproject(&Vector2::new(u, v), d, &a).unwrap();
        let (px, z) = project(&world, &a).unwrap();
        prop_assert!((px - Vector2::new(u, v)).norm() < 1e-6);
        prop_assert!((z - d).abs() < 1e-6);
    }

    #[test]
    fn pose_moves_points_not_pixels(p in pose(), x in -5.0..5.0f64, y in -5.0..5.0f64, z in 1.0..30.0f64) {
        let moved = CameraAction::new(intrinsics(), p, 1);
        let still = CameraAction::new(intrinsics(), Pose::identity(), 1);
        let world = p.inverse_transform_point(&Vector3::new(x, y, z));
        let (a, za) = project(&world, &moved).unwrap();
        let (b, zb) = project(&p.transform_point(&world), &still).unwrap();
        prop_assert!((a - b).norm() < 1e-9);
        prop_assert!((za - zb).abs() < 1e-9);
    }

    #[test]
    fn overlap_is_rigid_invariant(q in pose(), c in pose(), g in pose()) {
        let qa = CameraAction::new(intrinsics(), q, 1);
        let ca = CameraAction::new(intrinsics(), c, 1);
        let qg = CameraAction::new(intrinsics(), q.compose(&g.inverse()), 1);
        let cg = CameraAction::new(intrinsics(), c.compose(&g.inverse()), 1);
        let before = frustum_overlap(&ca, &qa, 256, (0.5, 60.0));
        let after = frustum_overlap(&cg, &qg, 256, (0.5, 60.0));
        prop_assert_eq!(before, after);
    }

    #[test]
    fn self_overlap_is_one(q in pose()) {
        let qa = CameraAction::new(intrinsics(), q, 1);
        prop_assert_eq!(frustum_overlap(&qa, &qa, 256, (0.5, 60.0)), 1.0);
    }
}

#[test]
fn rotation_matrix_is_stored_camera_from_world() {
    let p = Pose::look_at(Vector3::new(0.0, -5.0, 0.0), Vector3::zeros(), Vector3::z()).unwrap();
    let forward: Vector3<f64> = p.rotation().transpose() * Vector3::z();
    assert!((forward - Vector3::y()).norm() < 1e-12);
    let down: Vector3<f64> = p.rotation().transpose() * Vector3::y();
    assert!((down + Vector3::z()).norm() < 1e-12);
}
