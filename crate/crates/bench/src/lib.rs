//! Shared fixtures for the benchmarks.

use aw4re_core::scene::{generate_scene, render_oracle, SceneConfig};
use aw4re_core::trajectory::{orbit, OrbitSpec};
use aw4re_core::{ActionSequence, CameraIntrinsics, EvidenceCorpus, Frame};

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::centered(140.0, 160, 120, 0.1, 60.0).expect("valid intrinsics")
}

/// One fully observed orbit of a generated scene.
pub fn orbit_corpus(horizon: u32) -> (EvidenceCorpus, ActionSequence, Vec<Frame>) {
    let scene = generate_scene(
        11,
        &SceneConfig {
            horizon,
            ..Default::default()
        },
    )
    .expect("scene");
    let actions = orbit(&intrinsics(), horizon, &OrbitSpec::default()).expect("orbit");
    let frames: Vec<Frame> = actions
        .iter()
        .map(|a| render_oracle(&scene, a).expect("render"))
        .collect();
    let corpus = EvidenceCorpus::new(horizon)
        .add_iteration(&actions, frames.clone())
        .expect("corpus");
    (corpus, actions, frames)
}

/// Orbit shifted by `yaw_deg`, for queries that differ from the capture.
pub fn shifted_orbit(horizon: u32, yaw_deg: f64) -> ActionSequence {
    let spec = OrbitSpec {
        start_deg: OrbitSpec::default().start_deg + yaw_deg,
        ..Default::default()
    };
    orbit(&intrinsics(), horizon, &spec).expect("orbit")
}
