#![allow(dead_code)]

use aw4re_core::completion::CompletedObservation;
use aw4re_core::corpus::EvidenceCorpus;
use aw4re_core::geometry::{ActionSequence, CameraIntrinsics};
use aw4re_core::image::{Frame, RgbImage};
use aw4re_core::metrics::psnr_sequence;
use aw4re_core::pipeline::{run_query, Completer, PipelineConfig};
use aw4re_core::retrieval::RetrievalScope;
use aw4re_core::scene::{
    generate_scene, render_oracle, SceneConfig, DynamicObject, DynamicShape, Light, Motion, SceneSpec, StaticPrimitive, StaticShape,
};
use aw4re_core::scene::TextureParams;
use aw4re_core::trajectory::{static_camera, zoom};

pub const HORIZON: u32 = 121;

pub fn intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::centered(140.0, 160, 120, 0.1, 60.0).unwrap()
}

/// Steep look-down camera: the whole image sees the ground, no sky.
pub fn overhead(horizon: u32) -> ActionSequence {
    static_camera(&intrinsics(), [0.0, -4.0, 14.0], [0.0, 0.0, 0.0], horizon).unwrap()
}

fn texture(base: [f64; 3], accent: [f64; 3], frequency: f64, seed: u64) -> TextureParams {
    TextureParams {
        base,
        accent,
        frequency,
        seed,
    }
}

fn sphere(start: [f64; 3], velocity: [f64; 3], radius: f64, base: [f64; 3], seed: u64) -> DynamicObject {
    DynamicObject {
        shape: DynamicShape::Sphere { radius },
        motion: Motion::Linear { start, velocity },
        texture: texture(base, [0.1, 0.1, 0.1], 1.5, seed),
    }
}

/// Ground plane plus a few boxes; the moving spheres are supplied by the
/// caller.
pub fn world(dynamic_objects: Vec<DynamicObject>) -> SceneSpec {
    let boxed = |center: [f64; 3], half: [f64; 3], seed| StaticPrimitive {
        shape: StaticShape::Box {
            center,
            half_extents: half,
        },
        texture: texture([0.55, 0.5, 0.4], [0.3, 0.25, 0.2], 1.0, seed),
    };
    SceneSpec {
        seed: 0,
        horizon: HORIZON,
        static_primitives: vec![
            StaticPrimitive {
                shape: StaticShape::GroundPlane { height: 0.0 },
                texture: texture([0.45, 0.55, 0.35], [0.3, 0.35, 0.2], 0.8, 11),
            },
            boxed([-4.0, 3.0, 0.75], [0.8, 0.8, 0.75], 12),
            boxed([4.5, -2.0, 0.5], [1.0, 0.6, 0.5], 13),
            boxed([2.0, 4.5, 1.0], [0.6, 0.6, 1.0], 14),
        ],
        dynamic_objects,
        light: Light::default(),
        sky: [150, 180, 215],
    }
}

/// Spheres crossing the view center around `t = 20` and gone by `t = 45`.
pub fn hold_world() -> SceneSpec {
    let v = 0.45;
    world(vec![
        sphere([-19.0 * v, 0.5, 1.2], [v, 0.0, 0.0], 1.2, [0.85, 0.15, 0.15], 21),
        sphere([1.5, 19.0 * v, 1.0], [0.0, -v, 0.0], 1.0, [0.15, 0.2, 0.85], 22),
        sphere([19.0 * v - 1.0, -19.0 * v, 0.9], [-v, v, 0.0], 0.9, [0.9, 0.85, 0.1], 23),
    ])
}

/// Spheres in view at `t = 1` that leave within about twenty frames.
pub fn rewind_world() -> SceneSpec {
    let v = 0.45;
    world(vec![
        sphere([0.0, 0.5, 1.2], [v, 0.0, 0.0], 1.2, [0.85, 0.15, 0.15], 31),
        sphere([-1.5, -1.0, 1.0], [-v, 0.1, 0.0], 1.0, [0.15, 0.2, 0.85], 32),
        sphere([1.0, -2.5, 0.9], [0.1, -v, 0.0], 0.9, [0.9, 0.85, 0.1], 33),
    ])
}

pub fn render_all(scene: &SceneSpec, actions: &ActionSequence) -> Vec<Frame> {
    actions.iter().map(|a| render_oracle(scene, a).unwrap()).collect()
}

/// One iteration of `actions` of which only the times in `observed` were
/// captured.
pub fn partial_corpus(frames: &[Frame], actions: &ActionSequence, observed: impl Fn(u32) -> bool) -> EvidenceCorpus {
    let slots = actions
        .iter()
        .zip(frames)
        .map(|(a, f)| observed(a.time).then(|| f.clone()))
        .collect();
    EvidenceCorpus::new(actions.horizon())
        .add_partial_iteration(actions, slots)
        .unwrap()
}

pub fn query_frames(corpus: &EvidenceCorpus, query: &ActionSequence, scope: RetrievalScope) -> Vec<RgbImage> {
    let mut cfg = PipelineConfig::default();
    cfg.retrieval.scope = scope;
    let out = run_query(corpus, query, &cfg, &Completer::Baseline).unwrap();
    out.completed.into_iter().map(|c: CompletedObservation| c.rgb).collect()
}

/// Full-frame PSNR against ground truth for both retrieval scopes:
/// `(4d_informed, time_local)`.
pub fn scope_gap(corpus: &EvidenceCorpus, query: &ActionSequence, truth: &[Frame]) -> (f64, f64) {
    let truth: Vec<RgbImage> = truth.iter().map(|f| f.rgb.clone()).collect();
    let informed = query_frames(corpus, query, RetrievalScope::FourDInformed);
    let local = query_frames(corpus, query, RetrievalScope::TimeLocal);
    (
        psnr_sequence(&informed, &truth, None).unwrap(),
        psnr_sequence(&local, &truth, None).unwrap(),
    )
}

pub fn small_scene(seed: u64, horizon: u32) -> SceneSpec {
    let cfg = SceneConfig {
        horizon,
        ..Default::default()
    };
    generate_scene(seed, &cfg).unwrap()
}

/// Static camera captured at 1x; the query zooms the same camera to 2x.
pub fn zoom_fixture() -> (EvidenceCorpus, ActionSequence, Vec<Frame>) {
    let scene = small_scene(5, 30);
    let k = intrinsics();
    let base = static_camera(&k, [0.0, -7.0, 8.0], [0.0, 0.0, 0.0], 30).unwrap();
    let corpus = EvidenceCorpus::new(30).add_iteration(&base, render_all(&scene, &base)).unwrap();
    let query = zoom(&base, 2.0).unwrap();
    let truth = render_all(&scene, &query);
    (corpus, query, truth)
}
