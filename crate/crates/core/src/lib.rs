//! Counterfactual camera-query engine.
//!
//! Given a history of camera observations and a queried camera action, the
//! engine selects relevant past frames, lifts them into a local point proxy,
//! splats the proxy into the queried camera, densifies and completes the
//! result, and scores it. A finite-horizon sensing environment wraps the
//! pipeline, with a procedural ground-truth world as oracle.

pub mod completion;
pub mod corpus;
pub mod decoder;
pub mod env;
pub mod fill;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod pipeline;
pub mod proxy;
pub mod retrieval;
pub mod scene;
pub mod trajectory;

pub use corpus::{EvidenceCorpus, EvidenceRecord, RecordKey};
pub use geometry::{ActionSequence, CameraAction, CameraIntrinsics, Pose};
pub use image::{DepthMap, Frame, Mask, RgbImage};
pub use pipeline::{run_query, Completer, PipelineConfig, QueryOutput};
pub use scene::SceneSpec;
