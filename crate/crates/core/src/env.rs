//! Finite-horizon sensing environment.
//!
//! One step executes a full action sequence over the horizon. In real mode
//! the oracle renders the frames and the corpus grows; in surrogate mode the
//! engine answers the counterfactual query from the existing corpus and
//! nothing is committed.
//!
//! Reward is `task + info_gain - lambda * cost`, where
//! - `info_gain` is the fraction of cells of a coarse `(x, y, z, t)` grid
//!   first covered by the step's observed surface points;
//! - `cost` sums, over time steps, translation distance, geodesic rotation
//!   angle and `|ln(f / f_prev)|` against the previous iteration's action
//!   (or the previous time step when there is no previous iteration).

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusError, EvidenceCorpus};
use crate::geometry::{unproject, ActionSequence, CameraAction, CameraIntrinsics, GeometryError};
use crate::image::{Frame, RgbImage};
use crate::pipeline::{run_query, Completer, PipelineConfig, PipelineError};
use crate::scene::{generate_scene, render_oracle, SceneConfig, SceneError, SceneSpec};
use crate::trajectory::{orbit, OrbitSpec};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("action horizon {got} does not match environment horizon {expected}")]
    HorizonMismatch { expected: u32, got: u32 },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("log write failed: {0}")]
    Log(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvMode {
    Real,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    /// Edge length of one spatial cell, meters.
    pub cell_size: f64,
    /// Frames per time bin.
    pub time_bin: u32,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.5,
            time_bin: 1,
            bounds_min: [-20.0, -20.0, -1.0],
            bounds_max: [20.0, 20.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub horizon: u32,
    pub gamma: f64,
    pub lambda: f64,
    pub coverage: CoverageConfig,
    pub scene: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    pub pipeline: PipelineConfig,
    pub mode: EnvMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 121,
            gamma: 0.95,
            lambda: 0.1,
            coverage: CoverageConfig::default(),
            scene: SceneConfig::default(),
            intrinsics: CameraIntrinsics::centered(140.0, 160, 120, 0.1, 60.0).expect("valid"),
            pipeline: PipelineConfig::default(),
            mode: EnvMode::Real,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.horizon == 0 {
            return bad("horizon must be >= 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        let c = &self.coverage;
        if !(c.cell_size > 0.0) || c.time_bin == 0 {
            return bad("coverage cell_size and time_bin must be positive");
        }
        if (0..3).any(|i| !(c.bounds_max[i] > c.bounds_min[i])) {
            return bad("coverage bounds must be nonempty");
        }
        self.pipeline
            .retrieval
            .validate()
            .map_err(|e| EnvError::InvalidConfig(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Bitset over `(x, y, z, t-bin)` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageGrid {
    cfg: CoverageConfig,
    dims: [usize; 4],
    bits: Vec<u64>,
    covered: usize,
}

impl CoverageGrid {
    pub fn new(cfg: &CoverageConfig, horizon: u32) -> Self {
        let axis = |i: usize| ((cfg.bounds_max[i] - cfg.bounds_min[i]) / cfg.cell_size).ceil() as usize;
        let dims = [axis(0), axis(1), axis(2), horizon.div_ceil(cfg.time_bin) as usize];
        let total: usize = dims.iter().product();
        Self {
            cfg: cfg.clone(),
            dims,
            bits: vec![0; total.div_ceil(64)],
            covered: 0,
        }
    }

    pub fn total_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn covered_cells(&self) -> usize {
        self.covered
    }

    pub fn fraction(&self) -> f64 {
        self.covered as f64 / self.total_cells() as f64
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.bits[cell / 64] >> (cell % 64) & 1 == 1
    }

    /// Cell index of a world point at time `t`, if inside the bounds.
    pub fn cell_of(&self, p: &Vector3<f64>, t: u32) -> Option<usize> {
        let mut idx = [0usize; 4];
        for i in 0..3 {
            let v = (p[i] - self.cfg.bounds_min[i]) / self.cfg.cell_size;
            if !(v >= 0.0) || v >= self.dims[i] as f64 {
                return None;
            }
            idx[i] = v as usize;
        }
        idx[3] = ((t.max(1) - 1) / self.cfg.time_bin) as usize;
        if idx[3] >= self.dims[3] {
            return None;
        }
        Some(((idx[3] * self.dims[2] + idx[2]) * self.dims[1] + idx[1]) * self.dims[0] + idx[0])
    }

    /// Cells hit by the valid-depth pixels of one observation.
    pub fn cells_of_depth(&self, depth: &[f32], action: &CameraAction) -> Vec<usize> {
        let w = action.intrinsics.width() as usize;
        let mut cells: Vec<usize> = depth
            .iter()
            .enumerate()
            .filter(|(_, d)| **d > 0.0)
            .filter_map(|(i, d)| {
                let px = Vector2::new((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
                let p = unproject(&px, *d as f64, action).ok()?;
                self.cell_of(&p, action.time)
            })
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Number of `cells` not yet covered (duplicates counted once).
    pub fn count_new(&self, cells: &[usize]) -> usize {
        let mut sorted = cells.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        sorted.iter().filter(|c| !self.contains(**c)).count()
    }

    /// Marks cells covered; returns how many were new.
    pub fn commit(&mut self, cells: &[usize]) -> usize {
        let mut new = 0;
        for &c in cells {
            let (word, bit) = (c / 64, 1u64 << (c % 64));
            if self.bits[word] & bit == 0 {
                self.bits[word] |= bit;
                new += 1;
            }
        }
        self.covered += new;
        new
    }
}

/// Cells covered by frames observed under `actions`.
pub fn observation_cells(grid: &CoverageGrid, frames: &[Frame], actions: &ActionSequence) -> Vec<usize> {
    let mut cells: Vec<usize> = frames
        .par_iter()
        .zip(actions.as_slice())
        .flat_map_iter(|(f, a)| match &f.depth {
            Some(d) => grid.cells_of_depth(d.as_slice(), a),
            None => Vec::new(),
        })
        .collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Newly covered fraction of the grid, without committing.
pub fn info_gain(grid: &CoverageGrid, frames: &[Frame], actions: &ActionSequence) -> f64 {
    grid.count_new(&observation_cells(grid, frames, actions)) as f64 / grid.total_cells() as f64
}

fn step_cost(a: &CameraAction, b: &CameraAction) -> f64 {
    let translation = (a.pose.center() - b.pose.center()).norm();
    let rotation = a.pose.rotation_angle_to(&b.pose);
    let zoom = (a.intrinsics.focal() / b.intrinsics.focal()).ln().abs();
    translation + rotation + zoom
}

pub fn action_cost(actions: &ActionSequence, previous: Option<&ActionSequence>) -> f64 {
    match previous {
        Some(prev) => actions
            .iter()
            .zip(prev.iter())
            .map(|(a, b)| step_cost(a, b))
            .sum(),
        None => actions
            .as_slice()
            .windows(2)
            .map(|w| step_cost(&w[1], &w[0]))
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: f64,
    pub info_gain: f64,
    pub cost: f64,
    pub lambda: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(task: f64, info_gain: f64, cost: f64, lambda: f64) -> Self {
        Self {
            task,
            info_gain,
            cost,
            lambda,
            total: task + info_gain - lambda * cost,
        }
    }
}

/// Optional task reward on the step's observation.
pub trait TaskScorer: Send + Sync {
    fn score(&self, scene: &SceneSpec, actions: &ActionSequence, frames: &[RgbImage]) -> f64;
}

/// One JSON line per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u32,
    pub mode: EnvMode,
    pub iteration: u32,
    pub actions_hash: String,
    pub reward: RewardBreakdown,
    pub coverage_fraction: f64,
    pub observation_hash: String,
    pub discounted_return: f64,
}

impl StepLog {
    pub fn write_json_line(&self, out: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}

pub struct StepOutcome {
    pub frames: Vec<RgbImage>,
    pub reward: RewardBreakdown,
    pub log: StepLog,
}

pub fn actions_hash(actions: &ActionSequence) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(actions).expect("actions serialize")))
}

pub fn observation_hash(frames: &[RgbImage]) -> String {
    let mut h = Sha256::new();
    for f in frames {
        h.update(f.width().to_le_bytes());
        h.update(f.height().to_le_bytes());
        h.update(f.as_raw());
    }
    hex::encode(h.finalize())
}

#[derive(Clone)]
pub struct Episode {
    config: EnvConfig,
    seed: u64,
    scene: Arc<SceneSpec>,
    corpus: EvidenceCorpus,
    coverage: CoverageGrid,
    logs: Vec<StepLog>,
    discounted_return: f64,
    task: Option<Arc<dyn TaskScorer>>,
}

impl std::fmt::Debug for Episode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Episode")
            .field("seed", &self.seed)
            .field("iteration", &self.iteration())
            .field("steps", &self.logs.len())
            .finish()
    }
}

/// Fresh episode: scene from `seed`, empty corpus, empty coverage.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<Episode, EnvError> {
    config.validate()?;
    let scene_cfg = SceneConfig {
        horizon: config.horizon,
        ..config.scene.clone()
    };
    let scene = generate_scene(seed, &scene_cfg)?;
    Episode::with_scene(config, seed, scene)
}

impl Episode {
    /// Episode over a given scene, for hand-built worlds.
    pub fn with_scene(config: &EnvConfig, seed: u64, scene: SceneSpec) -> Result<Self, EnvError> {
        config.validate()?;
        if scene.horizon != config.horizon {
            return Err(EnvError::InvalidConfig(format!(
                "scene horizon {} differs from config horizon {}",
                scene.horizon, config.horizon
            )));
        }
        Ok(Self {
            config: config.clone(),
            seed,
            scene: Arc::new(scene),
            corpus: EvidenceCorpus::new(config.horizon),
            coverage: CoverageGrid::new(&config.coverage, config.horizon),
            logs: Vec::new(),
            discounted_return: 0.0,
            task: None,
        })
    }

    pub fn set_task_scorer(&mut self, scorer: Arc<dyn TaskScorer>) {
        self.task = Some(scorer);
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn scene(&self) -> &SceneSpec {
        &self.scene
    }
    pub fn corpus(&self) -> &EvidenceCorpus {
        &self.corpus
    }
    pub fn coverage(&self) -> &CoverageGrid {
        &self.coverage
    }
    pub fn logs(&self) -> &[StepLog] {
        &self.logs
    }
    /// `k`: index of the next real iteration.
    pub fn iteration(&self) -> u32 {
        self.corpus.iteration_count() + 1
    }
    pub fn discounted_return(&self) -> f64 {
        self.discounted_return
    }

    pub fn set_mode(&mut self, mode: EnvMode) {
        self.config.mode = mode;
    }

    fn previous_actions(&self) -> Option<ActionSequence> {
        self.corpus.iteration_actions(self.corpus.iteration_count()).cloned()
    }

    /// Renders the oracle frames for `actions` without touching the episode.
    pub fn render(&self, actions: &ActionSequence) -> Result<Vec<Frame>, EnvError> {
        actions
            .as_slice()
            .par_iter()
            .map(|a| render_oracle(&self.scene, a).map_err(EnvError::from))
            .collect()
    }

    pub fn step(&mut self, actions: &ActionSequence) -> Result<StepOutcome, EnvError> {
        if actions.horizon() != self.config.horizon {
            return Err(EnvError::HorizonMismatch {
                expected: self.config.horizon,
                got: actions.horizon(),
            });
        }
        let cost = action_cost(actions, self.previous_actions().as_ref());
        let (frames, new_cells) = match self.config.mode {
            EnvMode::Real => {
                let frames = self.render(actions)?;
                let cells = observation_cells(&self.coverage, &frames, actions);
                let new = self.coverage.commit(&cells);
                self.corpus = self.corpus.add_iteration(actions, frames.clone())?;
                (frames.into_iter().map(|f| f.rgb).collect::<Vec<_>>(), new)
            }
            EnvMode::Surrogate => {
                let out = run_query(&self.corpus, actions, &self.config.pipeline, &Completer::Baseline)?;
                let mut cells: Vec<usize> = out
                    .partials
                    .par_iter()
                    .zip(actions.as_slice())
                    .flat_map_iter(|(p, a)| self.coverage.cells_of_depth(p.depth_buffer.as_slice(), a))
                    .collect();
                cells.sort_unstable();
                cells.dedup();
                let new = self.coverage.count_new(&cells);
                (out.completed.into_iter().map(|c| c.rgb).collect(), new)
            }
        };
        let info_gain = new_cells as f64 / self.coverage.total_cells() as f64;
        let task = self
            .task
            .as_ref()
            .map_or(0.0, |s| s.score(&self.scene, actions, &frames));
        let reward = RewardBreakdown::new(task, info_gain, cost, self.config.lambda);
        let step = self.logs.len() as u32 + 1;
        self.discounted_return += self.config.gamma.powi(step as i32 - 1) * reward.total;
        let log = StepLog {
            step,
            mode: self.config.mode,
            iteration: self.iteration(),
            actions_hash: actions_hash(actions),
            reward,
            coverage_fraction: self.coverage.fraction(),
            observation_hash: observation_hash(&frames),
            discounted_return: self.discounted_return,
        };
        self.logs.push(log.clone());
        Ok(StepOutcome { frames, reward, log })
    }
}

pub trait Policy {
    fn next_actions(&mut self, episode: &Episode) -> Result<ActionSequence, EnvError>;
}

/// Replays a fixed list of action sequences, cycling when exhausted.
pub struct ScriptedPolicy {
    script: Vec<ActionSequence>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new(script: Vec<ActionSequence>) -> Self {
        Self { script, cursor: 0 }
    }
}

impl Policy for ScriptedPolicy {
    fn next_actions(&mut self, _episode: &Episode) -> Result<ActionSequence, EnvError> {
        if self.script.is_empty() {
            return Err(EnvError::InvalidConfig("scripted policy has no actions".into()));
        }
        let a = self.script[self.cursor % self.script.len()].clone();
        self.cursor += 1;
        Ok(a)
    }
}

/// Seeded random orbits around the scene center.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    intrinsics: CameraIntrinsics,
}

impl RandomPolicy {
    pub fn new(seed: u64, intrinsics: CameraIntrinsics) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            intrinsics,
        }
    }
}

impl Policy for RandomPolicy {
    fn next_actions(&mut self, episode: &Episode) -> Result<ActionSequence, EnvError> {
        let spec = OrbitSpec {
            target: [self.rng.random_range(-2.0..2.0), self.rng.random_range(-2.0..2.0), 0.0],
            radius: self.rng.random_range(5.0..11.0),
            height: self.rng.random_range(4.0..9.0),
            start_deg: self.rng.random_range(0.0..360.0),
            sweep_deg: self.rng.random_range(-90.0..90.0),
        };
        let zoom = self.rng.random_range(0.8..1.6);
        let k = self.intrinsics.zoomed(zoom)?;
        Ok(orbit(&k, episode.config().horizon, &spec)?)
    }
}

/// Runs `steps` policy steps and returns the step logs.
pub fn run_episode(
    episode: &mut Episode,
    policy: &mut dyn Policy,
    steps: usize,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<Vec<StepLog>, EnvError> {
    let mut logs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let actions = policy.next_actions(episode)?;
        let outcome = episode.step(&actions)?;
        if let Some(sink) = log_sink.as_deref_mut() {
            outcome.log.write_json_line(sink)?;
        }
        logs.push(outcome.log);
    }
    Ok(logs)
}
