use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use aw4re_core::completion::{CompletedObservation, CompletionSource, PluginSpec};
use aw4re_core::corpus::codec::{decode_mask_png, decode_rgb_png, encode_mask_png, encode_rgb_png};
use aw4re_core::corpus::EvidenceCorpus;
use aw4re_core::decoder::{PartialObservation, PixelOrigin};
use aw4re_core::env::{reset, run_episode, EnvConfig, EnvMode, Episode, Policy, RandomPolicy, ScriptedPolicy};
use aw4re_core::geometry::ActionSequence;
use aw4re_core::image::{DepthMap, Mask, RgbImage};
use aw4re_core::metrics::{evaluate_query, MetricsReport};
use aw4re_core::pipeline::{run_query, Completer, PipelineConfig, QueryOutput};
use aw4re_core::retrieval::{score_corpus, select_evidence, EvidenceSelection, RetrievalScope, ScoredIndex};
use aw4re_core::scene::{generate_scene, render_oracle, SceneConfig, SceneSpec};
use aw4re_core::trajectory::Generator;

use crate::manifest::RunRecorder;
use crate::plot::{bar_chart, line_chart, Series};
use crate::{ActionsArgs, Cli, Command, EnvCommand, GlobalArgs, ModeArg, PolicyArg, RetrievalArg, SceneCommand};

/// Bad invocation: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const SCENE_FILE: &str = "scene.json";
pub const CORPUS_DIR: &str = "corpus";

fn load_config(global: &GlobalArgs) -> Result<EnvConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str::<EnvConfig>(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => EnvConfig::default(),
    };
    if let Some(mode) = global.mode {
        cfg.mode = match mode {
            ModeArg::Real => EnvMode::Real,
            ModeArg::Surrogate => EnvMode::Surrogate,
        };
    }
    if let Some(r) = global.retrieval {
        cfg.pipeline.retrieval.scope = scope_of(r);
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn scope_of(r: RetrievalArg) -> RetrievalScope {
    match r {
        RetrievalArg::FourD => RetrievalScope::FourDInformed,
        RetrievalArg::TimeLocal => RetrievalScope::TimeLocal,
    }
}

fn scope_name(scope: RetrievalScope) -> &'static str {
    match scope {
        RetrievalScope::FourDInformed => "4d_informed",
        RetrievalScope::TimeLocal => "time_local",
    }
}

fn out_dir(global: &GlobalArgs) -> Result<PathBuf> {
    let dir = global.out.clone().ok_or_else(|| usage("--out DIR is required"))?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn resolve_actions(args: &ActionsArgs, cfg: &EnvConfig, horizon: u32, default: &str) -> Result<ActionSequence> {
    if let Some(path) = &args.actions {
        return read_json(path);
    }
    let name = args.trajectory.as_deref().unwrap_or(default);
    let generator = Generator::named(name).ok_or_else(|| {
        usage(format!("unknown trajectory {name:?}; expected one of {}", Generator::NAMES.join(", ")))
    })?;
    Ok(generator.build(&cfg.intrinsics, horizon)?)
}

fn scene_for(cfg: &EnvConfig, seed: u64, path: Option<&Path>) -> Result<SceneSpec> {
    match path {
        Some(p) => read_json(p),
        None => {
            let scene_cfg = SceneConfig {
                horizon: cfg.horizon,
                ..cfg.scene.clone()
            };
            Ok(generate_scene(seed, &scene_cfg)?)
        }
    }
}

/// Parses `1-20,55,60-121` into a set of 1-based time steps.
pub fn parse_observe(spec: &str, horizon: u32) -> Result<BTreeSet<u32>> {
    let mut out = BTreeSet::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (lo, hi) = match part.split_once('-') {
            Some((a, b)) => (a.trim().parse::<u32>(), b.trim().parse::<u32>()),
            None => (part.parse::<u32>(), part.parse::<u32>()),
        };
        let (lo, hi) = match (lo, hi) {
            (Ok(lo), Ok(hi)) if lo >= 1 && lo <= hi && hi <= horizon => (lo, hi),
            _ => return Err(usage(format!("bad --observe range {part:?} for horizon {horizon}"))),
        };
        out.extend(lo..=hi);
    }
    if out.is_empty() {
        return Err(usage("--observe selects no time steps"));
    }
    Ok(out)
}

fn completer(global: &GlobalArgs) -> Completer {
    match &global.plugin {
        Some(path) => Completer::External(PluginSpec {
            strict: global.strict,
            ..PluginSpec::new(path)
        }),
        None => Completer::Baseline,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Scene {
            command: SceneCommand::Gen,
        } => scene_gen(g),
        Command::Capture {
            actions,
            scene,
            observe,
            append,
        } => capture(g, actions, scene.as_deref(), observe.as_deref(), *append),
        Command::Query { corpus, actions } => query(g, corpus, actions),
        Command::Eval { query, scene } => eval(g, query, scene.as_deref()),
        Command::Compare { corpus, actions, scene } => compare(g, corpus, actions, scene.as_deref()),
        Command::Env {
            command: EnvCommand::Run { policy, steps, actions },
        } => env_run(g, *policy, *steps, actions),
        Command::Explain { corpus, actions, t } => explain(g, corpus, actions, *t),
    }
}

fn scene_gen(g: &GlobalArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("scene gen", cfg.hash(), g.seed);
    let scene = scene_for(&cfg, g.seed, None)?;
    let path = dir.join(SCENE_FILE);
    fs::write(&path, scene.to_json())?;
    run.output(&path);
    run.finish(&dir)?;
    println!("{}", path.display());
    Ok(())
}

fn capture(
    g: &GlobalArgs,
    actions: &ActionsArgs,
    scene_path: Option<&Path>,
    observe: Option<&str>,
    append: bool,
) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("capture", cfg.hash(), g.seed);
    let scene = scene_for(&cfg, g.seed, scene_path)?;
    if let Some(p) = scene_path {
        run.input(p);
    }
    let seq = resolve_actions(actions, &cfg, scene.horizon, "orbit")?;
    if seq.horizon() != scene.horizon {
        bail!("action horizon {} does not match scene horizon {}", seq.horizon(), scene.horizon);
    }
    let keep = match observe {
        Some(spec) => parse_observe(spec, scene.horizon)?,
        None => (1..=scene.horizon).collect(),
    };
    let corpus_dir = dir.join(CORPUS_DIR);
    let corpus = if append && corpus_dir.join(aw4re_core::corpus::MANIFEST_FILE).exists() {
        run.input(&corpus_dir);
        EvidenceCorpus::load(&corpus_dir)?
    } else {
        if corpus_dir.exists() {
            fs::remove_dir_all(&corpus_dir)?;
        }
        EvidenceCorpus::new(scene.horizon)
    };
    let frames = seq
        .iter()
        .map(|a| {
            if keep.contains(&a.time) {
                render_oracle(&scene, a).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let corpus = corpus.add_partial_iteration(&seq, frames)?;
    corpus.save(&corpus_dir)?;
    let scene_out = dir.join(SCENE_FILE);
    fs::write(&scene_out, scene.to_json())?;
    run.output(&corpus_dir);
    run.output(&scene_out);
    run.finish(&dir)?;
    println!(
        "captured iteration {} ({} frames); corpus {}",
        corpus.iteration_count(),
        keep.len(),
        corpus.content_hash()
    );
    Ok(())
}

/// Per-step record written to `diagnostics.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: u32,
    pub selection: EvidenceSelection,
    pub support_density: f64,
    pub splat_pixels: usize,
    pub fill_pixels: usize,
    pub completion_source: CompletionSource,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QueryDiagnostics {
    pub retrieval: String,
    pub corpus_hash: String,
    pub config_hash: String,
    pub steps: Vec<StepDiagnostics>,
}

fn frame_name(t: usize) -> String {
    format!("t{t:04}.png")
}

fn write_query(dir: &Path, actions: &ActionSequence, out: &QueryOutput, diag: &QueryDiagnostics) -> Result<()> {
    write_json(&dir.join("actions.json"), actions)?;
    for sub in ["partial", "support", "completed"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    for (i, (p, c)) in out.partials.iter().zip(&out.completed).enumerate() {
        let name = frame_name(i + 1);
        fs::write(dir.join("partial").join(&name), encode_rgb_png(&p.rgb)?)?;
        fs::write(dir.join("support").join(&name), encode_mask_png(&p.support_mask)?)?;
        fs::write(dir.join("completed").join(&name), encode_rgb_png(&c.rgb)?)?;
    }
    write_json(&dir.join("diagnostics.json"), diag)
}

fn diagnostics(scope: RetrievalScope, corpus: &EvidenceCorpus, cfg: &EnvConfig, out: &QueryOutput) -> QueryDiagnostics {
    let steps = out
        .selections
        .iter()
        .zip(&out.partials)
        .zip(&out.completed)
        .map(|((sel, p), c)| StepDiagnostics {
            t: sel.query_time,
            selection: sel.clone(),
            support_density: p.support_density,
            splat_pixels: p.origin.iter().filter(|o| matches!(o, PixelOrigin::Splat { .. })).count(),
            fill_pixels: p.origin.iter().filter(|o| matches!(o, PixelOrigin::Fill)).count(),
            completion_source: c.completion_source.clone(),
        })
        .collect();
    QueryDiagnostics {
        retrieval: scope_name(scope).to_string(),
        corpus_hash: corpus.content_hash(),
        config_hash: cfg.hash(),
        steps,
    }
}

fn query(g: &GlobalArgs, corpus_dir: &Path, actions: &ActionsArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("query", cfg.hash(), g.seed);
    let corpus = EvidenceCorpus::load(corpus_dir)?;
    run.input(corpus_dir);
    if let Some(p) = &actions.actions {
        run.input(p);
    }
    let seq = resolve_actions(actions, &cfg, corpus.horizon(), "orbit")?;
    let out = run_query(&corpus, &seq, &cfg.pipeline, &completer(g))?;
    let diag = diagnostics(cfg.pipeline.retrieval.scope, &corpus, &cfg, &out);
    write_query(&dir, &seq, &out, &diag)?;
    run.output(&dir);
    run.finish(&dir)?;
    let supported = out.partials.iter().filter(|p| p.support_mask.any()).count();
    println!("{} frames, {supported} with evidence", out.completed.len());
    Ok(())
}

/// Reads a `query` output directory back into observations.
pub fn read_query(dir: &Path) -> Result<(ActionSequence, Vec<PartialObservation>, Vec<CompletedObservation>, QueryDiagnostics)> {
    let actions: ActionSequence = read_json(&dir.join("actions.json"))?;
    let diag: QueryDiagnostics = read_json(&dir.join("diagnostics.json"))?;
    let mut partials = Vec::new();
    let mut completed = Vec::new();
    for (i, step) in diag.steps.iter().enumerate() {
        let name = frame_name(i + 1);
        let read = |sub: &str| fs::read(dir.join(sub).join(&name)).with_context(|| format!("reading {sub}/{name}"));
        let rgb = decode_rgb_png(&read("partial")?)?;
        let support_mask = decode_mask_png(&read("support")?)?;
        let (w, h) = rgb.dims();
        completed.push(CompletedObservation {
            rgb: decode_rgb_png(&read("completed")?)?,
            support_mask: support_mask.clone(),
            completion_source: step.completion_source.clone(),
        });
        partials.push(PartialObservation {
            support_density: support_mask.fraction(),
            rgb,
            support_mask,
            depth_buffer: DepthMap::new(w, h),
            origin: vec![PixelOrigin::None; w as usize * h as usize],
            blocked: Mask::new(w, h),
        });
    }
    if partials.len() != actions.len() {
        bail!("query output has {} frames for {} actions", partials.len(), actions.len());
    }
    Ok((actions, partials, completed, diag))
}

fn oracle_frames(scene: &SceneSpec, actions: &ActionSequence) -> Result<Vec<RgbImage>> {
    actions
        .iter()
        .map(|a| Ok(render_oracle(scene, a)?.rgb))
        .collect()
}

fn write_report(dir: &Path, name: &str, report: &MetricsReport) -> Result<()> {
    write_json(&dir.join(format!("{name}.json")), report)?;
    fs::write(
        dir.join(format!("{name}.csv")),
        format!("{}\n{}\n", report.csv_header(), report.csv_row()),
    )?;
    if let MetricsReport::Reference { per_frame, .. } = report {
        let mut csv = String::from("t,support_density,full_psnr,full_ssim,evidence_psnr\n");
        for f in per_frame {
            csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                f.t,
                f.support_density,
                f.full_psnr,
                f.full_ssim,
                f.evidence_psnr.map(|v| format!("{v:.6}")).unwrap_or_default()
            ));
        }
        fs::write(dir.join(format!("{name}_per_frame.csv")), csv)?;
        let series = [Series {
            name: "full PSNR".into(),
            points: per_frame.iter().map(|f| (f.t as f64, f.full_psnr)).collect(),
        }];
        fs::write(dir.join(format!("{name}_psnr.svg")), line_chart(name, "dB", &series))?;
    }
    Ok(())
}

fn eval(g: &GlobalArgs, query_dir: &Path, scene_path: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("eval", cfg.hash(), g.seed);
    run.input(query_dir);
    let (actions, partials, completed, diag) = read_query(query_dir)?;
    let reference = match scene_path {
        Some(p) => {
            run.input(p);
            Some(oracle_frames(&read_json(p)?, &actions)?)
        }
        None => None,
    };
    let mut report = evaluate_query(&completed, &partials, reference.as_deref())?;
    let meta = report.metadata_mut();
    meta.query_id = query_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    meta.mode = diag.retrieval.clone();
    meta.config_hash = diag.config_hash.clone();
    write_report(&dir, "metrics", &report)?;
    run.output(&dir);
    run.finish(&dir)?;
    println!("{}\n{}", report.csv_header(), report.csv_row());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareRow {
    pub t: u32,
    pub selected_4d: usize,
    pub selected_time_local: usize,
    pub psnr_4d: Option<f64>,
    pub psnr_time_local: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareReport {
    pub corpus_hash: String,
    pub config_hash: String,
    pub informed: MetricsReport,
    pub time_local: MetricsReport,
    pub rows: Vec<CompareRow>,
}

fn per_frame_psnr(report: &MetricsReport) -> Vec<Option<f64>> {
    match report {
        MetricsReport::Reference { per_frame, .. } => per_frame.iter().map(|f| Some(f.full_psnr)).collect(),
        MetricsReport::NoReference { metadata, .. } => vec![None; metadata.frames],
    }
}

fn compare(g: &GlobalArgs, corpus_dir: &Path, actions: &ActionsArgs, scene_path: Option<&Path>) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("compare", cfg.hash(), g.seed);
    let corpus = EvidenceCorpus::load(corpus_dir)?;
    run.input(corpus_dir);
    let seq = resolve_actions(actions, &cfg, corpus.horizon(), "orbit")?;
    let reference = match scene_path {
        Some(p) => {
            run.input(p);
            Some(oracle_frames(&read_json(p)?, &seq)?)
        }
        None => None,
    };
    let hash = corpus.content_hash();
    let mut outputs = Vec::new();
    for scope in [RetrievalScope::FourDInformed, RetrievalScope::TimeLocal] {
        let mut pipeline: PipelineConfig = cfg.pipeline.clone();
        pipeline.retrieval.scope = scope;
        let out = run_query(&corpus, &seq, &pipeline, &completer(g))?;
        if corpus.content_hash() != hash {
            bail!("corpus changed during comparison");
        }
        let mut report = evaluate_query(&out.completed, &out.partials, reference.as_deref())?;
        let meta = report.metadata_mut();
        meta.mode = scope_name(scope).into();
        meta.config_hash = cfg.hash();
        meta.query_id = "compare".into();
        let sub = dir.join(scope_name(scope));
        fs::create_dir_all(&sub)?;
        write_query(&sub, &seq, &out, &diagnostics(scope, &corpus, &cfg, &out))?;
        write_report(&dir, scope_name(scope), &report)?;
        outputs.push((out, report));
    }
    let (informed, local) = (outputs.remove(0), outputs.remove(0));
    let (pi, pl) = (per_frame_psnr(&informed.1), per_frame_psnr(&local.1));
    let rows: Vec<CompareRow> = (0..seq.len())
        .map(|i| CompareRow {
            t: i as u32 + 1,
            selected_4d: informed.0.selections[i].len(),
            selected_time_local: local.0.selections[i].len(),
            psnr_4d: pi[i],
            psnr_time_local: pl[i],
        })
        .collect();
    let mut csv = String::from("t,selected_4d,selected_time_local,psnr_4d,psnr_time_local\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t,
            r.selected_4d,
            r.selected_time_local,
            opt(r.psnr_4d),
            opt(r.psnr_time_local)
        ));
    }
    fs::write(dir.join("compare.csv"), csv)?;
    let summary = |r: &MetricsReport| r.full_psnr().or_else(|| r.evidence_psnr()).unwrap_or(f64::NAN);
    let bars = vec![
        ("4d_informed".to_string(), summary(&informed.1)),
        ("time_local".to_string(), summary(&local.1)),
    ];
    fs::write(dir.join("compare.svg"), bar_chart("retrieval comparison", "PSNR dB", &bars))?;
    if reference.is_some() {
        let series: Vec<Series> = [("4d_informed", &pi), ("time_local", &pl)]
            .into_iter()
            .map(|(name, v)| Series {
                name: name.into(),
                points: v.iter().enumerate().filter_map(|(i, p)| p.map(|p| (i as f64 + 1.0, p))).collect(),
            })
            .collect();
        fs::write(dir.join("compare_per_frame.svg"), line_chart("full-frame PSNR", "dB", &series))?;
    }
    let report = CompareReport {
        corpus_hash: hash,
        config_hash: cfg.hash(),
        informed: informed.1,
        time_local: local.1,
        rows,
    };
    write_json(&dir.join("compare.json"), &report)?;
    run.output(&dir);
    run.finish(&dir)?;
    println!(
        "4d_informed {:.3} dB, time_local {:.3} dB",
        summary(&report.informed),
        summary(&report.time_local)
    );
    Ok(())
}

fn env_run(g: &GlobalArgs, policy: PolicyArg, steps: usize, actions: &ActionsArgs) -> Result<()> {
    let cfg = load_config(g)?;
    let dir = out_dir(g)?;
    let mut run = RunRecorder::new("env run", cfg.hash(), g.seed);
    let mut episode: Episode = reset(&cfg, g.seed)?;
    let mut policy: Box<dyn Policy> = match policy {
        PolicyArg::Scripted => {
            let seq = resolve_actions(actions, &cfg, cfg.horizon, "orbit")?;
            Box::new(ScriptedPolicy::new(vec![seq]))
        }
        PolicyArg::Random => Box::new(RandomPolicy::new(g.seed, cfg.intrinsics)),
    };
    let log_path = dir.join("log.jsonl");
    let mut log = fs::File::create(&log_path)?;
    let logs = run_episode(&mut episode, policy.as_mut(), steps, Some(&mut log))?;
    let corpus_dir = dir.join(CORPUS_DIR);
    if corpus_dir.exists() {
        fs::remove_dir_all(&corpus_dir)?;
    }
    episode.corpus().save(&corpus_dir)?;
    fs::write(dir.join(SCENE_FILE), episode.scene().to_json())?;
    run.output(&log_path);
    run.output(&corpus_dir);
    run.finish(&dir)?;
    let last = logs.last().ok_or_else(|| anyhow!("no steps were run"))?;
    println!(
        "{} steps, discounted return {:.6}, coverage {:.6}",
        logs.len(),
        last.discounted_return,
        last.coverage_fraction
    );
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Explanation {
    pub t: u32,
    pub retrieval: String,
    pub ranked: Vec<ScoredIndex>,
    pub selection: EvidenceSelection,
}

fn explain(g: &GlobalArgs, corpus_dir: &Path, actions: &ActionsArgs, t: u32) -> Result<()> {
    let cfg = load_config(g)?;
    let corpus = EvidenceCorpus::load(corpus_dir)?;
    let seq = resolve_actions(actions, &cfg, corpus.horizon(), "orbit")?;
    let query = seq
        .at(t)
        .ok_or_else(|| usage(format!("--t {t} outside 1..={}", seq.horizon())))?;
    let rcfg = &cfg.pipeline.retrieval;
    let explanation = Explanation {
        t,
        retrieval: scope_name(rcfg.scope).into(),
        ranked: score_corpus(&corpus, query, rcfg)?,
        selection: select_evidence(&corpus, query, rcfg)?,
    };
    let text = serde_json::to_string_pretty(&explanation)?;
    if let Some(out) = &g.out {
        fs::create_dir_all(out)?;
        fs::write(out.join("explain.json"), &text)?;
        let mut run = RunRecorder::new("explain", cfg.hash(), g.seed);
        run.input(corpus_dir);
        run.output(&out.join("explain.json"));
        run.finish(out)?;
    }
    println!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observe_ranges_parse() {
        let s = parse_observe("1-3, 7,9-10", 10).unwrap();
        assert_eq!(s.into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 7, 9, 10]);
    }

    #[test]
    fn bad_observe_ranges_are_usage_errors() {
        for bad in ["0-3", "5-2", "1-11", "x", ""] {
            let err = parse_observe(bad, 10).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{bad}");
        }
    }
}
