use std::path::PathBuf;

use aw4re_core::corpus::EvidenceCorpus;
use aw4re_core::geometry::CameraIntrinsics;
use aw4re_core::retrieval::{select_evidence, RetrievalConfig};
use aw4re_core::scene::{generate_scene, render_oracle, SceneConfig};
use aw4re_core::trajectory::{orbit, OrbitSpec};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus_golden")
}

fn golden_corpus() -> EvidenceCorpus {
    let k = CameraIntrinsics::centered(24.0, 24, 18, 0.1, 60.0).unwrap();
    let scene = generate_scene(
        42,
        &SceneConfig {
            horizon: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let seq = orbit(&k, 2, &OrbitSpec::default()).unwrap();
    let frames = seq.iter().map(|a| render_oracle(&scene, a).unwrap()).collect();
    EvidenceCorpus::new(2).add_iteration(&seq, frames).unwrap()
}

/// Rewrites the committed fixture. Run with `--ignored` after a deliberate
/// format change.
#[test]
#[ignore]
fn regenerate_golden_fixture() {
    let dir = fixture_dir();
    let _ = std::fs::remove_dir_all(&dir);
    golden_corpus().save(&dir).unwrap();
    std::fs::write(dir.with_extension("sha256"), golden_corpus().content_hash()).unwrap();
}

#[test]
fn committed_fixture_loads() {
    let loaded = EvidenceCorpus::load(fixture_dir()).unwrap();
    let expected = std::fs::read_to_string(fixture_dir().with_extension("sha256")).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded.content_hash(), expected.trim());
    assert_eq!(loaded.content_hash(), golden_corpus().content_hash());
}

#[test]
fn snapshots_ignore_later_iterations() {
    let base = golden_corpus();
    let seq = base.iteration_actions(1).unwrap().clone();
    let query = seq.at(2).unwrap();
    let cfg = RetrievalConfig::default();
    let before = select_evidence(&base, query, &cfg).unwrap();
    let frames = base.records().map(|r| r.frame().clone()).collect();
    let grown = base.add_iteration(&seq, frames).unwrap();
    assert_eq!(grown.len(), 4);
    assert_eq!(select_evidence(&base, query, &cfg).unwrap(), before);
    assert_eq!(base.len(), 2);
}
