mod common;

use aw4re_core::metrics::evaluate_query;
use aw4re_core::pipeline::{run_query, Completer, PipelineConfig};
use aw4re_core::image::RgbImage;

use common::*;

/// Evidence-region PSNR of the zoom x2 query, recorded from the first
/// oracle run. The acceptance floor is 25 dB; this pins the exact value so
/// decoder changes show up.
const ZOOM_EVIDENCE_PSNR: f64 = 33.758;

#[test]
fn zoom_evidence_psnr_matches_golden_value() {
    let (corpus, query, truth) = zoom_fixture();
    let out = run_query(&corpus, &query, &PipelineConfig::default(), &Completer::Baseline).unwrap();
    let reference: Vec<RgbImage> = truth.into_iter().map(|f| f.rgb).collect();
    let report = evaluate_query(&out.completed, &out.partials, Some(&reference)).unwrap();
    let got = report.evidence_psnr().unwrap();
    assert!((got - ZOOM_EVIDENCE_PSNR).abs() < 5e-4, "{got}");
    let blind = evaluate_query(&out.completed, &out.partials, None).unwrap();
    assert!(blind.evidence_psnr().unwrap() > got, "evidence vs itself beats evidence vs truth");
}
