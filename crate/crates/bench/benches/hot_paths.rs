use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{Vector2, Vector3};

use aw4re_bench::{orbit_corpus, shifted_orbit};
use aw4re_core::decoder::{splat, DecoderConfig};
use aw4re_core::geometry::{project, unproject};
use aw4re_core::metrics::ssim;
use aw4re_core::proxy::build_proxy;
use aw4re_core::retrieval::{select_evidence, RetrievalConfig};

const HORIZON: u32 = 30;

fn bench_project(c: &mut Criterion) {
    let (_, actions, _) = orbit_corpus(2);
    let a = actions.at(1).unwrap();
    let points: Vec<Vector3<f64>> = (0..1024)
        .map(|i| unproject(&Vector2::new((i % 160) as f64 + 0.5, (i / 160) as f64 + 0.5), 5.0, a).unwrap())
        .collect();
    c.bench_function("project_1024", |b| {
        b.iter(|| {
            for p in &points {
                black_box(project(black_box(p), a).ok());
            }
        })
    });
}

fn bench_select(c: &mut Criterion) {
    let (corpus, _, _) = orbit_corpus(HORIZON);
    let query = shifted_orbit(HORIZON, 10.0);
    let cfg = RetrievalConfig::default();
    let a = query.at(HORIZON / 2).unwrap();
    c.bench_function("select_evidence_30", |b| {
        b.iter(|| black_box(select_evidence(&corpus, a, &cfg).unwrap()))
    });
}

fn bench_splat(c: &mut Criterion) {
    let (corpus, _, _) = orbit_corpus(HORIZON);
    let query = shifted_orbit(HORIZON, 10.0);
    let a = query.at(HORIZON / 2).unwrap();
    let cfg = DecoderConfig::default();
    let sel = select_evidence(&corpus, a, &RetrievalConfig::default()).unwrap();
    let cloud = build_proxy(a, &sel, &corpus, &cfg.proxy).unwrap();
    c.bench_function("build_proxy", |b| {
        b.iter(|| black_box(build_proxy(a, &sel, &corpus, &cfg.proxy).unwrap()))
    });
    c.bench_function("splat", |b| b.iter(|| black_box(splat(&cloud, a, &cfg))));
}

fn bench_ssim(c: &mut Criterion) {
    let (_, _, frames) = orbit_corpus(2);
    let (x, y) = (&frames[0].rgb, &frames[1].rgb);
    c.bench_function("ssim_160x120", |b| b.iter(|| black_box(ssim(x, y, None).unwrap())));
}

criterion_group!(benches, bench_project, bench_select, bench_splat, bench_ssim);
criterion_main!(benches);
