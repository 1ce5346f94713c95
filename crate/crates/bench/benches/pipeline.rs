use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonarblob::cluster::select_model_order;
use sonarblob::config::RunConfig;
use sonarblob::graphbuild::{build_graph, build_graph_exhaustive};
use sonarblob::pipeline::{detect_block, extract_points};
use sonarblob::signalproc::{make_chirp, MatchedFilter};
use sonarblob::simulate::{synth_block, Scenario};
use sonarblob::{AffinityGraph, AffinityParams, EchoPoint, PingRecord};

fn block(cfg: &RunConfig, seed: u64) -> Vec<PingRecord> {
    let bank = Scenario::synthetic_clutter(seed, &cfg.scenario, &cfg.chirp).unwrap();
    let scenario = Scenario::generate(seed, &cfg.scenario, &cfg.chirp, &bank).unwrap();
    synth_block(&scenario, &cfg.chirp, &bank).unwrap()
}

fn random_points(r: &mut ChaCha8Rng, n: usize, bins: usize) -> Vec<EchoPoint> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..bins).map(|_| r.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            EchoPoint::new(r.random_range(0.0..20.0), r.random_range(1..=20), 1e-5)
                .with_spectrum(raw.into_iter().map(|v| v / s).collect())
                .unwrap()
        })
        .collect()
}

fn random_graph(r: &mut ChaCha8Rng, n: usize) -> AffinityGraph {
    let mut w = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < 0.3 {
                let v = r.random::<f64>();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    AffinityGraph::from_weights(w).unwrap()
}

fn matched_filter(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let pings = block(&cfg, 1);
    let replica = make_chirp(&cfg.chirp).unwrap();
    let mf = MatchedFilter::new(&replica, pings[0].samples.len()).unwrap();
    c.bench_function("matched_filter/ping", |b| {
        b.iter(|| mf.apply(black_box(&pings[0].samples)).unwrap())
    });
}

fn graph(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("build_graph");
    for n in [40, 120] {
        let pts = random_points(&mut r, n, 100);
        let params = AffinityParams::default();
        group.bench_with_input(BenchmarkId::new("gated", n), &pts, |b, pts| {
            b.iter(|| build_graph(pts, &params).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("all_pairs", n), &pts, |b, pts| {
            b.iter(|| build_graph_exhaustive(pts, &params).unwrap())
        });
    }
    group.finish();
}

fn model_order(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut group = c.benchmark_group("select_model_order");
    for n in [40, 120] {
        let g = random_graph(&mut r, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| {
            b.iter(|| select_model_order(g, 10, 0.1, 7).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let pings = block(&cfg, 4);
    let mut group = c.benchmark_group("block");
    group.sample_size(20);
    group.bench_function("extract_points", |b| {
        b.iter(|| extract_points(black_box(&pings), &cfg.chirp, &cfg.detector).unwrap())
    });
    group.bench_function("detect_block", |b| {
        b.iter(|| detect_block(black_box(&pings), &cfg.chirp, &cfg.detector).unwrap())
    });
    group.finish();
}

criterion_group!(benches, matched_filter, graph, model_order, end_to_end);
criterion_main!(benches);
