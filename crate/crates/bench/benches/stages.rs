use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use semmap_bench::{calibration_set, ring_of_rays, scattered_reports, textured_image};
use semmap_core::base::ClusterSet;
use semmap_core::detect::{calibrate_thresholds, laplacian_variance};
use semmap_core::pipeline::run;
use semmap_core::reconcile::{triangulate, TriangulationParams};
use semmap_core::{PipelineConfig, RunConfig};

fn sharpness(c: &mut Criterion) {
    let img = textured_image(128, 80, 1);
    c.bench_function("laplacian_variance 128x80", |b| b.iter(|| laplacian_variance(black_box(&img)).unwrap()));
    c.bench_function("gaussian blur 128x80", |b| b.iter(|| black_box(&img).blurred(1.5)));
}

fn geometry(c: &mut Criterion) {
    let params = TriangulationParams::default();
    for n in [2, 10, 50] {
        let rays = ring_of_rays(n);
        c.bench_function(&format!("triangulate {n} rays"), |b| b.iter(|| triangulate(black_box(&rays), &params)));
    }
}

fn base_station(c: &mut Criterion) {
    let cfg = PipelineConfig::default();
    let reports = scattered_reports(200, 2);
    c.bench_function("cluster 200 reports", |b| {
        b.iter_batched(
            || reports.clone(),
            |reports| {
                let mut set = ClusterSet::new();
                for (i, r) in reports.into_iter().enumerate() {
                    set.ingest(r, i as f64, &cfg);
                }
                set
            },
            BatchSize::SmallInput,
        )
    });
}

fn calibration(c: &mut Criterion) {
    let samples = calibration_set(10_000, 3);
    c.bench_function("calibrate 10k samples", |b| b.iter(|| calibrate_thresholds(black_box(&samples))));
}

fn mission(c: &mut Criterion) {
    let mut cfg = RunConfig::load("prelim").unwrap();
    cfg.scenario.duration_s = 60.0;
    let mut group = c.benchmark_group("mission");
    group.sample_size(10);
    group.bench_function("prelim, one simulated minute", |b| b.iter(|| run(&cfg, 7, None, None).unwrap()));
    group.finish();
}

criterion_group!(benches, sharpness, geometry, base_station, calibration, mission);
criterion_main!(benches);
