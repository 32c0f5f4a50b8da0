use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qbe_hough::detector::{detect, dtw_baseline, scan, DetectConfig};
use qbe_hough::distmat::{distance_matrix_with, render_image, Metric};
use qbe_hough::edge::{canny_with, CannyParams};
use qbe_hough::hough::{hough_accumulate_with, HoughParams};
use qbe_hough::synth::{self, planted_trial};
use qbe_hough::Exec;

const SCHEDULES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn stages(c: &mut Criterion) {
    let t = planted_trial(1, 80, 2000, 39, 4).unwrap();
    let dm = distance_matrix_with(&t.query, &t.reference, Metric::Canberra, Exec::Sequential).unwrap();
    let img = render_image(&dm);
    let em = canny_with(&img, &CannyParams::default(), Exec::Sequential).unwrap();

    let mut g = c.benchmark_group("stages_80x2000");
    for (name, exec) in SCHEDULES {
        g.bench_with_input(BenchmarkId::new("distance_matrix", name), &exec, |b, &exec| {
            b.iter(|| distance_matrix_with(black_box(&t.query), &t.reference, Metric::Canberra, exec).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("canny", name), &exec, |b, &exec| {
            b.iter(|| canny_with(black_box(&img), &CannyParams::default(), exec).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("hough_accumulate", name), &exec, |b, &exec| {
            b.iter(|| hough_accumulate_with(black_box(&em), &HoughParams::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let t = planted_trial(2, 80, 500, 39, 2).unwrap();
    let mut rng = synth::rng(3);
    let refs: Vec<(String, _)> = (0..16)
        .map(|i| {
            let r = synth::random_features(&mut rng, 500, 39);
            let planted = if i % 4 == 0 { synth::plant(&t.query, &r, &[100]).unwrap() } else { r };
            (format!("r{i:02}"), planted)
        })
        .collect();

    let mut g = c.benchmark_group("end_to_end");
    g.sample_size(20);
    for (name, exec) in SCHEDULES {
        let cfg = DetectConfig {
            exec,
            ..DetectConfig::default()
        };
        g.bench_with_input(BenchmarkId::new("detect_80x500", name), &cfg, |b, cfg| {
            b.iter(|| detect(black_box(&t.query), &t.reference, cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dtw_baseline_80x500", name), &cfg, |b, cfg| {
            b.iter(|| dtw_baseline(black_box(&t.query), &t.reference, cfg).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("scan_16_refs", name), &cfg, |b, cfg| {
            b.iter(|| scan(black_box(&t.query), &refs, cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, stages, end_to_end);
criterion_main!(benches);
