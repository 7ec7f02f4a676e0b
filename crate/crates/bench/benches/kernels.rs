use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ef_lab_bench::gaussian;
use ef_lab_core::optimizers::step_in_place;
use ef_lab_core::rng::{stream, Stream};
use ef_lab_core::{
    build_oracle, compress, init_state, min_norm_solution, CompressorKind, CompressorSpec, OptimizerSpec, OracleKind,
    SpanBasis, Vector,
};

const DIMS: [usize; 3] = [100, 1_000, 10_000];

fn kinds(d: usize) -> Vec<(&'static str, CompressorKind)> {
    vec![
        ("sign_scaled", CompressorKind::SignScaled),
        ("top_k", CompressorKind::TopK(d / 100)),
        ("rand_k", CompressorKind::RandKFeedback(d / 100)),
    ]
}

fn bench_compress(c: &mut Criterion) {
    let mut group = c.benchmark_group("compress");
    for d in DIMS {
        let v = gaussian(d, 1);
        for (name, kind) in kinds(d) {
            let spec = CompressorSpec::new(kind);
            let mut rng = stream(0, Stream::Compressor);
            group.bench_with_input(BenchmarkId::new(name, d), &v, |b, v| {
                b.iter(|| compress(&spec, black_box(v), &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_ec_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("ec_sgd_step");
    for d in DIMS {
        let g = gaussian(d, 2);
        for (name, kind) in kinds(d) {
            let spec = OptimizerSpec::ec_sgd(CompressorSpec::new(kind), 1e-3);
            let mut state = init_state(&spec, &Vector::zeros(d));
            let mut rng = stream(0, Stream::Compressor);
            group.bench_with_input(BenchmarkId::new(name, d), &g, |b, g| {
                b.iter(|| step_in_place(&spec, &mut state, black_box(g), &mut rng).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_span(c: &mut Criterion) {
    let mut group = c.benchmark_group("span");
    let d = 1_200;
    let rank = 100;
    let vectors: Vec<Vec<f64>> = (0..rank as u64).map(|s| gaussian(d, s)).collect();
    group.bench_function(BenchmarkId::new("extend", rank), |b| {
        b.iter(|| {
            let mut basis = SpanBasis::new(d);
            for v in &vectors {
                basis.extend(v).unwrap();
            }
            basis
        })
    });
    let mut basis = SpanBasis::new(d);
    for v in &vectors {
        basis.extend(v).unwrap();
    }
    let probe = gaussian(d, 999);
    group.bench_function(BenchmarkId::new("distance", rank), |b| {
        b.iter(|| basis.distance(black_box(&probe)).unwrap())
    });
    group.finish();
}

fn bench_min_norm(c: &mut Criterion) {
    let oracle = build_oracle(&OracleKind::Wilson { n: 200 }, 0).unwrap();
    let ls = oracle.training_data().unwrap();
    c.bench_function("min_norm_solution/wilson_200", |b| {
        b.iter(|| min_norm_solution(black_box(&ls.a), &ls.b).unwrap())
    });
}

criterion_group!(benches, bench_compress, bench_ec_step, bench_span, bench_min_norm);
criterion_main!(benches);
