//! Rayon pool against a single worker on the trial-parallel hot paths.
//! Build with `--no-default-features` to bench the sequential fallback
//! alone.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sigres::exec;
use sigres::geometry::BoxRegion;
use sigres::liploss::{rate_experiment, witness_family, RateConfig, Scheme};
use sigres::measure::MeasureSpec;
use sigres::rng::SeededStream;
use sigres::skorokhod::{dubins_levels, run_embedding};

fn rates(c: &mut Criterion) {
    let spec = MeasureSpec::unit_cube(2);
    let stream = SeededStream::from_seed(1);
    let witnesses = witness_family(&BoxRegion::unit(2), stream.named("witnesses"));
    let cfg = RateConfig {
        scheme: Scheme::SymmetricGrid,
        schedule: vec![16, 64, 256],
        trials: 16,
        eval_points: 1024,
        reference_points: 1024,
    };
    let mut group = c.benchmark_group("rates");
    group.sample_size(10);
    for threads in [1usize, 0] {
        let label = if threads == 1 { "sequential" } else { "pool" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &threads, |b, &t| {
            b.iter(|| exec::with_threads(t, || rate_experiment(&cfg, &spec, &witnesses, stream).unwrap()))
        });
    }
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let seq = dubins_levels(&MeasureSpec::uniform(-0.5, 0.5).unwrap(), 12).unwrap();
    let mut group = c.benchmark_group("embedding");
    group.sample_size(10);
    for threads in [1usize, 0] {
        let label = if threads == 1 { "sequential" } else { "pool" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &threads, |b, &t| {
            b.iter(|| exec::with_threads(t, || run_embedding(&seq, 20_000, SeededStream::from_seed(2)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rates, embedding);
criterion_main!(benches);
