use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use efree::mcsde::{self, Ensemble, McConfig};
use efree::potential::DoubleWellParams;
use efree::rng::StreamKey;

fn evolve(c: &mut Criterion) {
    let p = DoubleWellParams::default();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut group = c.benchmark_group("euler_maruyama_evolve");
    group.sample_size(10);
    for n in [10_000usize, 100_000] {
        let e = Ensemble::from_positions((0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect()).unwrap();
        let run = || mcsde::euler_maruyama_evolve(&p, black_box(&e), 0.5, 0.01, 50.0, StreamKey::new(0)).unwrap();
        group.bench_with_input(BenchmarkId::new("serial", n), &n, |b, _| b.iter(|| serial.install(run)));
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| b.iter(run));
    }
    group.finish();
}

fn macro_map(c: &mut Criterion) {
    let p = DoubleWellParams::default();
    let cfg = McConfig::default();
    let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let run = || mcsde::noisy_macro_map(&p, 0.5, [100_000.0, 0.0, 1.0], &cfg, StreamKey::new(0)).unwrap();
    let mut group = c.benchmark_group("noisy_macro_map");
    group.sample_size(10);
    group.bench_function("serial", |b| b.iter(|| serial.install(run)));
    group.bench_function("parallel", |b| b.iter(run));
    group.finish();
}

criterion_group!(benches, evolve, macro_map);
criterion_main!(benches);
