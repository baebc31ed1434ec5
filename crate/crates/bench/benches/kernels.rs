use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use quasar_bench::{config, fixture};
use quasar_core::experiment::{run_trial, ActivationKind};
use quasar_core::{
    empirical_gradient, estimate_delta, project_ball, sample_batch, BallRegion, SeededRng, Vector,
};

const KINDS: [(ActivationKind, &str); 3] = [
    (ActivationKind::LeakyRelu, "leaky_relu"),
    (ActivationKind::Logistic, "logistic"),
    (ActivationKind::Relu, "relu"),
];

fn gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("empirical_gradient");
    for (kind, name) in KINDS {
        let f = fixture(kind, 50, 1000);
        group.throughput(Throughput::Elements(1000));
        group.bench_function(BenchmarkId::new(name, "n50_m1000"), |b| {
            b.iter(|| empirical_gradient(&f.problem, 1, &f.w, &f.batch).unwrap())
        });
    }
    group.finish();
}

fn delta_estimate(c: &mut Criterion) {
    let f = fixture(ActivationKind::LeakyRelu, 50, 1000);
    c.bench_function("estimate_delta/n50_m1000", |b| {
        b.iter(|| estimate_delta(&f.problem, 1, &f.w, &f.batch).unwrap())
    });
}

fn batch_sampling(c: &mut Criterion) {
    let f = fixture(ActivationKind::LeakyRelu, 50, 1000);
    let mut rng = SeededRng::new(3);
    c.bench_function("sample_batch/n50_m1000", |b| {
        b.iter(|| sample_batch(&f.problem, 1, &mut rng, true).unwrap())
    });
}

fn projection(c: &mut Criterion) {
    let region = BallRegion::origin(50, 1.0).unwrap();
    let v = Vector::new((0..50).map(|i| i as f64).collect()).unwrap();
    c.bench_function("project_ball/n50", |b| {
        b.iter(|| project_ball(&v, &region).unwrap())
    });
}

fn online_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_trial");
    group.sample_size(10);
    for horizon in [100, 400] {
        let cfg = config(ActivationKind::LeakyRelu, 50, 1000, horizon);
        group.throughput(Throughput::Elements(horizon as u64));
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &cfg, |b, cfg| {
            b.iter(|| run_trial(cfg, 0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    gradient,
    delta_estimate,
    batch_sampling,
    projection,
    online_run
);
criterion_main!(benches);
