//! Sequential versus data-parallel execution of the batch-level work.
//! Kernel groups measure whatever the build enables; run once with default
//! features and once with `--no-default-features` to compare.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use xdr_core::data::Dataset;
use xdr_core::evaluation::evaluate_window_with;
use xdr_core::heads::HeadVariant;
use xdr_core::numeric::{matmul, matmul_bt, Matrix, RngStream};
use xdr_core::par::Exec;
use xdr_core::synthbench::{generate_with, SynthConfig};
use xdr_core::training::{init_model, train, Precision, TrainConfig};

fn modes() -> Vec<(&'static str, Exec)> {
    let mut m = vec![("sequential", Exec::Sequential)];
    if Exec::default() != Exec::Sequential {
        m.push(("parallel", Exec::default()));
    }
    m
}

fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f32> {
    let mut rng = RngStream::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal(0.0, 1.0) as f32).collect()).unwrap()
}

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    for &(n, k, m) in &[(2, 128, 1000), (96, 128, 1000), (96, 1000, 1)] {
        let a = random(n, k, 1);
        let bt = random(m, k, 2);
        let b = random(k, m, 3);
        let id = format!("{n}x{k}x{m}");
        g.bench_with_input(BenchmarkId::new("a_bt", &id), &(), |bench, _| bench.iter(|| matmul_bt(&a, &bt).unwrap()));
        g.bench_with_input(BenchmarkId::new("a_b", &id), &(), |bench, _| bench.iter(|| matmul(&a, &b).unwrap()));
    }
    g.finish();
}

fn generation(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let mut g = c.benchmark_group("generate");
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| generate_with(exec, &cfg).unwrap()));
    }
    g.finish();
}

fn window(c: &mut Criterion) {
    let synth = SynthConfig { n_train: 96, ..Default::default() };
    let (tr, te) = generate_with(Exec::Sequential, &synth).unwrap();
    let tr = Dataset::<f32>::from_samples(&tr).unwrap();
    let te = Dataset::<f32>::from_samples(&te).unwrap();
    let cfg = TrainConfig { epochs: 10, eval_window: 10, precision: Precision::F32, ..Default::default() };
    let mut model = init_model::<f32>(HeadVariant::LN, synth.c_m, synth.c_f, &cfg).unwrap();
    let cks = train(&mut model, &tr, &cfg).unwrap();
    let mut g = c.benchmark_group("evaluate_window");
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| evaluate_window_with(exec, &cks, &te).unwrap()));
    }
    g.finish();
}

fn config() -> Criterion {
    Criterion::default()
        .sample_size(10)
        .warm_up_time(Duration::from_millis(500))
        .measurement_time(Duration::from_secs(2))
}

criterion_group! {
    name = benches;
    config = config();
    targets = kernels, generation, window
}
criterion_main!(benches);
