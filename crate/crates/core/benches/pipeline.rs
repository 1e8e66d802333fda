//! Parallel vs single-threaded throughput of the data-parallel stages.
//!
//! Each benchmark runs inside a one-thread rayon pool and inside the default
//! pool. Built with `--no-default-features` both variants run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hardneg_core::embed::{CorpusEmbeddings, ProviderSpec};
use hardneg_core::ensemble::{similarity_matrix, VotingMode};
use hardneg_core::mine::{mine, EnsembleView, MiningConfig};
use hardneg_core::pipeline::make_synthetic_benchmark;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let default = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", single), ("default", default)]
}

fn stages(c: &mut Criterion) {
    let corpus = make_synthetic_benchmark(200, 5, 7).unwrap();
    let models: Vec<CorpusEmbeddings> = [("hash-a", 1), ("hash-b", 2)]
        .into_iter()
        .map(|(id, seed)| CorpusEmbeddings::compute(&ProviderSpec::hashing(id, 256, seed), &corpus, None).unwrap())
        .collect();
    let anchors: Vec<(String, &[f64])> = corpus
        .queries()
        .iter()
        .zip(&models[0].queries)
        .map(|(q, v)| (q.id.clone(), v.as_slice()))
        .collect();
    let docs: Vec<(String, &[f64])> = corpus
        .documents()
        .iter()
        .zip(&models[0].documents)
        .map(|(d, v)| (d.id.clone(), v.as_slice()))
        .collect();
    let view = EnsembleView::new(&corpus, &models, None, VotingMode::Soft).unwrap();
    let config = MiningConfig::default();

    let mut group = c.benchmark_group("similarity_matrix");
    for (name, pool) in &pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| similarity_matrix("hash-a", &anchors, &docs).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("mine");
    group.sample_size(10);
    for (name, pool) in &pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| mine(&view, &[], &config, 7).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
