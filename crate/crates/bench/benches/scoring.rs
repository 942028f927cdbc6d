use criterion::{criterion_group, criterion_main, Criterion};
use outreach_core::data::synthetic::{generate_synthetic, SyntheticConfig};
use outreach_core::data::{build_dataset, DatasetInputs, FeatureSet, PropertyFilter, WindowPair};
use outreach_core::metrics::{delong_test, pr_auc, roc_auc};
use outreach_core::risk::{train_gbdt, Hyperparams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn curves(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 2000;
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
    let a: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.3 } else { 0.0 }).collect();
    let b: Vec<f64> = labels.iter().map(|&l| rng.random::<f64>() + if l { 0.2 } else { 0.0 }).collect();
    c.bench_function("roc_auc/2000", |bch| bch.iter(|| roc_auc(&a, &labels).unwrap()));
    c.bench_function("pr_auc/2000", |bch| bch.iter(|| pr_auc(&a, &labels).unwrap()));
    c.bench_function("delong/2000", |bch| bch.iter(|| delong_test(&a, &b, &labels).unwrap()));
}

fn training(c: &mut Criterion) {
    let data = generate_synthetic(&SyntheticConfig::default(), 0).unwrap();
    let (props, _) = PropertyFilter::default().apply(data.properties);
    let inputs = DatasetInputs {
        properties: &props,
        filings: &data.filings,
        neighborhoods: &data.neighborhoods,
        tenures: &data.tenures,
    };
    let windows = WindowPair::training("2021-01".parse().unwrap(), 7, 3).unwrap();
    let (ds, _) = build_dataset(inputs, &windows, FeatureSet::ENO).unwrap();
    let hyper = Hyperparams::post_covid(FeatureSet::ENO);
    let mut group = c.benchmark_group("gbdt");
    group.sample_size(10);
    group.bench_function("train_eno_2000", |b| b.iter(|| train_gbdt(&ds, &hyper).unwrap()));
    group.finish();
}

criterion_group!(benches, curves, training);
criterion_main!(benches);
