use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use outreach_core::geo::{CostParams, GeoPoint};
use outreach_core::routing::{route_nearest_neighbor, route_tsp, select_topk_within_time, Stop, TourOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn stops(n: usize, seed: u64) -> Vec<Stop> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Stop {
            property_id: format!("p{i:05}"),
            location: GeoPoint {
                lat: rng.random_range(38.60..38.66),
                lon: rng.random_range(-90.28..-90.20),
            },
            units: rng.random_range(2..40),
        })
        .collect()
}

fn tours(c: &mut Criterion) {
    let params = CostParams::default();
    let opts = TourOptions::default();
    let mut group = c.benchmark_group("route_tsp");
    for n in [25, 100, 300] {
        let s = stops(n, n as u64);
        group.bench_with_input(BenchmarkId::new("nearest_neighbor", n), &s, |b, s| {
            b.iter(|| route_nearest_neighbor(s, &params).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("full", n), &s, |b, s| {
            b.iter(|| route_tsp(s, &params, &opts, 1).unwrap())
        });
    }
    group.finish();
}

fn topk(c: &mut Criterion) {
    let params = CostParams::default();
    let s = stops(2000, 9);
    c.bench_function("select_topk_within_time/2000", |b| {
        b.iter(|| select_topk_within_time(&s, 150.0, &params, &TourOptions::default()).unwrap())
    });
}

criterion_group!(benches, tours, topk);
criterion_main!(benches);
