use criterion::{criterion_group, criterion_main, Criterion};
use evtcosim_bench::{evacuation_trips, largest_feeder, origin_edges, small_city};
use evtcosim_core::powerflow::{run_discrete_controls, solve_feeder, ControlOptions};
use evtcosim_core::traffic::{simulate_traffic, Router, SimOptions};
use std::hint::black_box;

fn power(c: &mut Criterion) {
    let city = small_city();
    let tree = largest_feeder(&city);
    c.bench_function("sweep_largest_feeder", |b| b.iter(|| solve_feeder(black_box(&tree), 1.0).unwrap()));
    c.bench_function("controls_largest_feeder", |b| {
        b.iter(|| run_discrete_controls(black_box(&tree), 1.0, &ControlOptions::default()).unwrap())
    });
}

fn traffic(c: &mut Criterion) {
    let city = small_city();
    let origins = origin_edges(&city);
    let router = Router::new(&city.roads);
    c.bench_function("route_all_origins", |b| {
        b.iter(|| router.routes_to(black_box(&origins), &city.scenario.evac_edge))
    });
    let trips = evacuation_trips(&city, &origins, 2000);
    let mut group = c.benchmark_group("traffic");
    group.sample_size(10);
    group.bench_function("simulate_2000_trips", |b| {
        b.iter(|| simulate_traffic(&city.roads, black_box(&trips), &SimOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, power, traffic);
criterion_main!(benches);
