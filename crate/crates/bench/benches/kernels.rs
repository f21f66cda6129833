//! Benchmarks for the O(n^3) kernels and the simulation loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetero_topo_core::dsgd::{run_dsgd, SimConfig};
use hetero_topo_core::mixing::{MixingSchedule, MIXING_PARAM_TOL};
use hetero_topo_core::rng::substream;
use hetero_topo_core::topo_opt::TopoObjective;
use hetero_topo_core::{
    dirichlet_proportions, frank_wolfe, make_mean_estimation, make_topology, mixing_parameter,
    solve_assignment, TopologyKind,
};
use ndarray::Array2;
use rand::Rng;

fn bench_assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("hungarian");
    for n in [32usize, 64, 128] {
        let mut rng = substream(1, &[n as u64]);
        let cost = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        group.bench_with_input(BenchmarkId::from_parameter(n), &cost, |b, cost| {
            b.iter(|| solve_assignment(cost).unwrap())
        });
    }
    group.finish();
}

fn bench_mixing_parameter(c: &mut Criterion) {
    let mut group = c.benchmark_group("mixing_parameter");
    for n in [32usize, 128] {
        let w = make_topology(TopologyKind::AlternatingRing, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| {
            b.iter(|| mixing_parameter(w, MIXING_PARAM_TOL).unwrap())
        });
    }
    group.finish();
}

fn bench_frank_wolfe(c: &mut Criterion) {
    let pi = dirichlet_proportions(50, 10, 0.3, 7).unwrap();
    let obj = TopoObjective::new(pi, 0.1).unwrap();
    c.bench_function("frank_wolfe_n50_l10", |b| {
        b.iter(|| frank_wolfe(&obj, 10, 0.0).unwrap())
    });
}

fn bench_dsgd(c: &mut Criterion) {
    let n = 32;
    let spec = make_mean_estimation(n, 5.0, 1.0).unwrap();
    let schedule = MixingSchedule::fixed(make_topology(TopologyKind::AlternatingRing, n).unwrap());
    let cfg = SimConfig::constant(500, 0.005, 3);
    c.bench_function("dsgd_ring_n32_t500", |b| {
        b.iter(|| run_dsgd(&spec, &schedule, &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    bench_assignment,
    bench_mixing_parameter,
    bench_frank_wolfe,
    bench_dsgd
);
criterion_main!(benches);
