use std::hint::black_box;

use alh_core::coefficients::CoefficientSet;
use alh_core::par;
use alh_core::pathspace::{PathSegment, PathSpaceConfig};
use alh_core::rng::StreamKey;
use alh_core::simulate::{simulate_coupled_q, CouplingParams, LawPath, LawSummary, TimeGrid};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

// coupled replicas of the linear set, the workload behind decay/entropy
fn replicas(c: &mut Criterion) {
    let path = PathSpaceConfig::new(1, 1.0, 0.01, 2.0).unwrap();
    let coeffs = CoefficientSet::linear(path);
    let grid = TimeGrid::new(&path, 2.0, 1.0).unwrap();
    let law = LawPath::Static(LawSummary::zero(1));
    let params = CouplingParams::new(4.0);
    let xi = PathSegment::constant(path, &[0.5]).unwrap();
    let eta = PathSegment::constant(path, &[0.0]).unwrap();
    let one = |r: usize| {
        simulate_coupled_q(&coeffs, &xi, &eta, &law, &params, &grid, StreamKey::new(1, r as u64, 0))
            .unwrap()
            .half_int_gamma_sq[1]
    };

    let mut g = c.benchmark_group("coupled_replicas");
    g.sample_size(10);
    for n in [64usize, 256] {
        g.bench_with_input(BenchmarkId::new("seq", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_seq(n, one)))
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("par", n), &n, |b, &n| {
            b.iter(|| black_box(par::map_indexed_par(n, one)))
        });
    }
    g.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
