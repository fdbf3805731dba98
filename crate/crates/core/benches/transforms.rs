use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cgolab::exec;
use cgolab::geometry::{build_domain, DomainSpec};
use cgolab::pde::{cauchy_data, Potential};
use cgolab::transforms::{dbar_inverse, dbar_inverse_direct, GridFunction};
use cgolab::C64;

fn modes(on: bool) -> &'static str {
    if on { "sequential" } else { "parallel" }
}

fn bench_dbar_inverse(c: &mut Criterion) {
    let mut group = c.benchmark_group("dbar_inverse");
    for (nr, nt) in [(64, 256), (128, 512)] {
        let d = build_domain(&DomainSpec::unit_disk(nr, nt, nt, [0.0, PI])).unwrap();
        let g = GridFunction::from_fn(&d, |z| C64::new((-z.norm_sqr() / 0.1).exp(), z.im));
        for seq in [false, true] {
            exec::set_sequential(seq);
            group.bench_with_input(BenchmarkId::new(modes(seq), format!("{nr}x{nt}")), &g, |b, g| {
                b.iter(|| dbar_inverse(g, &d).unwrap())
            });
        }
    }
    exec::set_sequential(false);
    group.finish();
}

fn bench_direct_quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("dbar_inverse_direct");
    group.sample_size(10);
    let d = build_domain(&DomainSpec::default()).unwrap();
    let g = GridFunction::from_fn(&d, |z| C64::new((-z.norm_sqr() / 0.1).exp(), 0.0));
    let targets: Vec<usize> = (0..d.n_nodes()).step_by(16).collect();
    for seq in [false, true] {
        exec::set_sequential(seq);
        group.bench_function(modes(seq), |b| b.iter(|| dbar_inverse_direct(&g, &d, &targets).unwrap()));
    }
    exec::set_sequential(false);
    group.finish();
}

fn bench_cauchy_data(c: &mut Criterion) {
    let mut group = c.benchmark_group("cauchy_data");
    group.sample_size(10);
    let d = build_domain(&DomainSpec::default()).unwrap();
    let q = Potential::sampled(d.grid.nodes.iter().map(|z| C64::new(1.0 + z.re * z.re, 0.0)).collect(), &d).unwrap();
    for seq in [false, true] {
        exec::set_sequential(seq);
        group.bench_function(modes(seq), |b| b.iter(|| cauchy_data(&q, &d, 8).unwrap()));
    }
    exec::set_sequential(false);
    group.finish();
}

criterion_group!(benches, bench_dbar_inverse, bench_direct_quadrature, bench_cauchy_data);
criterion_main!(benches);
