use bathy_bench::desk;
use bathy_core::tv::TvProblem;
use bathy_core::{tv_map, Kriging, NoiseScaling, TvConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn tv(c: &mut Criterion) {
    let p = desk();
    let cfg = TvConfig::default();
    let problem = TvProblem::new(&p.y, &p.model, &cfg).unwrap();
    let x = p.prior.mean().values().clone();
    let mut g = c.benchmark_group("tv");
    g.sample_size(10);
    g.bench_function("objective_gradient_desk", |b| {
        b.iter(|| problem.value_and_gradient(black_box(&x)).unwrap())
    });
    let init = Kriging::new(&p.prior, &p.model, NoiseScaling(0.0))
        .unwrap()
        .posterior_mean(&p.y)
        .unwrap();
    let short = TvConfig { max_iters: 200, ..cfg };
    g.bench_function("map_200_iters_desk", |b| {
        b.iter(|| tv_map(&p.y, &p.model, &short, black_box(&init)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, tv);
criterion_main!(benches);
