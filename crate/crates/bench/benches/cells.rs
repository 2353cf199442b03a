//! Whole experiment cells, parallel against sequential.

use std::hint::black_box;

use chronoarray::{Epsilon, Exec};
use chronobench::experiments::layout_census;
use chronobench::{run_experiment, Experiment, RunConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn census(c: &mut Criterion) {
    let mut g = c.benchmark_group("layout_census");
    g.sample_size(10);
    for u in [256u64, 1024] {
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(name, u), &u, |b, &u| {
                b.iter(|| layout_census(Epsilon::HALF, black_box(u), 64, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn experiments(c: &mut Criterion) {
    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    for (exp, ops) in [(Experiment::WriteRandom, 4000), (Experiment::Pscan, 4000)] {
        for (name, exec) in MODES {
            let mut cfg = RunConfig::new(exp);
            cfg.u0 = Some(1024);
            cfg.ops = Some(ops);
            cfg.exec = exec;
            g.bench_with_input(BenchmarkId::new(name, exp.name()), &cfg, |b, cfg| {
                b.iter(|| run_experiment(cfg).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, census, experiments);
criterion_main!(benches);
