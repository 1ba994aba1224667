use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pipesl::bcd::{solve_joint, BcdOptions};
use pipesl::costmodel::CostModel;
use pipesl::mspgraph::{solve_msp, BoundKind, MspOptions};
use pipesl::pipesim::{simulate, SimMode, SimOptions};
use pipesl_bench::scenario;
use std::hint::black_box;

fn msp(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_msp");
    for n in [3, 6, 12] {
        let s = scenario(n, 1);
        let cm = CostModel::new(&s);
        g.bench_with_input(BenchmarkId::new("fast", n), &cm, |bench, cm| {
            bench.iter(|| solve_msp(cm, black_box(64), &MspOptions::pruned()))
        });
    }
    let s = scenario(4, 1);
    let cm = CostModel::new(&s);
    let mut rlt = MspOptions::pruned();
    rlt.bound = BoundKind::Rlt;
    g.sample_size(10);
    g.bench_function("rlt/4", |bench| {
        bench.iter(|| solve_msp(&cm, black_box(64), &rlt))
    });
    g.finish();
}

fn joint(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_joint");
    g.sample_size(10);
    for n in [3, 6, 10] {
        let s = scenario(n, 2);
        let cm = CostModel::new(&s);
        g.bench_with_input(BenchmarkId::from_parameter(n), &cm, |bench, cm| {
            bench.iter(|| solve_joint(cm, &BcdOptions::default()))
        });
    }
    g.finish();
}

fn sim(c: &mut Criterion) {
    let s = scenario(6, 3);
    let t = solve_joint(&CostModel::new(&s), &BcdOptions::default()).expect("feasible");
    let mut g = c.benchmark_group("simulate");
    for (name, b) in [("planned", t.b), ("b1", 1)] {
        let Ok(_) = simulate(&s, &t.solution.plan, b, &SimOptions::default()) else {
            continue;
        };
        g.bench_function(name, |bench| {
            bench.iter(|| simulate(&s, &t.solution.plan, black_box(b), &SimOptions::default()))
        });
    }
    let noisy = SimOptions {
        mode: SimMode::Perturbed {
            cv_compute: 0.2,
            cv_rate: 0.2,
            seed: 7,
        },
        ..SimOptions::default()
    };
    g.bench_function("perturbed", |bench| {
        bench.iter(|| simulate(&s, &t.solution.plan, t.b, &noisy))
    });
    g.finish();
}

criterion_group!(benches, msp, joint, sim);
criterion_main!(benches);
