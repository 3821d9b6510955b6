use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use vpon_core::dba::DbaPolicy;
use vpon_core::scenario::{Scenario, SweepSpec};
use vpon_core::sim::SimTime;
use vpon_core::sweep::{run_points_parallel, run_points_sequential};

fn points() -> Vec<Scenario> {
    let template = Scenario {
        duration: SimTime::from_millis(50),
        warmup: SimTime::from_millis(5),
        ..Scenario::default()
    };
    SweepSpec {
        name: "bench".into(),
        loads: vec![30.0, 60.0, 90.0],
        policies: vec![DbaPolicy::EnhancedCoDba, DbaPolicy::SrDba],
        seeds: vec![1, 2],
        ..SweepSpec::single(template)
    }
    .points()
}

fn sweep(c: &mut Criterion) {
    let pts = points();
    let mut g = c.benchmark_group("sweep_12_points");
    g.sample_size(10);
    g.bench_function("sequential", |b| b.iter(|| run_points_sequential(black_box(&pts))));
    g.bench_function("parallel", |b| b.iter(|| run_points_parallel(black_box(&pts), None)));
    g.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
