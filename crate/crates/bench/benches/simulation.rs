//! Week-long cohort runs and the full settlement pipeline.

use coopex::mechanism::{run_simulation, Mechanism};
use coopex::settlement::settle_scenario;
use coopex_bench::week_scenario;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_mechanisms(c: &mut Criterion) {
    let scenario = week_scenario(10);
    let include = vec![true; scenario.n_prosumers()];
    let mut group = c.benchmark_group("week_run_10");
    for mechanism in Mechanism::ALL {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mechanism:?}")),
            &mechanism,
            |b, &m| b.iter(|| run_simulation(&scenario, m, &include).unwrap()),
        );
    }
    group.finish();
}

fn bench_settlement(c: &mut Criterion) {
    let scenario = week_scenario(10);
    let mut group = c.benchmark_group("settlement");
    // Each settlement runs n+3 week simulations; keep the sample small.
    group.sample_size(10);
    group.bench_function("settle_week_10", |b| {
        b.iter(|| settle_scenario(&scenario).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_mechanisms, bench_settlement);
criterion_main!(benches);
