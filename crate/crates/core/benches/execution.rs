use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use slate_ope::estimators::estimate_cdf_with;
use slate_ope::harness::{build_environment, build_policy, generate_log, run_experiment, ExperimentConfig};
use slate_ope::{Execution, RewardGrid, WeightKind};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn estimation(c: &mut Criterion) {
    let config = ExperimentConfig::preset("table1a").unwrap();
    let env = build_environment(&config.environment).unwrap();
    let logging = build_policy(&config.logging, env.as_ref()).unwrap();
    let target = build_policy(&config.target, env.as_ref()).unwrap();
    let grid = RewardGrid::uniform(env.reward_range(), config.grid_size).unwrap();
    let mut group = c.benchmark_group("estimate_cdf");
    for n in [10_000, 200_000] {
        let log = generate_log(env.as_ref(), logging.as_ref(), n, 1).unwrap();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &log, |b, log| {
                b.iter(|| {
                    estimate_cdf_with(
                        WeightKind::Subsets(2),
                        target.as_ref(),
                        black_box(log),
                        logging.as_ref(),
                        &grid,
                        exec,
                    )
                    .unwrap()
                })
            });
        }
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let config = ExperimentConfig::preset("table1a")
        .unwrap()
        .with_overrides(&["trials=20", "sample_sizes=[500,5000]"])
        .unwrap();
    let mut group = c.benchmark_group("run_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| run_experiment(black_box(&config), exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, estimation, experiment);
criterion_main!(benches);
