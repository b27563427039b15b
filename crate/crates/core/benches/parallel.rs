use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bimodal_core::analysis::{dt_sweep, reduction_check};
use bimodal_core::model::LoadScenario;
use bimodal_core::sim::{run_batch, Scenario, BUILTIN_NAMES};
use bimodal_core::valve::ValveMassModel;
use bimodal_core::{Config, Execution};

const PATHS: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn mass_map(c: &mut Criterion) {
    let cfg = Config::default();
    let model = ValveMassModel::from_params(&cfg.params).unwrap();
    let al = cfg.params.material("al7075").unwrap().clone();
    let mut g = c.benchmark_group("mass_map_301x241");
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                model
                    .mass_map((4e-3, 16e-3), (0.02, 0.5), &al, (301, 241), exec)
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn scenario_batch(c: &mut Criterion) {
    let cfg = Config::default();
    let scenarios: Vec<Scenario> = BUILTIN_NAMES
        .iter()
        .map(|n| Scenario::builtin(n).unwrap())
        .collect();
    let mut g = c.benchmark_group("scenario_batch");
    g.sample_size(10);
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_batch(&scenarios, &cfg, exec))
        });
    }
    g.finish();
}

fn reduction(c: &mut Criterion) {
    let params = Config::default().params;
    let swing = LoadScenario::new("swing", 17.0, 0.0);
    let mut g = c.benchmark_group("reduction_check_20000");
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| reduction_check(&params, &swing, 20_000, 11, exec).unwrap())
        });
    }
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let cfg = Config::default();
    let gait = Scenario::builtin("gait").unwrap();
    let dts = [2e-4, 1e-4, 5e-5, 2.5e-5];
    let mut g = c.benchmark_group("gait_dt_sweep");
    g.sample_size(10);
    for (name, exec) in PATHS {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| dt_sweep(&gait, &cfg, &dts, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, mass_map, scenario_batch, reduction, sweep);
criterion_main!(benches);
