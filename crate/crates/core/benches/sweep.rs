//! Sequential against rayon execution for the two embarrassingly parallel
//! workloads: a viscosity sweep and an SDE ensemble.

use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use thermowave::chain_sde::{ensemble, ChainConfig, TestProfile};
use thermowave::convergence_lab::{delta_sweep, Experiment, InitialProfile};
use thermowave::model::{make_linear_tension, make_softplus_tension, BoundaryTensionProfile};
use thermowave::viscous_solver::Scheme;
use thermowave::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn sweep(c: &mut Criterion) {
    let exp = Experiment {
        model: make_softplus_tension(1.0, 2.0).unwrap(),
        boundary: BoundaryTensionProfile::ramp(0.0, 1.0, 0.5).unwrap(),
        cells: 100,
        t_final: 0.5,
        snapshots: 20,
        scheme: Scheme::Imex,
        mollifier_width: 1.0 / 16.0,
        initial: InitialProfile::Wave {
            r_amplitude: 0.3,
            p_amplitude: 0.2,
        },
    };
    let deltas = [0.2, 0.1, 0.05, 0.025];
    let mut group = c.benchmark_group("delta_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| delta_sweep(&exp, &deltas, exec).unwrap())
        });
    }
    group.finish();
}

fn chain(c: &mut Criterion) {
    let cfg = ChainConfig {
        n: 32,
        temperature: 0.01,
        delta0: 0.5,
        potential: make_linear_tension(1.0).unwrap(),
        boundary: BoundaryTensionProfile::ramp(0.0, 0.5, 0.5).unwrap(),
        dt: None,
        ensemble: 16,
        seed: 1,
    };
    let mut group = c.benchmark_group("chain_ensemble");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| {
                ensemble(
                    &cfg,
                    |x| 0.2 * (0.5 * PI * x).cos(),
                    |x| 0.1 * (0.5 * PI * x).sin(),
                    &[0.5],
                    &[TestProfile::One],
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, chain);
criterion_main!(benches);
