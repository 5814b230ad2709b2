use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use dicke_forge::design::{self, CylinderModel};
use dicke_forge::exec::Execution;
use dicke_forge::presets::{self, Preset};
use dicke_forge::protocol::{ProtocolParams, Simulator, WindowBudget};
use dicke_forge::quadrature::{Cap, DirectionGrid, QuadratureSpec};
use dicke_forge::radiation;
use dicke_forge::vector::Direction;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pattern_integral(c: &mut Criterion) {
    let inputs = presets::design_inputs(Preset::Nv, 100, 1, CylinderModel::Sampled, None).unwrap();
    let geom = inputs.source.geometry().unwrap();
    let grid = DirectionGrid::new(Direction::PLUS_Z, &QuadratureSpec::general(), Cap::FullSphere);
    let mut group = c.benchmark_group("pattern_integral_nv100");
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| grid.integrate(exec, |k| radiation::coherence_factor(&geom, Direction::PLUS_Z, k)))
        });
    }
    group.finish();
}

fn seed_average(c: &mut Criterion) {
    let spec = presets::nv_cylinder(30).unwrap();
    let quad = QuadratureSpec::general();
    let mut group = c.benchmark_group("seed_average_nv30");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| radiation::seed_averaged_emission_rate(&spec, Direction::PLUS_Z, 16, 0, &quad, exec).unwrap())
        });
    }
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let inputs = presets::design_inputs(Preset::Cs, 10, 0, CylinderModel::Average, None).unwrap();
    let report = design::design_report(&inputs).unwrap();
    let params = ProtocolParams {
        geometry: inputs.source.geometry().unwrap(),
        k_l: inputs.k_l,
        alpha_det: report.alpha_det,
        t_det: report.t_det,
        t_init: report.t_init,
        phi_l: 0.0,
        broadening_fwhm: inputs.broadening_fwhm,
        max_trials: 10_000_000,
        seed: 5,
        interference_factor: inputs.interference_factor,
        window_budget: WindowBudget::Single,
    };
    let quad = radiation::default_quadrature(&params.geometry, params.k_l);
    let sim = Simulator::new(params, &quad).unwrap();
    let mut group = c.benchmark_group("run_batch_cs10");
    group.sample_size(10);
    for (name, exec) in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(sim.run_batch(200, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, pattern_integral, seed_average, monte_carlo);
criterion_main!(benches);
