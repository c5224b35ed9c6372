use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use rice_dg::params::{default_params, generate, GeneratorConfig, HorizonConfig};
use rice_dg::{
    objective_and_gradient, simulate, solve_swm, ControlProfile, ObjectiveSpec, SolveOptions,
    State,
};

fn full_horizon_simulation(c: &mut Criterion) {
    let params = default_params();
    let exo = generate(&GeneratorConfig::default(), &params.horizon).unwrap();
    let u = ControlProfile::default_init(params.n_regions(), params.horizon.t_final + 1);
    c.bench_function("simulate_121_steps_12_regions", |b| {
        b.iter(|| simulate(&params, &exo, &u).unwrap())
    });
}

fn adjoint_gradient(c: &mut Criterion) {
    let params = default_params();
    let exo = generate(&GeneratorConfig::default(), &params.horizon).unwrap();
    let steps = params.horizon.t_final + 1;
    let u = ControlProfile::default_init(params.n_regions(), steps);
    let spec = ObjectiveSpec::weighted(params.welfare_weights(), steps);
    let x0 = State::from_initial(&params.initial);
    c.bench_function("adjoint_gradient_121_steps_12_regions", |b| {
        b.iter(|| objective_and_gradient(&params, &exo, &spec, &x0, &u).unwrap())
    });
}

fn short_horizon_swm(c: &mut Criterion) {
    let mut params = default_params();
    params.horizon = HorizonConfig { year0: 2020, delta_years: 5, t_final: 5 };
    let exo = generate(&GeneratorConfig::default(), &params.horizon).unwrap();
    let opts = SolveOptions::default();
    c.bench_function("swm_solve_6_steps_12_regions", |b| {
        b.iter_batched(
            || (),
            |_| solve_swm(&params, &exo, &opts, None, None).unwrap(),
            BatchSize::PerIteration,
        )
    });
}

criterion_group!(benches, full_horizon_simulation, adjoint_gradient, short_horizon_swm);
criterion_main!(benches);
