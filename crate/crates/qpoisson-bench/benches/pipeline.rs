use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use qpoisson_core::dynamics::letter;
use qpoisson_core::fixtures::{two_level_system, GaussianReservoir};
use qpoisson_core::wick::{DEFAULT_ORDER_CAP, DEFAULT_TERM_BUDGET};
use qpoisson_core::{
    build_mesh, build_scattering, enumerate_pairings, finite_xi_correlator, formfactor_densities, gamma_pv,
    gamma_table, simplex_exp_integral, CorrelatorSpec, InversionOptions, KernelMethod, Weight,
};

fn kernels(c: &mut Criterion) {
    let spec = GaussianReservoir::new(128, 2, 3.0);
    let res = spec.build();
    let mesh = build_mesh(&res, spec.delta_e()).unwrap();
    let sd = formfactor_densities(&res, &mesh, Weight::None).unwrap();
    c.bench_function("gamma_pv_128_bins", |b| b.iter(|| gamma_pv(black_box(&sd), &mesh, false)));
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let system = two_level_system(0.5);
    c.bench_function("build_scattering_128_bins", |b| {
        b.iter(|| build_scattering(black_box(&system), &gamma, InversionOptions::default()).unwrap())
    });
}

fn correlators(c: &mut Criterion) {
    let spec = GaussianReservoir::new(8, 2, 3.0);
    let res = spec.build();
    let system = two_level_system(0.5);
    let slots: Vec<_> = (0..3).map(|k| letter(&system, &res, k % 2).1).collect();
    let diagrams = enumerate_pairings(3, DEFAULT_ORDER_CAP).unwrap();
    let corr = CorrelatorSpec {
        slots,
        t: 1.0,
        xi: 0.1,
    };
    c.bench_function("finite_xi_correlator_n3_m16", |b| {
        b.iter(|| finite_xi_correlator(black_box(&corr), &res, &diagrams, DEFAULT_TERM_BUDGET).unwrap())
    });
    let freqs = [0.3, -1.2, 0.7, 2.5, -0.4, 1e-9];
    c.bench_function("simplex_exp_integral_n6", |b| {
        b.iter(|| simplex_exp_integral(black_box(&freqs), 1.3))
    });
}

criterion_group!(benches, kernels, correlators);
criterion_main!(benches);
