//! Wall-clock benchmarks for the hot kernels: superoperator assembly, the
//! bordered banded steady-state solve, the shift-invert gap, the Wigner
//! transform, and the closed-form moments.

use criterion::{criterion_group, criterion_main, Criterion};
use kerrgap_core::{
    build_liouvillian, gap_krylov, hamiltonian, observables_analytic, steady_state_numeric,
    wigner, GridSpec, KrylovOpts, ModelParams,
};

fn kernels(c: &mut Criterion) {
    let params = ModelParams::new(2.0, 1.0, 0.93, 5.0).unwrap();

    c.bench_function("liouvillian_build_c40", |b| {
        let h = hamiltonian(&params, 40);
        b.iter(|| build_liouvillian(&h, params.gamma).unwrap())
    });

    c.bench_function("steady_state_c40", |b| {
        let l = build_liouvillian(&hamiltonian(&params, 40), params.gamma).unwrap();
        b.iter(|| steady_state_numeric(&l).unwrap())
    });

    c.bench_function("gap_krylov_c30", |b| {
        let l = build_liouvillian(&hamiltonian(&params, 30), params.gamma).unwrap();
        let opts = KrylovOpts::default();
        b.iter(|| gap_krylov(&l, &opts).unwrap())
    });

    c.bench_function("wigner_c30_61x61", |b| {
        let l = build_liouvillian(&hamiltonian(&params, 30), params.gamma).unwrap();
        let rho = steady_state_numeric(&l).unwrap();
        let grid = GridSpec { half_width: 2.5, points: 61 };
        b.iter(|| wigner(&rho, &grid, params.n_scale).unwrap())
    });

    c.bench_function("analytic_moments_n5", |b| {
        b.iter(|| observables_analytic(&params).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = kernels
}
criterion_main!(benches);
