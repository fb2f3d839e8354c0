#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpoisson_core::fixtures::{random_reservoir, random_vector, GaussianReservoir};
use qpoisson_core::kernels::{pair_kernel, pv_kernel};
use qpoisson_core::linalg::{c, C64};
use qpoisson_core::model::{free_phase, overlap};
use qpoisson_core::{
    build_mesh, formfactor_densities, gamma_pv, gamma_resolvent, gamma_table, spectral_density, KernelMethod,
    ModelDocument, Weight,
};

const WEIGHTS: [Weight; 4] = [Weight::None, Weight::L, Weight::LOverOneMinusXiL, Weight::InvOneMinusXiL];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn densities_integrate_to_weighted_inner_products(seed in 0u64..10_000, m in 1usize..40, de in 0.05f64..2.0) {
        let res = random_reservoir(m, 2.0, 0.3, seed);
        let mesh = build_mesh(&res, de).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let g = random_vector(m, &mut rng);
        let f = random_vector(m, &mut rng);
        for w in WEIGHTS {
            let sd = spectral_density(&res, &mesh, &g, &f, w).unwrap();
            let direct = res.weighted_inner(&g, &f, w).unwrap();
            prop_assert!((sd.total(&mesh) - direct).norm() <= 1e-12 * (1.0 + direct.norm()));
        }
    }

    #[test]
    fn densities_are_hermitian_in_their_arguments(seed in 0u64..10_000, m in 1usize..40, de in 0.05f64..2.0) {
        let res = random_reservoir(m, 2.0, 0.3, seed);
        let mesh = build_mesh(&res, de).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdef);
        let g = random_vector(m, &mut rng);
        let f = random_vector(m, &mut rng);
        for w in WEIGHTS {
            let a = spectral_density(&res, &mesh, &g, &f, w).unwrap();
            let b = spectral_density(&res, &mesh, &f, &g, w).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y.conj()).norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn every_mode_lies_in_its_bin(seed in 0u64..10_000, m in 1usize..60, de in 0.01f64..3.0) {
        let res = random_reservoir(m, 1.0, 0.1, seed);
        let mesh = build_mesh(&res, de).unwrap();
        for (j, w) in res.omegas().iter().enumerate() {
            let b = mesh.mode_to_bin()[j];
            prop_assert!((w - mesh.center(b)).abs() <= 0.5 * de * (1.0 + 1e-9));
            prop_assert!(mesh.bin_modes(b).contains(&j));
        }
    }

    #[test]
    fn free_phase_is_a_unitary_group(seed in 0u64..10_000, s in -5.0f64..5.0, t in -5.0f64..5.0) {
        let res = random_reservoir(12, 1.0, 0.1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_vector(12, &mut rng);
        let g = random_vector(12, &mut rng);
        let st = free_phase(&res, &f, t).unwrap();
        let sst = free_phase(&res, &st, s).unwrap();
        let sum = free_phase(&res, &f, s + t).unwrap();
        for (a, b) in sst.iter().zip(&sum) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
        let before = overlap(&res, &g, &f).unwrap();
        let after = overlap(&res, &free_phase(&res, &g, t).unwrap(), &st).unwrap();
        prop_assert!((before - after).norm() <= 1e-12);
    }

    #[test]
    fn bin_kernel_pairs_to_twice_pi_sigma(seed in 0u64..10_000, m in 2usize..40, de in 0.05f64..1.0, log_sub in any::<bool>()) {
        let res = random_reservoir(m, 1.0, 0.1, seed);
        let mesh = build_mesh(&res, de).unwrap();
        let sd = formfactor_densities(&res, &mesh, Weight::None).unwrap();
        let table = gamma_pv(&sd, &mesh, log_sub);
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..mesh.n_bins() {
                    let lhs = table.gamma[a][b][k] + table.gamma[b][a][k].conj();
                    let rhs = sd[a][b].values[k] * (2.0 * PI);
                    prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
                }
            }
        }
    }
}

#[test]
fn resolvent_route_is_the_direct_mode_sum() {
    let res = random_reservoir(30, 1.0, 0.1, 17);
    let mesh = build_mesh(&res, 0.3).unwrap();
    let eta = 0.21;
    let table = gamma_resolvent(&res, &mesh, eta).unwrap();
    let g = [res.formfactor(0), res.formfactor(1)];
    for m in 0..2 {
        for n in 0..2 {
            for b in 0..mesh.n_bins() {
                let e = mesh.center(b);
                let mut direct = c(0.0, 0.0);
                for (j, md) in res.modes().iter().enumerate() {
                    direct += g[m][j].conj() * g[n][j] / c(md.omega - e, -eta);
                }
                direct *= c(0.0, -1.0);
                assert_relative_eq!(table.gamma[m][n][b].re, direct.re, epsilon = 1e-13);
                assert_relative_eq!(table.gamma[m][n][b].im, direct.im, epsilon = 1e-13);
            }
        }
    }
}

#[test]
fn resolvent_route_satisfies_sokhotski_pairing_with_lorentzian_density() {
    // γ_gf + conj(γ_fg) = 2 Σ_j conj(g_j) f_j η/((ω_j − E)² + η²) for the resolvent route.
    let res = random_reservoir(25, 1.0, 0.1, 3);
    let mesh = build_mesh(&res, 0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g = random_vector(25, &mut rng);
    let f = random_vector(25, &mut rng);
    let eta = 0.1;
    let method = KernelMethod::ResolventEta { eta };
    let gf = pair_kernel(&res, &mesh, &g, &f, method).unwrap();
    let fg = pair_kernel(&res, &mesh, &f, &g, method).unwrap();
    for b in 0..mesh.n_bins() {
        let e = mesh.center(b);
        let lorentz: C64 = res
            .modes()
            .iter()
            .enumerate()
            .map(|(j, md)| g[j].conj() * f[j] * (2.0 * eta / ((md.omega - e).powi(2) + eta * eta)))
            .sum();
        assert!((gf[b] + fg[b].conj() - lorentz).norm() < 1e-12);
    }
}

#[test]
fn dual_routes_approach_each_other_under_refinement() {
    let mut gaps = Vec::new();
    for n_bins in [32usize, 64, 128, 256] {
        let spec = GaussianReservoir::new(n_bins, 2, 3.0);
        let res = spec.build();
        let mesh = build_mesh(&res, spec.delta_e()).unwrap();
        let pv = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
        let rs = gamma_table(&res, &mesh, KernelMethod::ResolventEta { eta: mesh.delta_e() }).unwrap();
        gaps.push(pv.max_abs_diff(&rs) / pv.max_abs());
    }
    assert!(gaps.windows(2).all(|w| w[1] < 0.6 * w[0]), "{gaps:?}");
}

#[test]
fn log_subtraction_converges_to_the_plain_rule() {
    let mut gaps = Vec::new();
    for n_bins in [32usize, 64, 128] {
        let spec = GaussianReservoir::new(n_bins, 1, 4.0);
        let res = spec.build();
        let mesh = build_mesh(&res, spec.delta_e()).unwrap();
        let sd = formfactor_densities(&res, &mesh, Weight::None).unwrap();
        let a = pv_kernel(&sd[0][0].values, &mesh, false);
        let b = pv_kernel(&sd[0][0].values, &mesh, true);
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        gaps.push(a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale);
    }
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn zero_formfactor_gives_zero_kernels() {
    let mut res_doc = ModelDocument::from_json(
        r#"{"system":{"dim":1,"h_s":[[{"re":0.0,"im":0.0}]],"d":[[{"re":1.0,"im":0.0}]]},
            "reservoir":{"xi":0.1,"modes":[
              {"omega":-1.0,"l":0.5,"g0":{"re":0.0,"im":0.0},"g1":{"re":0.0,"im":0.0}},
              {"omega":1.0,"l":0.5,"g0":{"re":0.0,"im":0.0},"g1":{"re":0.0,"im":0.0}}]},
            "mesh":{"delta_e":0.5}}"#,
    )
    .unwrap();
    res_doc.mesh.delta_e = 0.25;
    let model = res_doc.load().unwrap();
    let mesh = build_mesh(&model.reservoir, model.delta_e).unwrap();
    let table = gamma_table(&model.reservoir, &mesh, KernelMethod::default()).unwrap();
    assert_eq!(table.max_abs(), 0.0);
}
