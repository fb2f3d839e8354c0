use std::f64::consts::PI;

use qpoisson_core::error::Error;
use qpoisson_core::fit::loglog_slope;
use qpoisson_core::fixtures::{dephasing_qubit, random_reservoir, two_level_system, GaussianReservoir};
use qpoisson_core::linalg::{c, frobenius, identity, CMat};
use qpoisson_core::scattering::{
    compare_on_shell, interaction_v1, r_hermiticity_gap, r_norms, refinement_study, sample_occupied_bins,
    DEFECT_FLOOR,
};
use qpoisson_core::{
    assemble_s_matrix, assemble_t_operator, build_mesh, build_scattering, gamma_table, unitarity_report,
    InversionOptions, KernelMethod, SystemModel,
};

fn small_gaussian() -> (qpoisson_core::ReservoirModel, qpoisson_core::EnergyMesh) {
    let spec = GaussianReservoir::new(16, 3, 3.0);
    let res = spec.build();
    let mesh = build_mesh(&res, spec.delta_e()).unwrap();
    (res, mesh)
}

#[test]
fn zero_coupling_gives_trivial_scattering() {
    let (res, mesh) = small_gaussian();
    let system = two_level_system(0.0);
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&system, &gamma, InversionOptions::default()).unwrap();
    for b in 0..sdata.n_bins() {
        assert_eq!(sdata.t0[b], identity(2));
        assert_eq!(sdata.t1[b], identity(2));
    }
    assert_eq!(r_norms(&sdata), [[0.0; 2]; 2]);
    let s = assemble_s_matrix(&sdata, &res, &mesh);
    assert_eq!(unitarity_report(&s).max_defect, 0.0);
    assert_eq!(s.to_dense(), identity(2 * res.len()));
}

#[test]
fn inverse_residuals_and_conditioning_are_recorded() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&two_level_system(1.0), &gamma, InversionOptions::default()).unwrap();
    assert_eq!(sdata.cond.len(), mesh.n_bins());
    assert!(sdata.cond.iter().all(|&k| (1.0..1e12).contains(&k)));
    for mat in sdata.r.iter().flatten().flatten() {
        assert!(mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }
}

#[test]
fn ill_conditioned_inverse_is_a_scattering_error() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let opts = InversionOptions {
        cond_threshold: 1.0 + 1e-15,
        residual_tol: 1e-10,
    };
    let err = build_scattering(&two_level_system(1.0), &gamma, opts).unwrap_err();
    assert!(matches!(err, Error::Scattering { .. }), "{err}");
}

#[test]
fn r_blocks_scale_with_coupling_powers() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let eps = [1e-3, 2e-3, 4e-3];
    let norms: Vec<[[f64; 2]; 2]> = eps
        .iter()
        .map(|&e| {
            let sdata = build_scattering(&two_level_system(e), &gamma, InversionOptions::default()).unwrap();
            r_norms(&sdata)
        })
        .collect();
    let expected = [[2.0, 1.0], [1.0, 2.0]];
    for m in 0..2 {
        for n in 0..2 {
            let y: Vec<f64> = norms.iter().map(|r| r[m][n]).collect();
            let p = loglog_slope(&eps, &y);
            assert!((p - expected[m][n]).abs() < 0.01, "R_{m}{n}: power {p}");
        }
    }
}

#[test]
fn r_hermiticity_gap_is_reported_finite() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&two_level_system(0.7), &gamma, InversionOptions::default()).unwrap();
    assert!(r_hermiticity_gap(&sdata).is_finite());
}

#[test]
fn born_limit_recovers_the_interaction() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let eps = [1e-3, 2e-3, 4e-3];
    let gaps: Vec<f64> = eps
        .iter()
        .map(|&e| {
            let system = two_level_system(e);
            let sdata = build_scattering(&system, &gamma, InversionOptions::default()).unwrap();
            let t = assemble_t_operator(&sdata, &res, &mesh);
            frobenius(&(t - interaction_v1(&system, &res)))
        })
        .collect();
    let p = loglog_slope(&eps, &gaps);
    assert!((p - 2.0).abs() < 0.01, "second Born term power {p}");
}

#[test]
fn closed_form_t_equals_lippmann_schwinger_with_resolvent_kernels() {
    let res = random_reservoir(18, 1.0, 0.1, 21);
    let mesh = build_mesh(&res, 0.5).unwrap();
    for system in [two_level_system(0.8), dephasing_qubit(0.9)] {
        let eta = 0.37;
        let gamma = gamma_table(&res, &mesh, KernelMethod::ResolventEta { eta }).unwrap();
        let sdata = build_scattering(&system, &gamma, InversionOptions::default()).unwrap();
        let t = assemble_t_operator(&sdata, &res, &mesh);
        let bins: Vec<usize> = (0..mesh.n_bins()).collect();
        let cmp = compare_on_shell(&system, &res, &mesh, &t, &bins, eta).unwrap();
        assert!(!cmp.is_empty());
        for row in cmp {
            assert!(row.relative_error < 1e-10, "{row:?}");
        }
    }
}

#[test]
fn s_blocks_and_t_operator_agree_on_shell() {
    let (res, mesh) = small_gaussian();
    let system = two_level_system(0.6);
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&system, &gamma, InversionOptions::default()).unwrap();
    let s = assemble_s_matrix(&sdata, &res, &mesh);
    let t = assemble_t_operator(&sdata, &res, &mesh);
    let mm = res.len();
    let de = mesh.delta_e();
    for b in 0..mesh.n_bins() {
        for &j in mesh.bin_modes(b) {
            for &k in mesh.bin_modes(b) {
                for u in 0..2 {
                    for v in 0..2 {
                        let lhs = s.element(u, j, v, k) - if u == v && j == k { c(1.0, 0.0) } else { c(0.0, 0.0) };
                        let rhs = t[(u * mm + j, v * mm + k)] * c(0.0, -2.0 * PI / de);
                        assert!((lhs - rhs).norm() < 1e-12);
                    }
                }
            }
        }
    }
    let dense = s.to_dense();
    for j in 0..mm {
        for k in 0..mm {
            if mesh.mode_to_bin()[j] != mesh.mode_to_bin()[k] {
                for u in 0..2 {
                    for v in 0..2 {
                        assert_eq!(dense[(u * mm + j, v * mm + k)], c(0.0, 0.0));
                    }
                }
            }
        }
    }
}

#[test]
fn bin_route_s_matrix_is_unitary_to_roundoff() {
    let (res, mesh) = small_gaussian();
    for scale in [0.1, 1.0, 3.0] {
        let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
        let sdata = build_scattering(&two_level_system(scale), &gamma, InversionOptions::default()).unwrap();
        let rep = unitarity_report(&assemble_s_matrix(&sdata, &res, &mesh));
        assert!(rep.max_defect < 1e-12, "scale {scale}: {}", rep.max_defect);
    }
}

#[test]
fn corrupted_block_is_detected() {
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&two_level_system(0.5), &gamma, InversionOptions::default()).unwrap();
    let mut s = assemble_s_matrix(&sdata, &res, &mesh);
    let b = sample_occupied_bins(&mesh, 1)[0];
    s.blocks[b][(0, 0)] += c(1e-3, 0.0);
    let rep = unitarity_report(&s);
    assert!(rep.defects[b] >= 1e-3, "{}", rep.defects[b]);
}

#[test]
fn resolvent_route_defects_decrease_under_refinement() {
    let system = two_level_system(0.25);
    let res = GaussianReservoir::new(64, 2, 3.0).build();
    let de0 = 6.0 / 16.0;
    let des = [de0, de0 / 2.0, de0 / 4.0];
    let rep = refinement_study(&system, &res, &des, |de| KernelMethod::ResolventEta { eta: de }, 2).unwrap();
    assert!(rep.monotone);
    assert!(rep.levels.windows(2).all(|w| w[1].max_defect < w[0].max_defect));
    assert!(rep.fitted_order.unwrap() > 0.5);
    assert!(rep.levels.iter().all(|l| l.t_agreement.unwrap().is_finite()));
    let pv = refinement_study(&system, &res, &des, |_| KernelMethod::default(), 0).unwrap();
    assert!(pv.monotone);
    assert!(pv.levels.iter().all(|l| l.max_defect <= DEFECT_FLOOR));
}

#[test]
fn scalar_system_has_scalar_blocks() {
    let system = SystemModel::new(CMat::from_element(1, 1, c(0.3, 0.0)), CMat::from_element(1, 1, c(0.4, 0.1))).unwrap();
    let (res, mesh) = small_gaussian();
    let gamma = gamma_table(&res, &mesh, KernelMethod::default()).unwrap();
    let sdata = build_scattering(&system, &gamma, InversionOptions::default()).unwrap();
    // N_S = 1: T₀ = 1/(1 + γ₀₁d* − γ₁₀d + (γ₀₀γ₁₁ − γ₁₀γ₀₁)|d|²).
    let d = c(0.4, 0.1);
    for b in 0..mesh.n_bins() {
        let g = |m: usize, n: usize| gamma.gamma[m][n][b];
        let den = c(1.0, 0.0) + g(0, 1) * d.conj() - g(1, 0) * d + (g(0, 0) * g(1, 1) - g(1, 0) * g(0, 1)) * d.norm_sqr();
        assert!((sdata.t0[b][(0, 0)] - den.inv()).norm() < 1e-12);
    }
}
