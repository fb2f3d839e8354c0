use std::f64::consts::PI;

use anyhow::Result;
use serde::Serialize;

use qpoisson_core::dynamics::{collision_model, letter};
use qpoisson_core::linalg::{frobenius, C64};
use qpoisson_core::scattering::{compare_on_shell, sample_occupied_bins};
use qpoisson_core::wick::DEFAULT_ORDER_CAP;
use qpoisson_core::{
    assemble_t_operator, build_scattering, enumerate_pairings, evolve_semigroup, factorization_check,
    finite_xi_correlator, formfactor_densities, gamma_table, limit_correlator, unitarity_report, CorrelatorSpec,
    Error, InversionOptions, KernelMethod, LimitEngine, Slot, Weight,
};

use crate::commands::Context;
use crate::output::RunDir;
use crate::{KernelArgs, MethodArg};

/// Lowest accepted Choi eigenvalue of `e^{G*}`.
const CHOI_FLOOR: f64 = -1e-8;
/// Occupied bins compared against the Lippmann-Schwinger solve.
const ORACLE_BINS: usize = 3;

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    tol: f64,
    pass: bool,
    checks: Vec<Check>,
}

struct Checks(Vec<Check>);

impl Checks {
    /// Records `value ≤ tol · max(1, scale)`.
    fn bound(&mut self, name: &'static str, value: f64, tol: f64, scale: f64) {
        let threshold = tol * scale.max(1.0);
        self.0.push(Check {
            name,
            value,
            threshold,
            pass: value <= threshold,
        });
    }
}

pub fn verify(ctx: &Context, dir: &mut RunDir, tol: f64) -> Result<()> {
    let model = ctx.model;
    let res = &model.reservoir;
    let system = &model.system;
    let mesh = ctx.mesh()?;
    let de = mesh.delta_e();
    let g = [res.formfactor(0), res.formfactor(1)];
    let mut checks = Checks(Vec::new());

    let mut comp = 0.0f64;
    let mut comp_scale = 0.0f64;
    let mut herm = 0.0f64;
    for w in [Weight::None, Weight::L, Weight::LOverOneMinusXiL] {
        let sd = formfactor_densities(res, &mesh, w)?;
        for a in 0..2 {
            for b in 0..2 {
                let direct = res.weighted_inner(&g[a], &g[b], w)?;
                comp = comp.max((sd[a][b].total(&mesh) - direct).norm());
                comp_scale = comp_scale.max(direct.norm());
                for k in 0..mesh.n_bins() {
                    herm = herm.max((sd[a][b].values[k] - sd[b][a].values[k].conj()).norm());
                }
            }
        }
    }
    checks.bound("spectral_completeness", comp, tol, comp_scale);
    checks.bound("density_hermiticity", herm, tol, comp_scale / de);

    let sd = formfactor_densities(res, &mesh, Weight::None)?;
    let pv = gamma_table(res, &mesh, KernelMethod::default())?;
    let mut tilde = 0.0f64;
    let mut pairing = 0.0f64;
    for a in 0..2 {
        for b in 0..2 {
            for k in 0..mesh.n_bins() {
                let two_pi_sigma = sd[a][b].values[k] * (2.0 * PI);
                tilde = tilde.max((pv.gamma_tilde[a][b][k] - two_pi_sigma).norm());
                pairing = pairing.max((pv.gamma[a][b][k] + pv.gamma[b][a][k].conj() - two_pi_sigma).norm());
            }
        }
    }
    checks.bound("gamma_tilde", tilde, tol, pv.max_abs());
    checks.bound("gamma_pairing", pairing, tol, pv.max_abs());

    let sdata = build_scattering(system, &pv, InversionOptions::default())?;
    let s = qpoisson_core::assemble_s_matrix(&sdata, res, &mesh);
    checks.bound("s_unitarity", unitarity_report(&s).max_defect, tol, 1.0);

    let t = assemble_t_operator(&sdata, res, &mesh);
    let mm = res.len();
    let mut st = 0.0f64;
    for b in 0..mesh.n_bins() {
        for &j in mesh.bin_modes(b) {
            for &k in mesh.bin_modes(b) {
                for u in 0..system.dim() {
                    for v in 0..system.dim() {
                        let delta = if u == v && j == k { 1.0 } else { 0.0 };
                        let lhs = s.element(u, j, v, k) - C64::new(delta, 0.0);
                        let rhs = t[(u * mm + j, v * mm + k)] * C64::new(0.0, -2.0 * PI / de);
                        st = st.max((lhs - rhs).norm());
                    }
                }
            }
        }
    }
    checks.bound("s_t_on_shell", st, tol, 1.0);

    let eta = de;
    let resolvent = gamma_table(res, &mesh, KernelMethod::ResolventEta { eta })?;
    let rdata = build_scattering(system, &resolvent, InversionOptions::default())?;
    let rt = assemble_t_operator(&rdata, res, &mesh);
    let bins = sample_occupied_bins(&mesh, ORACLE_BINS);
    let ls = compare_on_shell(system, res, &mesh, &rt, &bins, eta)?
        .iter()
        .map(|c| c.relative_error)
        .fold(0.0, f64::max);
    checks.bound("lippmann_schwinger", ls, tol, 1.0);

    let kernel = KernelArgs {
        method: MethodArg::Pv,
        eta: None,
        log_subtraction: false,
    };
    let (_, _, gen) = ctx.dynamics(&mesh, &kernel)?;
    checks.bound("generator_unit", gen.unit_residual(), tol, gen.drift_norm());
    let cm = collision_model(&s, res, &mesh, &gen, Some(1.0), f64::INFINITY)?;
    checks.bound(
        "collision_generator",
        frobenius(&(cm.generator(gen.dim) - &gen.pre_dual)),
        tol,
        frobenius(&gen.pre_dual),
    );
    let choi_min = gen.min_choi_eigenvalue(1.0);
    checks.0.push(Check {
        name: "choi_positivity",
        value: choi_min,
        threshold: CHOI_FLOOR,
        pass: choi_min >= CHOI_FLOOR,
    });
    let rho0 = qpoisson_core::CMat::from_fn(gen.dim, gen.dim, |i, j| {
        C64::new(if i == 0 && j == 0 { 1.0 } else { 0.0 }, 0.0)
    });
    let ev = evolve_semigroup(&gen, &rho0, &[1.0])?;
    checks.bound("trace_preservation", ev.trace_errors[0], tol, 1.0);

    let slots: Vec<Slot> = (0..4).map(|k| letter(system, res, k % 2).1).collect();
    let horizon = 1.0;
    if res.xi() > 0.0 {
        let diagrams = enumerate_pairings(1, DEFAULT_ORDER_CAP)?;
        let spec = CorrelatorSpec {
            slots: slots[..1].to_vec(),
            t: horizon,
            xi: res.xi(),
        };
        let v = finite_xi_correlator(&spec, res, &diagrams, ctx.budget)?.total;
        let closed = res.weighted_inner(&slots[0].g, &slots[0].f, Weight::LOverOneMinusXiL)? * horizon;
        checks.bound("n1_closed_form", (v - closed).norm(), tol, closed.norm());
    }

    let engine = LimitEngine::new(res, &mesh, KernelMethod::default());
    let mut count_gap = 0.0f64;
    let mut fact_gap = 0.0f64;
    let mut fact_scale = 0.0f64;
    for n in 1..=slots.len() {
        let lv = limit_correlator(&engine, &slots[..n], horizon)?;
        count_gap = count_gap.max((lv.n_terms as f64 - 2f64.powi(n as i32 - 1)).abs());
        if n <= 2 {
            let rep = factorization_check(&engine, &slots[1], &slots[..n], horizon)?;
            fact_gap = fact_gap.max(rep.max_abs_diff);
            fact_scale = fact_scale.max(rep.max_abs);
        }
    }
    checks.bound("composition_count", count_gap, 0.0, 1.0);
    checks.bound("factorization", fact_gap, tol, fact_scale);

    let pass = checks.0.iter().all(|c| c.pass);
    let failed: Vec<&str> = checks.0.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    dir.json(
        "verify.json",
        &VerifyReport {
            tol,
            pass,
            checks: checks.0,
        },
    )?;
    if pass {
        Ok(())
    } else {
        Err(Error::Numerical(format!("verification failed: {}", failed.join(", "))).into())
    }
}
