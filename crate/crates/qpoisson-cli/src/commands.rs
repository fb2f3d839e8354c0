use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use qpoisson_core::config::ComplexJson;
use qpoisson_core::dynamics::{drift_propagator, letter, SeriesResult};
use qpoisson_core::limit::block_constants;
use qpoisson_core::linalg::{hermitian_eigenvalues, CMat, C64};
use qpoisson_core::scattering::{r_hermiticity_gap, r_norms, r_rows, refinement_study};
use qpoisson_core::wick::{diagram_scaling_report, DEFAULT_ORDER_CAP};
use qpoisson_core::{
    assemble_generator, assemble_s_matrix, build_mesh, build_scattering, collision_monte_carlo, convergence_study,
    enumerate_pairings, evolve_semigroup, finite_xi_correlator, formfactor_densities, gamma_table, limit_correlator,
    series_expectation, unitarity_report, CorrelatorSpec, EnergyMesh, Error,
    GeneratorData, InversionOptions, LimitEngine, LoadedModel, SMatrix, ScatteringData, Slot, TrajectoryConfig,
    Weight,
};

use crate::output::{complex, entry_rows, matrix, RunDir};
use crate::{InversionArgs, KernelArgs, WordArgs};

pub struct Context<'a> {
    pub model: &'a LoadedModel,
    pub seed: u64,
    pub budget: u128,
}

impl Context<'_> {
    pub fn mesh(&self) -> Result<EnergyMesh> {
        Ok(build_mesh(&self.model.reservoir, self.model.delta_e)?)
    }

    pub fn scattering(&self, mesh: &EnergyMesh, kernel: &KernelArgs, opts: InversionOptions) -> Result<ScatteringData> {
        let gamma = gamma_table(&self.model.reservoir, mesh, kernel.method(mesh.delta_e()))?;
        Ok(build_scattering(&self.model.system, &gamma, opts)?)
    }

    pub fn dynamics(&self, mesh: &EnergyMesh, kernel: &KernelArgs) -> Result<(ScatteringData, SMatrix, GeneratorData)> {
        let sdata = self.scattering(mesh, kernel, InversionOptions::default())?;
        let sd = formfactor_densities(&self.model.reservoir, mesh, Weight::None)?;
        let sdl = formfactor_densities(&self.model.reservoir, mesh, Weight::L)?;
        let gen = assemble_generator(&sdata, &sd, &sdl, mesh);
        let s = assemble_s_matrix(&sdata, &self.model.reservoir, mesh);
        Ok((sdata, s, gen))
    }

    pub fn slots(&self, word: &WordArgs) -> Result<(String, Vec<Slot>)> {
        let w = match &word.word {
            Some(w) => w.clone(),
            None => (0..word.order).map(|k| if k % 2 == 0 { '0' } else { '1' }).collect(),
        };
        if w.is_empty() {
            return Err(Error::Argument("word must contain at least one letter".into()).into());
        }
        let slots = w
            .chars()
            .map(|ch| match ch {
                '0' => Ok(letter(&self.model.system, &self.model.reservoir, 0).1),
                '1' => Ok(letter(&self.model.system, &self.model.reservoir, 1).1),
                other => Err(Error::Argument(format!("word letters must be 0 or 1, got {other:?}"))),
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((w, slots))
    }
}

#[derive(Serialize)]
struct SpectralRow {
    bin_center: f64,
    weight: &'static str,
    m: usize,
    n: usize,
    re: f64,
    im: f64,
}

pub fn spectral(ctx: &Context, dir: &mut RunDir) -> Result<()> {
    let mesh = ctx.mesh()?;
    let mut rows = Vec::new();
    for w in [Weight::None, Weight::L, Weight::LOverOneMinusXiL] {
        let sd = formfactor_densities(&ctx.model.reservoir, &mesh, w)?;
        for b in 0..mesh.n_bins() {
            for (m, row) in sd.iter().enumerate() {
                for (n, dens) in row.iter().enumerate() {
                    rows.push(SpectralRow {
                        bin_center: mesh.center(b),
                        weight: w.label(),
                        m,
                        n,
                        re: dens.values[b].re,
                        im: dens.values[b].im,
                    });
                }
            }
        }
    }
    dir.csv("spectral.csv", &rows)
}

pub fn gamma(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs) -> Result<()> {
    let mesh = ctx.mesh()?;
    let table = gamma_table(&ctx.model.reservoir, &mesh, kernel.method(mesh.delta_e()))?;
    dir.csv("gamma.csv", &table.rows(&mesh))
}

#[derive(Serialize)]
struct ScatteringSummary {
    n_bins: usize,
    delta_e: f64,
    cond: Vec<f64>,
    r_norms: [[f64; 2]; 2],
    r_hermiticity_gap: f64,
}

pub fn scattering(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, inv: &InversionArgs) -> Result<()> {
    let mesh = ctx.mesh()?;
    let opts = InversionOptions {
        cond_threshold: inv.cond_threshold,
        residual_tol: inv.residual_tol,
    };
    let sdata = ctx.scattering(&mesh, kernel, opts)?;
    dir.csv("r.csv", &r_rows(&sdata, &mesh))?;
    dir.json(
        "scattering.json",
        &ScatteringSummary {
            n_bins: mesh.n_bins(),
            delta_e: mesh.delta_e(),
            cond: sdata.cond.clone(),
            r_norms: r_norms(&sdata),
            r_hermiticity_gap: r_hermiticity_gap(&sdata),
        },
    )
}

#[derive(Serialize)]
struct DefectRow {
    bin_center: f64,
    modes: usize,
    defect: f64,
}

pub fn smatrix(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, refine: usize, oracle_bins: usize) -> Result<()> {
    if refine == 0 {
        bail!(Error::Argument("--refine must be at least 1".into()));
    }
    let mesh = ctx.mesh()?;
    let sdata = ctx.scattering(&mesh, kernel, InversionOptions::default())?;
    let rep = unitarity_report(&assemble_s_matrix(&sdata, &ctx.model.reservoir, &mesh));
    let rows: Vec<DefectRow> = rep
        .defects
        .iter()
        .enumerate()
        .map(|(b, &d)| DefectRow {
            bin_center: mesh.center(b),
            modes: mesh.bin_modes(b).len(),
            defect: d,
        })
        .collect();
    dir.csv("defects.csv", &rows)?;
    let des: Vec<f64> = (0..refine).map(|k| ctx.model.delta_e / f64::powi(2.0, k as i32)).collect();
    let study = refinement_study(
        &ctx.model.system,
        &ctx.model.reservoir,
        &des,
        |de| kernel.method(de),
        oracle_bins,
    )?;
    dir.json("refinement.json", &study)
}

#[derive(Serialize)]
struct DiagramValue {
    pairing: String,
    connected: bool,
    k: usize,
    value: ComplexJson,
}

#[derive(Serialize)]
struct CorrelatorReport {
    word: String,
    t: f64,
    xi: f64,
    total: ComplexJson,
    diagrams: Vec<DiagramValue>,
}

pub fn correlator(ctx: &Context, dir: &mut RunDir, word: &WordArgs, xi: f64) -> Result<()> {
    let (w, slots) = ctx.slots(word)?;
    let diagrams = enumerate_pairings(slots.len(), DEFAULT_ORDER_CAP)?;
    let spec = CorrelatorSpec { slots, t: word.t, xi };
    let v = finite_xi_correlator(&spec, &ctx.model.reservoir, &diagrams, ctx.budget)?;
    let report = CorrelatorReport {
        word: w,
        t: word.t,
        xi,
        total: complex(v.total),
        diagrams: diagrams
            .iter()
            .zip(&v.per_diagram)
            .map(|(d, z)| DiagramValue {
                pairing: d.label(),
                connected: d.connected,
                k: d.k,
                value: complex(*z),
            })
            .collect(),
    };
    dir.json("correlator.json", &report)
}

#[derive(Serialize)]
struct BlockValue {
    start: usize,
    end: usize,
    value: ComplexJson,
}

#[derive(Serialize)]
struct LimitReport {
    word: String,
    t: f64,
    value: ComplexJson,
    n_terms: usize,
    blocks: Vec<BlockValue>,
}

pub fn limit(ctx: &Context, dir: &mut RunDir, word: &WordArgs, kernel: &KernelArgs) -> Result<()> {
    let (w, slots) = ctx.slots(word)?;
    let mesh = ctx.mesh()?;
    let engine = LimitEngine::new(&ctx.model.reservoir, &mesh, kernel.method(mesh.delta_e()));
    let v = limit_correlator(&engine, &slots, word.t)?;
    let blocks = block_constants(&engine, &slots)?
        .into_iter()
        .flatten()
        .map(|b| BlockValue {
            start: b.start,
            end: b.end,
            value: complex(b.value),
        })
        .collect();
    dir.json(
        "limit.json",
        &LimitReport {
            word: w,
            t: word.t,
            value: complex(v.value),
            n_terms: v.n_terms,
            blocks,
        },
    )
}

#[derive(Serialize)]
struct ConvergeReport<'a> {
    word: String,
    t: f64,
    convergence: &'a qpoisson_core::limit::ConvergenceReport,
    diagram_scaling: &'a qpoisson_core::wick::ScalingReport,
}

pub fn converge(ctx: &Context, dir: &mut RunDir, word: &WordArgs, kernel: &KernelArgs, xis: &[f64]) -> Result<()> {
    let (w, slots) = ctx.slots(word)?;
    let mesh = ctx.mesh()?;
    let engine = LimitEngine::new(&ctx.model.reservoir, &mesh, kernel.method(mesh.delta_e()));
    let conv = convergence_study(&engine, &slots, word.t, xis, ctx.budget)?;
    let scaling = diagram_scaling_report(&slots, word.t, &ctx.model.reservoir, xis, ctx.budget)?;
    dir.json(
        "converge.json",
        &ConvergeReport {
            word: w,
            t: word.t,
            convergence: &conv,
            diagram_scaling: &scaling,
        },
    )
}

#[derive(Serialize)]
struct DriftReport {
    gamma: Vec<Vec<ComplexJson>>,
    spectral_norm: f64,
    t: f64,
    propagator: Vec<Vec<ComplexJson>>,
}

pub fn drift(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, t: f64) -> Result<()> {
    let mesh = ctx.mesh()?;
    let (_, _, gen) = ctx.dynamics(&mesh, kernel)?;
    let prop = drift_propagator(&gen.gamma_drift, &[t]).remove(0);
    dir.json(
        "drift.json",
        &DriftReport {
            gamma: matrix(&gen.gamma_drift),
            spectral_norm: gen.drift_norm(),
            t,
            propagator: matrix(&prop),
        },
    )
}

#[derive(Serialize)]
struct SeriesOrder {
    order: usize,
    term: Vec<Vec<ComplexJson>>,
    partial_sum: Vec<Vec<ComplexJson>>,
    max_abs_gap: f64,
}

#[derive(Serialize)]
struct SeriesReport {
    t: f64,
    drift_norm: f64,
    exact: Vec<Vec<ComplexJson>>,
    orders: Vec<SeriesOrder>,
}

pub fn series(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, t: f64, max_order: usize) -> Result<()> {
    let mesh = ctx.mesh()?;
    let (_, _, gen) = ctx.dynamics(&mesh, kernel)?;
    let engine = LimitEngine::new(&ctx.model.reservoir, &mesh, kernel.method(mesh.delta_e()));
    let SeriesResult {
        order_terms,
        partial_sums,
    } = series_expectation(&ctx.model.system, &engine, t, max_order)?;
    let exact = drift_propagator(&gen.gamma_drift, &[t]).remove(0);
    let orders = order_terms
        .iter()
        .zip(&partial_sums)
        .enumerate()
        .map(|(order, (term, sum))| SeriesOrder {
            order,
            term: matrix(term),
            partial_sum: matrix(sum),
            max_abs_gap: (sum - &exact).iter().map(|z| z.norm()).fold(0.0, f64::max),
        })
        .collect();
    dir.json(
        "series.json",
        &SeriesReport {
            t,
            drift_norm: gen.drift_norm(),
            exact: matrix(&exact),
            orders,
        },
    )
}

#[derive(Serialize)]
struct GeneratorReport {
    dim: usize,
    drift: Vec<Vec<ComplexJson>>,
    superoperator: Vec<Vec<ComplexJson>>,
    pre_dual: Vec<Vec<ComplexJson>>,
    unit_residual: f64,
    choi_eigenvalues: Vec<f64>,
}

pub fn generator(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs) -> Result<()> {
    let mesh = ctx.mesh()?;
    let (_, _, gen) = ctx.dynamics(&mesh, kernel)?;
    dir.json(
        "generator.json",
        &GeneratorReport {
            dim: gen.dim,
            drift: matrix(&gen.gamma_drift),
            superoperator: matrix(&gen.g_super),
            pre_dual: matrix(&gen.pre_dual),
            unit_residual: gen.unit_residual(),
            choi_eigenvalues: hermitian_eigenvalues(&gen.choi),
        },
    )
}

fn initial_state(path: Option<&Path>, dim: usize) -> Result<CMat> {
    match path {
        None => Ok(CMat::from_fn(dim, dim, |i, j| {
            if i == 0 && j == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let rows: Vec<Vec<ComplexJson>> = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                bail!(Error::Config(format!("rho0 must be {dim}x{dim}")));
            }
            Ok(CMat::from_fn(dim, dim, |i, j| rows[i][j].into()))
        }
    }
}

#[derive(Serialize)]
struct EvolveReport {
    times: Vec<f64>,
    trace_errors: Vec<f64>,
    hermiticity_errors: Vec<f64>,
    min_eigenvalues: Vec<f64>,
}

pub fn evolve(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, times: &[f64], rho0: Option<&Path>) -> Result<()> {
    let mesh = ctx.mesh()?;
    let (_, _, gen) = ctx.dynamics(&mesh, kernel)?;
    let rho = initial_state(rho0, gen.dim)?;
    let ev = evolve_semigroup(&gen, &rho, times)?;
    let rows: Vec<_> = ev.times.iter().zip(&ev.states).flat_map(|(&t, s)| entry_rows(t, s)).collect();
    dir.csv("evolve.csv", &rows)?;
    dir.json(
        "evolve.json",
        &EvolveReport {
            times: ev.times,
            trace_errors: ev.trace_errors,
            hermiticity_errors: ev.hermiticity_errors,
            min_eigenvalues: ev.min_eigenvalues,
        },
    )
}

pub struct McArgs<'a> {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub rate_scale: Option<f64>,
    pub calibration_threshold: f64,
    pub rho0: Option<&'a Path>,
}

#[derive(Serialize)]
struct McRow {
    t: f64,
    i: usize,
    j: usize,
    mean_re: f64,
    mean_im: f64,
    se_re: f64,
    se_im: f64,
    exact_re: f64,
    exact_im: f64,
}

#[derive(Serialize)]
struct McReport {
    n_traj: usize,
    seed: u64,
    dt: f64,
    horizon: f64,
    rate_scale: f64,
    calibration_residual: f64,
    mean_collisions: f64,
    max_step_trace_error: f64,
    max_deviation_in_standard_errors: f64,
    warnings: Vec<String>,
}

pub fn mc(ctx: &Context, dir: &mut RunDir, kernel: &KernelArgs, args: McArgs) -> Result<()> {
    let mesh = ctx.mesh()?;
    let (_, s, gen) = ctx.dynamics(&mesh, kernel)?;
    let rho = initial_state(args.rho0, gen.dim)?;
    let cfg = TrajectoryConfig {
        rate_scale: args.rate_scale,
        calibration_threshold: args.calibration_threshold,
        ..TrajectoryConfig::new(args.dt, args.horizon, args.n_traj, ctx.seed)
    };
    let run = collision_monte_carlo(&s, &ctx.model.reservoir, &mesh, &gen, &cfg, &rho)?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for ((&t, mean), se) in run.times.iter().zip(&run.mean).zip(&run.std_err) {
        let exact = qpoisson_core::linalg::apply_super(&gen.step_map(t), &rho);
        for i in 0..gen.dim {
            for j in 0..gen.dim {
                let (m, e, s) = (mean[(i, j)], exact[(i, j)], se[(i, j)]);
                if s.re > 0.0 {
                    worst = worst.max((m.re - e.re).abs() / s.re);
                }
                if s.im > 0.0 {
                    worst = worst.max((m.im - e.im).abs() / s.im);
                }
                rows.push(McRow {
                    t,
                    i,
                    j,
                    mean_re: m.re,
                    mean_im: m.im,
                    se_re: s.re,
                    se_im: s.im,
                    exact_re: e.re,
                    exact_im: e.im,
                });
            }
        }
    }
    dir.csv("mc.csv", &rows)?;
    dir.json(
        "mc.json",
        &McReport {
            n_traj: cfg.n_traj,
            seed: cfg.seed,
            dt: run.times.get(1).copied().unwrap_or(cfg.dt),
            horizon: cfg.horizon,
            rate_scale: run.rate_scale,
            calibration_residual: run.calibration_residual,
            mean_collisions: run.mean_collisions,
            max_step_trace_error: run.max_step_trace_error,
            max_deviation_in_standard_errors: worst,
            warnings: run.warnings,
        },
    )
}
