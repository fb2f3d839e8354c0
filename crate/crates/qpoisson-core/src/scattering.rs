//! One-particle scattering: `T₀(E)`, `T₁(E)`, `R_{m,n}(E)`, the T-operator and the bin-blocked
//! S-matrix, with a Lippmann-Schwinger reference solve and unitarity diagnostics.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{gamma_table, GammaTable, KernelMethod};
use crate::linalg::{checked_inverse, condition_number, frobenius, identity, CMat, C64, I};
use crate::model::{build_mesh, EnergyMesh, ReservoirModel, SystemModel};

/// Inversion safeguards for `T₀`/`T₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionOptions {
    pub cond_threshold: f64,
    pub residual_tol: f64,
}

impl Default for InversionOptions {
    fn default() -> Self {
        Self {
            cond_threshold: 1e12,
            residual_tol: 1e-10,
        }
    }
}

/// Per-bin scattering matrices on the system space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringData {
    pub t0: Vec<CMat>,
    pub t1: Vec<CMat>,
    /// `r[m][n][b] = R_{m,n}(E_b)`.
    pub r: [[Vec<CMat>; 2]; 2],
    /// Larger of the two condition numbers inverted in each bin.
    pub cond: Vec<f64>,
}

impl ScatteringData {
    pub fn n_bins(&self) -> usize {
        self.t0.len()
    }
}

/// `T₀ = (1 + γ₀₁D† − γ₁₀D + (γ₀₀γ₁₁ − γ₁₀γ₀₁)DD†)⁻¹` and `T₁` with `D†D`.
pub fn build_t0_t1(
    system: &SystemModel,
    gamma: &GammaTable,
    opts: InversionOptions,
) -> Result<(Vec<CMat>, Vec<CMat>, Vec<f64>)> {
    let d = system.d_op();
    let dh = d.adjoint();
    let ddh = d * &dh;
    let dhd = &dh * d;
    let one = identity(system.dim());
    let per_bin: Vec<Result<(CMat, CMat, f64)>> = (0..gamma.n_bins())
        .into_par_iter()
        .map(|b| {
            let g = |m: usize, n: usize| gamma.at(m, n, b);
            let det = g(0, 0) * g(1, 1) - g(1, 0) * g(0, 1);
            let base = &one + &dh * g(0, 1) - d * g(1, 0);
            let a0 = &base + &ddh * det;
            let a1 = &base + &dhd * det;
            let mut cond = 0.0f64;
            let mut inv = |a: &CMat| -> Result<CMat> {
                let k = condition_number(a);
                cond = cond.max(k);
                if !(k < opts.cond_threshold) {
                    return Err(Error::Scattering {
                        bin: b,
                        reason: format!("condition number {k:e} exceeds {:e}", opts.cond_threshold),
                    });
                }
                checked_inverse(a, opts.residual_tol).map_err(|e| Error::Scattering {
                    bin: b,
                    reason: e.to_string(),
                })
            };
            let t0 = inv(&a0)?;
            let t1 = inv(&a1)?;
            Ok((t0, t1, cond))
        })
        .collect();
    let mut t0 = Vec::with_capacity(per_bin.len());
    let mut t1 = Vec::with_capacity(per_bin.len());
    let mut cond = Vec::with_capacity(per_bin.len());
    for r in per_bin {
        let (a, b, c) = r?;
        t0.push(a);
        t1.push(b);
        cond.push(c);
    }
    Ok((t0, t1, cond))
}

/// `R₀₀ = γ₁₁DT₁D†`, `R₁₁ = γ₀₀D†T₀D`, `R₀₁ = −DT₁(1 + γ₀₁D†)`, `R₁₀ = D†T₀(1 − γ₁₀D)`.
pub fn build_r(system: &SystemModel, gamma: &GammaTable, t0: &[CMat], t1: &[CMat]) -> [[Vec<CMat>; 2]; 2] {
    let d = system.d_op();
    let dh = d.adjoint();
    let one = identity(system.dim());
    let nb = gamma.n_bins();
    let mut r: [[Vec<CMat>; 2]; 2] = Default::default();
    for b in 0..nb {
        let g = |m: usize, n: usize| gamma.at(m, n, b);
        r[0][0].push(d * &t1[b] * &dh * g(1, 1));
        r[1][1].push(&dh * &t0[b] * d * g(0, 0));
        r[0][1].push(-(d * &t1[b] * (&one + &dh * g(0, 1))));
        r[1][0].push(&dh * &t0[b] * (&one - d * g(1, 0)));
    }
    r
}

pub fn build_scattering(system: &SystemModel, gamma: &GammaTable, opts: InversionOptions) -> Result<ScatteringData> {
    let (t0, t1, cond) = build_t0_t1(system, gamma, opts)?;
    let r = build_r(system, gamma, &t0, &t1);
    Ok(ScatteringData { t0, t1, r, cond })
}

/// Energy-blocked S-matrix; `blocks[b]` acts on system ⊗ (modes of bin `b`) with index
/// `s·M_b + p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SMatrix {
    pub blocks: Vec<CMat>,
    pub bin_modes: Vec<Vec<usize>>,
    pub dim_s: usize,
    pub delta_e: f64,
    pub n_modes: usize,
}

/// `S_b = 1 − (2π/ΔE) Σ_{m,n} R_{m,n}(E_b) ⊗ |Π_b g_m⟩⟨Π_b g_n|`.
pub fn assemble_s_matrix(sdata: &ScatteringData, reservoir: &ReservoirModel, mesh: &EnergyMesh) -> SMatrix {
    let ns = sdata.r[0][0].first().map(|m| m.nrows()).unwrap_or(0);
    let g = [reservoir.formfactor(0), reservoir.formfactor(1)];
    let scale = 2.0 * PI / mesh.delta_e();
    let blocks = (0..mesh.n_bins())
        .map(|b| {
            let idx = mesh.bin_modes(b);
            let mb = idx.len();
            let mut s = identity(ns * mb);
            for m in 0..2 {
                for n in 0..2 {
                    let gm = CMat::from_fn(mb, 1, |p, _| g[m][idx[p]]);
                    let gn = CMat::from_fn(mb, 1, |p, _| g[n][idx[p]]);
                    let proj = &gm * gn.adjoint();
                    s -= sdata.r[m][n][b].kronecker(&proj) * C64::new(scale, 0.0);
                }
            }
            s
        })
        .collect();
    SMatrix {
        blocks,
        bin_modes: (0..mesh.n_bins()).map(|b| mesh.bin_modes(b).to_vec()).collect(),
        dim_s: ns,
        delta_e: mesh.delta_e(),
        n_modes: reservoir.len(),
    }
}

impl SMatrix {
    /// Dense operator on system ⊗ reservoir with index `s·M + j`.
    pub fn to_dense(&self) -> CMat {
        let m = self.n_modes;
        let mut out = identity(self.dim_s * m);
        for (blk, idx) in self.blocks.iter().zip(&self.bin_modes) {
            let mb = idx.len();
            for s in 0..self.dim_s {
                for p in 0..mb {
                    for s2 in 0..self.dim_s {
                        for p2 in 0..mb {
                            out[(s * m + idx[p], s2 * m + idx[p2])] = blk[(s * mb + p, s2 * mb + p2)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Matrix element `⟨u ⊗ e_j| S |v ⊗ e_k⟩` for modes in a common bin (zero otherwise unless `j = k`).
    pub fn element(&self, u: usize, j: usize, v: usize, k: usize) -> C64 {
        for (blk, idx) in self.blocks.iter().zip(&self.bin_modes) {
            let pj = idx.iter().position(|&x| x == j);
            let pk = idx.iter().position(|&x| x == k);
            match (pj, pk) {
                (Some(a), Some(b)) => {
                    let mb = idx.len();
                    return blk[(u * mb + a, v * mb + b)];
                }
                (Some(_), None) | (None, Some(_)) => return C64::new(0.0, 0.0),
                _ => {}
            }
        }
        C64::new(0.0, 0.0)
    }
}

/// `T = −i Σ_b Σ_{m,n} R_{m,n}(E_b) ⊗ |g_m⟩⟨Π_b g_n|` with index `s·M + j`.
pub fn assemble_t_operator(sdata: &ScatteringData, reservoir: &ReservoirModel, mesh: &EnergyMesh) -> CMat {
    let ns = sdata.r[0][0].first().map(|m| m.nrows()).unwrap_or(0);
    let mm = reservoir.len();
    let g = [reservoir.formfactor(0), reservoir.formfactor(1)];
    let mut t = CMat::zeros(ns * mm, ns * mm);
    for jp in 0..mm {
        let b = mesh.mode_to_bin()[jp];
        for m in 0..2 {
            for n in 0..2 {
                let r = &sdata.r[m][n][b];
                let w = -I * g[n][jp].conj();
                for j in 0..mm {
                    let amp = w * g[m][j];
                    if amp == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for s in 0..ns {
                        for s2 in 0..ns {
                            t[(s * mm + j, s2 * mm + jp)] += r[(s, s2)] * amp;
                        }
                    }
                }
            }
        }
    }
    t
}

/// One-particle interaction `V₁ = i(D ⊗ |g₀⟩⟨g₁| − D† ⊗ |g₁⟩⟨g₀|)`.
pub fn interaction_v1(system: &SystemModel, reservoir: &ReservoirModel) -> CMat {
    let g0 = CMat::from_column_slice(reservoir.len(), 1, &reservoir.formfactor(0));
    let g1 = CMat::from_column_slice(reservoir.len(), 1, &reservoir.formfactor(1));
    let d = system.d_op();
    (d.kronecker(&(&g0 * g1.adjoint())) - d.adjoint().kronecker(&(&g1 * g0.adjoint()))) * I
}

/// Selected columns of `T(z) = (1 − V₁G₀(z))⁻¹V₁` with `G₀(z) = (z − H₀)⁻¹`, `z = E + iη`.
pub fn lippmann_schwinger_columns(
    system: &SystemModel,
    reservoir: &ReservoirModel,
    eta: f64,
    energy: f64,
    cols: &[usize],
) -> Result<CMat> {
    if !(eta > 0.0) {
        return Err(Error::Argument(format!("eta must be positive, got {eta}")));
    }
    let ns = system.dim();
    let mm = reservoir.len();
    let n = ns * mm;
    if n > 4096 {
        return Err(Error::Resource {
            what: "dense Lippmann-Schwinger solve".into(),
            required: n as u128,
            budget: 4096,
        });
    }
    let v = interaction_v1(system, reservoir);
    let z = C64::new(energy, eta);
    let hs = system.h_s();
    // G₀ is block-diagonal over reservoir modes: (z − H_S − ω_j)⁻¹ on the system factor.
    let mut g0 = CMat::zeros(n, n);
    for (j, md) in reservoir.modes().iter().enumerate() {
        let blk = (identity(ns) * (z - md.omega) - hs)
            .try_inverse()
            .ok_or_else(|| Error::Oracle(format!("free resolvent singular at mode {j}")))?;
        for s in 0..ns {
            for s2 in 0..ns {
                g0[(s * mm + j, s2 * mm + j)] = blk[(s, s2)];
            }
        }
    }
    let a = identity(n) - &v * &g0;
    let rhs = CMat::from_fn(n, cols.len(), |i, c| v[(i, cols[c])]);
    let lu = a.lu();
    lu.solve(&rhs)
        .ok_or_else(|| Error::Oracle(format!("singular system at E = {energy}")))
}

/// Full Lippmann-Schwinger T-matrix at `E + iη`.
pub fn lippmann_schwinger_oracle(system: &SystemModel, reservoir: &ReservoirModel, eta: f64, energy: f64) -> Result<CMat> {
    let n = system.dim() * reservoir.len();
    let cols: Vec<usize> = (0..n).collect();
    lippmann_schwinger_columns(system, reservoir, eta, energy, &cols)
}

/// On-shell agreement of the closed-form T-operator with the Lippmann-Schwinger solve.
#[derive(Debug, Clone, Serialize)]
pub struct OnShellComparison {
    pub bin: usize,
    pub system_energy: f64,
    pub relative_error: f64,
}

/// Compares on-shell blocks `⟨u ⊗ e_j|T|v ⊗ e_k⟩`, `j,k ∈ bin b`, `u,v` in one `H_S` eigenspace with
/// eigenvalue `ε`, against the reference solve at total energy `ε + E_b`.
pub fn compare_on_shell(
    system: &SystemModel,
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    t_closed: &CMat,
    bins: &[usize],
    eta: f64,
) -> Result<Vec<OnShellComparison>> {
    let ns = system.dim();
    let mm = reservoir.len();
    let eig = system.h_s().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..ns).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for &k in &order {
        let ev = eig.eigenvalues[k];
        match groups.last_mut() {
            Some((e0, g)) if (ev - *e0).abs() <= 1e-9 * scale => g.push(k),
            _ => groups.push((ev, vec![k])),
        }
    }
    let basis = &eig.eigenvectors;
    let mut out = Vec::new();
    for &b in bins {
        let idx = mesh.bin_modes(b);
        if idx.is_empty() {
            continue;
        }
        for (eps, grp) in &groups {
            // Rows/columns: (eigenvector u ⊗ e_j) expanded in the product basis.
            let nsub = grp.len() * idx.len();
            let mut w = CMat::zeros(ns * mm, nsub);
            for (a, &k) in grp.iter().enumerate() {
                for (p, &j) in idx.iter().enumerate() {
                    for s in 0..ns {
                        w[(s * mm + j, a * idx.len() + p)] = basis[(s, k)];
                    }
                }
            }
            let closed = w.adjoint() * t_closed * &w;
            let cols: Vec<usize> = (0..ns)
                .flat_map(|s| idx.iter().map(move |&j| s * mm + j))
                .collect();
            let t_cols = lippmann_schwinger_columns(system, reservoir, eta, eps + mesh.center(b), &cols)?;
            // Project the computed columns: T_ls · W restricted to the on-shell columns.
            let mut wsub = CMat::zeros(cols.len(), nsub);
            for (ci, &col) in cols.iter().enumerate() {
                for q in 0..nsub {
                    wsub[(ci, q)] = w[(col, q)];
                }
            }
            let ls = w.adjoint() * (t_cols * wsub);
            let denom = frobenius(&ls);
            let rel = if denom == 0.0 {
                frobenius(&closed)
            } else {
                frobenius(&(&closed - &ls)) / denom
            };
            out.push(OnShellComparison {
                bin: b,
                system_energy: *eps,
                relative_error: rel,
            });
        }
    }
    Ok(out)
}

/// Per-bin unitarity defects `‖S_b†S_b − 1‖_F`.
#[derive(Debug, Clone, Serialize)]
pub struct UnitarityReport {
    pub defects: Vec<f64>,
    pub max_defect: f64,
}

pub fn unitarity_report(s: &SMatrix) -> UnitarityReport {
    let defects: Vec<f64> = s
        .blocks
        .iter()
        .map(|blk| frobenius(&(blk.adjoint() * blk - identity(blk.nrows()))))
        .collect();
    let max_defect = defects.iter().cloned().fold(0.0, f64::max);
    UnitarityReport { defects, max_defect }
}

/// Defects at or below this level are treated as exact unitarity.
pub const DEFECT_FLOOR: f64 = 1e-12;

/// One level of a mesh-refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementLevel {
    pub delta_e: f64,
    pub n_bins: usize,
    pub max_defect: f64,
    pub t_agreement: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<RefinementLevel>,
    /// Slope of `log(max_defect)` against `log(ΔE)` over levels above the floor.
    pub fitted_order: Option<f64>,
    /// Every level is at most the previous one, or both sit at the roundoff floor.
    pub monotone: bool,
}

/// Refines the mesh of a fixed reservoir through `delta_es` and records S-matrix defects.
/// When `oracle_bins > 0` the on-shell T agreement on that many evenly spaced occupied
/// bins is recorded as well.
pub fn refinement_study(
    system: &SystemModel,
    reservoir: &ReservoirModel,
    delta_es: &[f64],
    method_for: impl Fn(f64) -> KernelMethod,
    oracle_bins: usize,
) -> Result<RefinementReport> {
    let mut levels = Vec::new();
    for &de in delta_es {
        let mesh = build_mesh(reservoir, de)?;
        let gamma = gamma_table(reservoir, &mesh, method_for(de))?;
        let sdata = build_scattering(system, &gamma, InversionOptions::default())?;
        let s = assemble_s_matrix(&sdata, reservoir, &mesh);
        let rep = unitarity_report(&s);
        let t_agreement = if oracle_bins > 0 {
            let t = assemble_t_operator(&sdata, reservoir, &mesh);
            let bins = sample_occupied_bins(&mesh, oracle_bins);
            let cmp = compare_on_shell(system, reservoir, &mesh, &t, &bins, de)?;
            Some(cmp.iter().map(|c| c.relative_error).fold(0.0, f64::max))
        } else {
            None
        };
        levels.push(RefinementLevel {
            delta_e: de,
            n_bins: mesh.n_bins(),
            max_defect: rep.max_defect,
            t_agreement,
        });
    }
    let monotone = levels
        .windows(2)
        .all(|w| w[1].max_defect <= w[0].max_defect || w[1].max_defect <= DEFECT_FLOOR);
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.max_defect > DEFECT_FLOOR)
        .map(|l| (l.delta_e, l.max_defect))
        .collect();
    let fitted_order = if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        Some(crate::fit::loglog_slope(&x, &y))
    } else {
        None
    };
    Ok(RefinementReport {
        levels,
        fitted_order,
        monotone,
    })
}

/// Up to `count` evenly spaced bins that contain at least one mode.
pub fn sample_occupied_bins(mesh: &EnergyMesh, count: usize) -> Vec<usize> {
    let occ: Vec<usize> = (0..mesh.n_bins()).filter(|&b| !mesh.bin_modes(b).is_empty()).collect();
    if occ.len() <= count {
        return occ;
    }
    (0..count)
        .map(|i| occ[(i * (occ.len() - 1)) / (count - 1).max(1)])
        .collect()
}

/// Frobenius norms of `R_{m,n}(E_b)` summed over bins, indexed `[m][n]`.
pub fn r_norms(sdata: &ScatteringData) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for m in 0..2 {
        for n in 0..2 {
            out[m][n] = sdata.r[m][n].iter().map(frobenius).sum();
        }
    }
    out
}

/// Hermiticity comparison `max_b ‖R₁₀(E_b) − R₀₁(E_b)†‖_F` (reported, not asserted).
pub fn r_hermiticity_gap(sdata: &ScatteringData) -> f64 {
    sdata.r[1][0]
        .iter()
        .zip(&sdata.r[0][1])
        .map(|(a, b)| frobenius(&(a - b.adjoint())))
        .fold(0.0, f64::max)
}

/// Flattened R entries for CSV output.
#[derive(Debug, Clone, Serialize)]
pub struct RRow {
    pub bin: usize,
    pub bin_center: f64,
    pub m: usize,
    pub n: usize,
    pub row: usize,
    pub col: usize,
    pub re: f64,
    pub im: f64,
}

pub fn r_rows(sdata: &ScatteringData, mesh: &EnergyMesh) -> Vec<RRow> {
    let mut out = Vec::new();
    for b in 0..sdata.n_bins() {
        for m in 0..2 {
            for n in 0..2 {
                let r = &sdata.r[m][n][b];
                for i in 0..r.nrows() {
                    for j in 0..r.ncols() {
                        out.push(RRow {
                            bin: b,
                            bin_center: mesh.center(b),
                            m,
                            n,
                            row: i,
                            col: j,
                            re: r[(i, j)].re,
                            im: r[(i, j)].im,
                        });
                    }
                }
            }
        }
    }
    out
}
