//! Drift `Γ`, the order-by-order series for `φ_L(U_t)`, the reduced-dynamics generator and
//! its semigroup, and a collision-model Monte Carlo for the quantum Poisson QSDE.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::{block_constants, limit_correlator, LimitEngine};
use crate::linalg::{choi_matrix, expm, frobenius, hermitian_eigenvalues, identity, kron, spectral_norm, superoperator, apply_super, CMat, C64};
use crate::model::{EnergyMesh, ReservoirModel, SpectralDensity, SystemModel};
use crate::scattering::{SMatrix, ScatteringData};
use crate::wick::Slot;

/// `Γ = Σ_b ΔE Σ_{m,n} R_{m,n}(E_b) σ^L_{g_n,g_m}(E_b)`; `sdl[m][n]` holds `σ^L_{g_m,g_n}`.
pub fn drift(sdata: &ScatteringData, sdl: &[[SpectralDensity; 2]; 2], mesh: &EnergyMesh) -> CMat {
    let ns = sdata.r[0][0].first().map(|m| m.nrows()).unwrap_or(0);
    let mut gamma = CMat::zeros(ns, ns);
    for b in 0..sdata.n_bins() {
        for m in 0..2 {
            for n in 0..2 {
                gamma += &sdata.r[m][n][b] * (sdl[n][m].values[b] * mesh.delta_e());
            }
        }
    }
    gamma
}

/// `e^{−Γt}` on a time grid.
pub fn drift_propagator(gamma: &CMat, times: &[f64]) -> Vec<CMat> {
    times.iter().map(|&t| expm(&(gamma * C64::new(-t, 0.0)))).collect()
}

/// Series letter `w`: `0 ↦ (+D, f = g₀, g = g₁)`, `1 ↦ (−D†, f = g₁, g = g₀)`.
pub fn letter(system: &SystemModel, reservoir: &ReservoirModel, w: usize) -> (CMat, Slot) {
    let g0 = reservoir.formfactor(0);
    let g1 = reservoir.formfactor(1);
    if w == 0 {
        (system.d_op().clone(), Slot { f: g0, g: g1 })
    } else {
        (-system.d_op().adjoint(), Slot { f: g1, g: g0 })
    }
}

fn words(n: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..1usize << n).map(move |bits| (0..n).map(|l| (bits >> (n - 1 - l)) & 1).collect())
}

pub const SERIES_ORDER_CAP: usize = 4;

/// Order-resolved terms and partial sums of `φ_L(U_t)`.
#[derive(Debug, Clone)]
pub struct SeriesResult {
    pub order_terms: Vec<CMat>,
    pub partial_sums: Vec<CMat>,
}

/// `Σ_{n ≤ max_order} Σ_w D_{w₁}…D_{w_n} · φ_L(N_{w₁}…N_{w_n})` smeared over the simplex.
pub fn series_expectation(system: &SystemModel, engine: &LimitEngine, t: f64, max_order: usize) -> Result<SeriesResult> {
    if max_order > SERIES_ORDER_CAP {
        return Err(Error::Resource {
            what: "series order".into(),
            required: max_order as u128,
            budget: SERIES_ORDER_CAP as u128,
        });
    }
    let ns = system.dim();
    let mut order_terms = vec![identity(ns)];
    for n in 1..=max_order {
        let mut term = CMat::zeros(ns, ns);
        for w in words(n) {
            let mut mat = identity(ns);
            let mut slots = Vec::with_capacity(n);
            for &l in &w {
                let (x, s) = letter(system, engine.reservoir, l);
                mat *= x;
                slots.push(s);
            }
            term += mat * limit_correlator(engine, &slots, t)?.value;
        }
        order_terms.push(term);
    }
    let mut partial_sums = Vec::with_capacity(order_terms.len());
    let mut acc = CMat::zeros(ns, ns);
    for term in &order_terms {
        acc += term;
        partial_sums.push(acc.clone());
    }
    Ok(SeriesResult {
        order_terms,
        partial_sums,
    })
}

/// Order-`n` contribution to `Γ` from single-block (connected) words:
/// `Γ⁽ⁿ⁾ = −Σ_{|w| = n} D_{w₁}…D_{w_n} C(1..n)`.
pub fn drift_series_term(system: &SystemModel, engine: &LimitEngine, n: usize) -> Result<CMat> {
    let ns = system.dim();
    let mut term = CMat::zeros(ns, ns);
    for w in words(n) {
        let mut mat = identity(ns);
        let mut slots = Vec::with_capacity(n);
        for &l in &w {
            let (x, s) = letter(system, engine.reservoir, l);
            mat *= x;
            slots.push(s);
        }
        let c = block_constants(engine, &slots)?;
        term -= mat * c[0][n - 1].value;
    }
    Ok(term)
}

/// Derivative at `t = 0` of the series for `T_t(X) = φ_L(U_t†(X ⊗ 1)U_t)` through `order ≤ 2`
/// in `D`, as a superoperator: `X ↦ −Γ_s†X − XΓ_s + Q(X)` with `Γ_s` the truncated drift
/// series and `Q(X) = 2π Σ_b ΔE Σ_{a,c} X_a† X X_c σ_{f_a,f_c} σ^L_{g_c,g_a}` from the two-sided
/// contraction of one letter in `U†` with one letter in `U`.
pub fn series_generator(system: &SystemModel, engine: &LimitEngine, order: usize) -> Result<CMat> {
    if !(1..=2).contains(&order) {
        return Err(Error::Argument(format!("series generator order must be 1 or 2, got {order}")));
    }
    let ns = system.dim();
    let mut gs = CMat::zeros(ns, ns);
    for n in 1..=order {
        gs += drift_series_term(system, engine, n)?;
    }
    let one = identity(ns);
    let mut sup = -kron(&one, &gs.adjoint()) - kron(&gs.transpose(), &one);
    if order >= 2 {
        let de = engine.mesh.delta_e();
        for a in 0..2 {
            for cc in 0..2 {
                let (xa, sa) = letter(system, engine.reservoir, a);
                let (xc, sc) = letter(system, engine.reservoir, cc);
                let s = engine.sigma(&sa.f, &sc.f)?;
                let sl = engine.sigma_l(&sc.g, &sa.g)?;
                let weight: C64 = s.iter().zip(&sl).map(|(x, y)| x * y).sum::<C64>() * (2.0 * PI * de);
                sup += kron(&xc.transpose(), &xa.adjoint()) * weight;
            }
        }
    }
    Ok(sup)
}

/// Heisenberg generator, its Schrödinger pre-dual and the Choi matrix of `e^{G*}`.
#[derive(Debug, Clone)]
pub struct GeneratorData {
    pub dim: usize,
    pub gamma_drift: CMat,
    /// `vec(G(X)) = g_super · vec(X)` (column stacking).
    pub g_super: CMat,
    /// Pre-dual `G*` with `tr(G*(ρ)† X) = tr(ρ† G(X))`.
    pub pre_dual: CMat,
    /// Choi matrix of `e^{G*}` at unit time.
    pub choi: CMat,
}

/// `G(X) = −Γ†X − XΓ + 2π Σ_b ΔE Σ R†_{m,n} X R_{m',n'} σ_{g_m,g_{m'}} σ^L_{g_{n'},g_n}`.
pub fn assemble_generator(
    sdata: &ScatteringData,
    sd: &[[SpectralDensity; 2]; 2],
    sdl: &[[SpectralDensity; 2]; 2],
    mesh: &EnergyMesh,
) -> GeneratorData {
    let gamma = drift(sdata, sdl, mesh);
    let ns = gamma.nrows();
    let one = identity(ns);
    let mut g_super = -kron(&one, &gamma.adjoint()) - kron(&gamma.transpose(), &one);
    let de = mesh.delta_e();
    for b in 0..sdata.n_bins() {
        for m in 0..2 {
            for n in 0..2 {
                let rh = sdata.r[m][n][b].adjoint();
                for mp in 0..2 {
                    for np in 0..2 {
                        let w = sd[m][mp].values[b] * sdl[np][n].values[b] * (2.0 * PI * de);
                        if w == C64::new(0.0, 0.0) {
                            continue;
                        }
                        g_super += kron(&sdata.r[mp][np][b].transpose(), &rh) * w;
                    }
                }
            }
        }
    }
    let pre_dual = g_super.adjoint();
    let choi = choi_matrix(&expm(&pre_dual), ns);
    GeneratorData {
        dim: ns,
        gamma_drift: gamma,
        g_super,
        pre_dual,
        choi,
    }
}

impl GeneratorData {
    pub fn apply(&self, x: &CMat) -> CMat {
        apply_super(&self.g_super, x)
    }

    pub fn apply_dual(&self, rho: &CMat) -> CMat {
        apply_super(&self.pre_dual, rho)
    }

    /// `‖G(1)‖_F`.
    pub fn unit_residual(&self) -> f64 {
        frobenius(&self.apply(&identity(self.dim)))
    }

    /// `e^{tG*}` as a superoperator.
    pub fn step_map(&self, t: f64) -> CMat {
        expm(&(&self.pre_dual * C64::new(t, 0.0)))
    }

    pub fn choi_at(&self, t: f64) -> CMat {
        choi_matrix(&self.step_map(t), self.dim)
    }

    pub fn min_choi_eigenvalue(&self, t: f64) -> f64 {
        hermitian_eigenvalues(&self.choi_at(t))[0]
    }

    pub fn drift_norm(&self) -> f64 {
        spectral_norm(&self.gamma_drift)
    }
}

/// Density-matrix trajectory under `e^{tG*}` with monitored invariants.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub times: Vec<f64>,
    pub states: Vec<CMat>,
    pub trace_errors: Vec<f64>,
    pub hermiticity_errors: Vec<f64>,
    pub min_eigenvalues: Vec<f64>,
}

pub fn check_density(rho: &CMat, dim: usize) -> Result<()> {
    if rho.nrows() != dim || rho.ncols() != dim {
        return Err(Error::Argument(format!("density matrix must be {dim}x{dim}")));
    }
    let scale = frobenius(rho).max(1.0);
    if frobenius(&(rho - rho.adjoint())) > 1e-10 * scale {
        return Err(Error::Argument("density matrix is not hermitian".into()));
    }
    if (rho.trace() - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::Argument("density matrix trace differs from 1".into()));
    }
    if hermitian_eigenvalues(rho)[0] < -1e-10 {
        return Err(Error::Argument("density matrix is not positive semidefinite".into()));
    }
    Ok(())
}

pub fn evolve_semigroup(gen: &GeneratorData, rho0: &CMat, times: &[f64]) -> Result<Evolution> {
    check_density(rho0, gen.dim)?;
    let mut out = Evolution {
        times: times.to_vec(),
        states: Vec::new(),
        trace_errors: Vec::new(),
        hermiticity_errors: Vec::new(),
        min_eigenvalues: Vec::new(),
    };
    for &t in times {
        let rho = apply_super(&gen.step_map(t), rho0);
        out.trace_errors.push((rho.trace() - C64::new(1.0, 0.0)).norm());
        out.hermiticity_errors.push(frobenius(&(&rho - rho.adjoint())));
        out.min_eigenvalues.push(hermitian_eigenvalues(&rho)[0]);
        out.states.push(rho);
    }
    Ok(out)
}

/// Monte Carlo settings for the collision unravelling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Multiplier on the closed-form collision rates; calibrated when `None`.
    pub rate_scale: Option<f64>,
    /// Largest accepted relative mismatch between the collision generator and `G*`.
    pub calibration_threshold: f64,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, horizon: f64, n_traj: usize, seed: u64) -> Self {
        Self {
            dt,
            horizon,
            n_traj,
            seed,
            rate_scale: None,
            calibration_threshold: 1e-8,
        }
    }
}

/// Per-mode collision channels: a particle in mode `j` scatters with rate `λ_j` through the
/// Kraus operators `K_k = ⟨e_k|S_b|e_j⟩`, `k` ranging over the modes of bin `b`.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    pub rates: Vec<f64>,
    pub kraus: Vec<Vec<CMat>>,
    pub rate_scale: f64,
    pub calibration_residual: f64,
}

impl CollisionModel {
    pub fn total_rate(&self) -> f64 {
        self.rate_scale * self.rates.iter().sum::<f64>()
    }

    pub fn apply_channel(&self, j: usize, rho: &CMat) -> CMat {
        let mut out = CMat::zeros(rho.nrows(), rho.ncols());
        for k in &self.kraus[j] {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// Schrödinger generator `ρ ↦ s Σ_j λ_j (Σ_k K_k ρ K_k† − ρ)` as a superoperator.
    pub fn generator(&self, dim: usize) -> CMat {
        superoperator(dim, |rho| {
            let mut out = CMat::zeros(dim, dim);
            for (j, &lam) in self.rates.iter().enumerate() {
                if lam > 0.0 {
                    out += (self.apply_channel(j, rho) - rho) * C64::new(lam * self.rate_scale, 0.0);
                }
            }
            out
        })
    }
}

/// Builds per-mode channels with rates `λ_j = ΔE·L_j/(2π)` and fixes `rate_scale` by a
/// least-squares match of the collision generator to `G*`.
pub fn collision_model(
    s: &SMatrix,
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    gen: &GeneratorData,
    rate_scale: Option<f64>,
    threshold: f64,
) -> Result<CollisionModel> {
    let ns = s.dim_s;
    let mut rates = vec![0.0; reservoir.len()];
    let mut kraus = vec![Vec::new(); reservoir.len()];
    for (b, blk) in s.blocks.iter().enumerate() {
        let idx = mesh.bin_modes(b);
        let mb = idx.len();
        for (p, &j) in idx.iter().enumerate() {
            let l = reservoir.modes()[j].l_val;
            if l <= 0.0 {
                continue;
            }
            rates[j] = mesh.delta_e() * l / (2.0 * PI);
            kraus[j] = (0..mb)
                .map(|q| CMat::from_fn(ns, ns, |u, v| blk[(u * mb + q, v * mb + p)]))
                .collect();
        }
    }
    let mut model = CollisionModel {
        rates,
        kraus,
        rate_scale: 1.0,
        calibration_residual: 0.0,
    };
    let a = model.generator(ns);
    let target = &gen.pre_dual;
    let aa: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let scale = match rate_scale {
        Some(v) => v,
        None if aa > 0.0 => a.iter().zip(target.iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>() / aa,
        None => 1.0,
    };
    let tn = frobenius(target);
    let mismatch = frobenius(&(&a * C64::new(scale, 0.0) - target));
    let residual = if tn > 0.0 { mismatch / tn } else { mismatch };
    if !(residual <= threshold) {
        return Err(Error::Calibration { residual, threshold });
    }
    model.rate_scale = scale;
    model.calibration_residual = residual;
    Ok(model)
}

/// Averaged collision trajectories with componentwise standard errors.
#[derive(Debug, Clone)]
pub struct McResult {
    pub times: Vec<f64>,
    pub mean: Vec<CMat>,
    /// Standard error of the real part in `re` and of the imaginary part in `im`.
    pub std_err: Vec<CMat>,
    pub max_step_trace_error: f64,
    pub rate_scale: f64,
    pub calibration_residual: f64,
    pub mean_collisions: f64,
    pub warnings: Vec<String>,
}

/// SplitMix64 finalizer used to expand `master ⊕ i` into per-trajectory seeds.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_seed(master: u64, i: u64) -> u64 {
    splitmix64(master ^ i)
}

/// Collision-model unravelling of `dU_t = dN_t(S − 1)U_t`: in each step the number of
/// collisions is Poisson with mean `Λ dt`; each collision samples a mode `j ∝ L_j` and applies
/// its channel to the system state.
pub fn collision_monte_carlo(
    s: &SMatrix,
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    gen: &GeneratorData,
    cfg: &TrajectoryConfig,
    rho0: &CMat,
) -> Result<McResult> {
    check_density(rho0, gen.dim)?;
    if !(cfg.dt > 0.0) || !(cfg.horizon >= 0.0) || cfg.n_traj == 0 {
        return Err(Error::Argument("dt > 0, horizon >= 0 and n_traj >= 1 required".into()));
    }
    let model = collision_model(s, reservoir, mesh, gen, cfg.rate_scale, cfg.calibration_threshold)?;
    let n_steps = ((cfg.horizon / cfg.dt).round() as usize).max(1);
    let dt = cfg.horizon / n_steps as f64;
    let mut warnings = Vec::new();
    if dt * gen.drift_norm() > 0.1 {
        warnings.push(format!("dt·‖Γ‖ = {:.3} exceeds 0.1", dt * gen.drift_norm()));
    }
    let lam = model.total_rate();
    let poisson = if lam * dt > 0.0 {
        Some(Poisson::new(lam * dt).map_err(|e| Error::Numerical(e.to_string()))?)
    } else {
        None
    };
    let chooser = if lam > 0.0 {
        Some(WeightedIndex::new(&model.rates).map_err(|e| Error::Numerical(e.to_string()))?)
    } else {
        None
    };
    let runs: Vec<(Vec<CMat>, f64, u64)> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(cfg.seed, i));
            let mut rho = rho0.clone();
            let mut path = Vec::with_capacity(n_steps + 1);
            path.push(rho.clone());
            let mut worst = 0.0f64;
            let mut count = 0u64;
            for _ in 0..n_steps {
                let hits = match &poisson {
                    Some(p) => p.sample(&mut rng) as u64,
                    None => 0,
                };
                for _ in 0..hits {
                    let j = chooser.as_ref().expect("positive rate").sample(&mut rng);
                    let before = rho.trace();
                    rho = model.apply_channel(j, &rho);
                    worst = worst.max((rho.trace() - before).norm());
                }
                count += hits;
                path.push(rho.clone());
            }
            (path, worst, count)
        })
        .collect();
    let ns = gen.dim;
    let n = cfg.n_traj as f64;
    let mut mean = vec![CMat::zeros(ns, ns); n_steps + 1];
    let mut sq_re = vec![nalgebra::DMatrix::<f64>::zeros(ns, ns); n_steps + 1];
    let mut sq_im = vec![nalgebra::DMatrix::<f64>::zeros(ns, ns); n_steps + 1];
    let mut max_step_trace_error = 0.0f64;
    let mut total_hits = 0u64;
    for (path, worst, count) in &runs {
        max_step_trace_error = max_step_trace_error.max(*worst);
        total_hits += count;
        for (k, rho) in path.iter().enumerate() {
            mean[k] += rho;
            for (idx, z) in rho.iter().enumerate() {
                sq_re[k][idx] += z.re * z.re;
                sq_im[k][idx] += z.im * z.im;
            }
        }
    }
    let mut std_err = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        mean[k] /= C64::new(n, 0.0);
        let mut se = CMat::zeros(ns, ns);
        for (idx, z) in mean[k].iter().enumerate() {
            let denom = (n - 1.0).max(1.0);
            let var_re = ((sq_re[k][idx] - n * z.re * z.re) / denom).max(0.0);
            let var_im = ((sq_im[k][idx] - n * z.im * z.im) / denom).max(0.0);
            se[idx] = C64::new((var_re / n).sqrt(), (var_im / n).sqrt());
        }
        std_err.push(se);
    }
    Ok(McResult {
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        mean,
        std_err,
        max_step_trace_error,
        rate_scale: model.rate_scale,
        calibration_residual: model.calibration_residual,
        mean_collisions: total_hits as f64 / n,
        warnings,
    })
}
