//! Causal kernels `γ_{g,f}(E)` and `γ̃_{g,f}(E)` by principal-value quadrature on the bin
//! grid and by resolvent regularization.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::{formfactor_densities, spectral_density, EnergyMesh, ReservoirModel, SpectralDensity, Weight};

/// How `γ` is evaluated on the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum KernelMethod {
    /// On-shell term `πσ` plus symmetric-omission principal value over bins.
    PvBins { log_subtraction: bool },
    /// `−i⟨g, (H₁ − E − iη)⁻¹ f⟩` summed over modes.
    ResolventEta { eta: f64 },
}

impl Default for KernelMethod {
    fn default() -> Self {
        KernelMethod::PvBins {
            log_subtraction: false,
        }
    }
}

/// `γ_{g_m,g_n}(E_b)` and `γ̃_{g_m,g_n}(E_b)` indexed `[m][n][b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    pub gamma: [[Vec<C64>; 2]; 2],
    pub gamma_tilde: [[Vec<C64>; 2]; 2],
    pub method: KernelMethod,
}

impl GammaTable {
    pub fn n_bins(&self) -> usize {
        self.gamma[0][0].len()
    }

    pub fn at(&self, m: usize, n: usize, b: usize) -> C64 {
        self.gamma[m][n][b]
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma
            .iter()
            .flatten()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise distance to another table on the same mesh.
    pub fn max_abs_diff(&self, other: &GammaTable) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..2 {
            for n in 0..2 {
                for (a, b) in self.gamma[m][n].iter().zip(&other.gamma[m][n]) {
                    worst = worst.max((a - b).norm());
                }
            }
        }
        worst
    }

    pub fn rows(&self, mesh: &EnergyMesh) -> Vec<GammaRow> {
        let mut out = Vec::with_capacity(4 * self.n_bins());
        for b in 0..self.n_bins() {
            for m in 0..2 {
                for n in 0..2 {
                    let g = self.gamma[m][n][b];
                    let gt = self.gamma_tilde[m][n][b];
                    out.push(GammaRow {
                        bin_center: mesh.center(b),
                        m,
                        n,
                        re_gamma: g.re,
                        im_gamma: g.im,
                        re_gamma_tilde: gt.re,
                        im_gamma_tilde: gt.im,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub bin_center: f64,
    pub m: usize,
    pub n: usize,
    pub re_gamma: f64,
    pub im_gamma: f64,
    pub re_gamma_tilde: f64,
    pub im_gamma_tilde: f64,
}

/// `γ(E_b) = πσ(E_b) − i Σ_{b'≠b} ΔE σ(E_{b'})/(E_{b'} − E_b)`.
///
/// With `log_subtraction` the tail sum uses `σ(E_{b'}) − σ(E_b)` plus the analytic
/// logarithm, except in the first and last bin.
pub fn pv_kernel(sigma: &[C64], mesh: &EnergyMesh, log_subtraction: bool) -> Vec<C64> {
    let nb = mesh.n_bins();
    let de = mesh.delta_e();
    let centers = mesh.centers();
    let (lo, hi) = (mesh.e_min(), mesh.e_max());
    (0..nb)
        .into_par_iter()
        .map(|b| {
            let eb = centers[b];
            let subtract = log_subtraction && b > 0 && b + 1 < nb;
            let s_b = if subtract { sigma[b] } else { C64::new(0.0, 0.0) };
            let mut tail = C64::new(0.0, 0.0);
            for (bp, s) in sigma.iter().enumerate() {
                if bp != b {
                    tail += (s - s_b) * (de / (centers[bp] - eb));
                }
            }
            if subtract {
                tail += s_b * ((hi - eb) / (eb - lo)).ln();
            }
            sigma[b] * PI - C64::new(0.0, 1.0) * tail
        })
        .collect()
}

/// `γ(E_b) = −i Σ_j conj(g_j) f_j / (ω_j − E_b − iη)`.
pub fn resolvent_kernel(
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    g: &[C64],
    f: &[C64],
    eta: f64,
) -> Result<Vec<C64>> {
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::Argument(format!("eta must be positive, got {eta}")));
    }
    reservoir.check_len(g)?;
    reservoir.check_len(f)?;
    let prod: Vec<(f64, C64)> = reservoir
        .modes()
        .iter()
        .zip(g.iter().zip(f))
        .map(|(m, (a, b))| (m.omega, a.conj() * b))
        .collect();
    Ok(mesh
        .centers()
        .par_iter()
        .map(|&eb| {
            let mut acc = C64::new(0.0, 0.0);
            for &(w, p) in &prod {
                acc += p / C64::new(w - eb, -eta);
            }
            -C64::new(0.0, 1.0) * acc
        })
        .collect())
}

/// Kernel for an arbitrary vector pair under the chosen method.
pub fn pair_kernel(
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    g: &[C64],
    f: &[C64],
    method: KernelMethod,
) -> Result<Vec<C64>> {
    match method {
        KernelMethod::PvBins { log_subtraction } => {
            let sd = spectral_density(reservoir, mesh, g, f, Weight::None)?;
            Ok(pv_kernel(&sd.values, mesh, log_subtraction))
        }
        KernelMethod::ResolventEta { eta } => resolvent_kernel(reservoir, mesh, g, f, eta),
    }
}

fn tilde(sd: &[[SpectralDensity; 2]; 2]) -> [[Vec<C64>; 2]; 2] {
    let t = |m: usize, n: usize| sd[m][n].values.iter().map(|v| v * (2.0 * PI)).collect();
    [[t(0, 0), t(0, 1)], [t(1, 0), t(1, 1)]]
}

/// Principal-value route from the four plain formfactor densities.
pub fn gamma_pv(sd: &[[SpectralDensity; 2]; 2], mesh: &EnergyMesh, log_subtraction: bool) -> GammaTable {
    let k = |m: usize, n: usize| pv_kernel(&sd[m][n].values, mesh, log_subtraction);
    GammaTable {
        gamma: [[k(0, 0), k(0, 1)], [k(1, 0), k(1, 1)]],
        gamma_tilde: tilde(sd),
        method: KernelMethod::PvBins { log_subtraction },
    }
}

/// Resolvent route evaluated directly on the modes.
pub fn gamma_resolvent(reservoir: &ReservoirModel, mesh: &EnergyMesh, eta: f64) -> Result<GammaTable> {
    let g = [reservoir.formfactor(0), reservoir.formfactor(1)];
    let k = |m: usize, n: usize| resolvent_kernel(reservoir, mesh, &g[m], &g[n], eta);
    let sd = formfactor_densities(reservoir, mesh, Weight::None)?;
    Ok(GammaTable {
        gamma: [[k(0, 0)?, k(0, 1)?], [k(1, 0)?, k(1, 1)?]],
        gamma_tilde: tilde(&sd),
        method: KernelMethod::ResolventEta { eta },
    })
}

pub fn gamma_table(reservoir: &ReservoirModel, mesh: &EnergyMesh, method: KernelMethod) -> Result<GammaTable> {
    match method {
        KernelMethod::PvBins { log_subtraction } => {
            let sd = formfactor_densities(reservoir, mesh, Weight::None)?;
            Ok(gamma_pv(&sd, mesh, log_subtraction))
        }
        KernelMethod::ResolventEta { eta } => gamma_resolvent(reservoir, mesh, eta),
    }
}
