//! Discretized physical model: test-particle system, reservoir modes, energy mesh and
//! the spectral densities every other module consumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, inner, CMat, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const RWA_TOL: f64 = 1e-12;

/// Test-particle data: Hamiltonian `H_S` and coupling operator `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    h_s: CMat,
    d_op: CMat,
}

impl SystemModel {
    /// Validates hermiticity of `H_S` and the rotating-wave condition `[H_S, D] = 0`.
    pub fn new(h_s: CMat, d_op: CMat) -> Result<Self> {
        let n = h_s.nrows();
        if n == 0 || h_s.ncols() != n || d_op.nrows() != n || d_op.ncols() != n {
            return Err(Error::Model(format!(
                "h_s is {}x{}, d is {}x{}; both must be square of equal positive size",
                h_s.nrows(),
                h_s.ncols(),
                d_op.nrows(),
                d_op.ncols()
            )));
        }
        if h_s.iter().chain(d_op.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Model("non-finite matrix entry".into()));
        }
        let nh = frobenius(&h_s);
        let herm = frobenius(&(&h_s - h_s.adjoint()));
        if herm > HERMITIAN_TOL * nh {
            return Err(Error::Model(format!("h_s not hermitian (defect {herm:e})")));
        }
        let comm = frobenius(&(&h_s * &d_op - &d_op * &h_s));
        if comm > RWA_TOL * nh * frobenius(&d_op) {
            return Err(Error::Model(format!(
                "rotating-wave condition violated: ‖[h_s, d]‖ = {comm:e}"
            )));
        }
        Ok(Self { h_s, d_op })
    }

    pub fn dim(&self) -> usize {
        self.h_s.nrows()
    }

    pub fn h_s(&self) -> &CMat {
        &self.h_s
    }

    pub fn d_op(&self) -> &CMat {
        &self.d_op
    }

    /// Same system with coupling `D` replaced by `scale·D`.
    pub fn scaled(&self, scale: f64) -> Self {
        Self {
            h_s: self.h_s.clone(),
            d_op: &self.d_op * C64::new(scale, 0.0),
        }
    }
}

/// One reservoir mode with quadrature weight folded into the amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub l_val: f64,
    pub g0: C64,
    pub g1: C64,
}

/// Discretized one-particle reservoir with diagonal density operator `L` and fugacity `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirModel {
    modes: Vec<Mode>,
    xi: f64,
}

impl ReservoirModel {
    pub fn new(modes: Vec<Mode>, xi: f64) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Model("reservoir needs at least one mode".into()));
        }
        for (j, m) in modes.iter().enumerate() {
            if !m.omega.is_finite() {
                return Err(Error::Model(format!("mode {j}: non-finite omega")));
            }
            if !(m.l_val >= 0.0) || !m.l_val.is_finite() {
                return Err(Error::Model(format!("mode {j}: l must be finite and >= 0")));
            }
            let amps = [m.g0.re, m.g0.im, m.g1.re, m.g1.im];
            if amps.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model(format!("mode {j}: non-finite amplitude")));
            }
        }
        let out = Self { modes, xi: 1.0 };
        out.with_xi(xi)
    }

    /// Same modes at a different fugacity.
    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::Model(format!("xi must be positive, got {xi}")));
        }
        if xi * self.max_l() >= 1.0 {
            return Err(Error::Model(format!(
                "xi·max(l) = {} must be below 1",
                xi * self.max_l()
            )));
        }
        Ok(Self {
            modes: self.modes.clone(),
            xi,
        })
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn max_l(&self) -> f64 {
        self.modes.iter().map(|m| m.l_val).fold(0.0, f64::max)
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    pub fn l_vals(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.l_val).collect()
    }

    /// Formfactor `g_0` (`m = 0`) or `g_1` (`m = 1`) as a mode vector.
    pub fn formfactor(&self, m: usize) -> Vec<C64> {
        self.modes
            .iter()
            .map(|md| if m == 0 { md.g0 } else { md.g1 })
            .collect()
    }

    /// `⟨g, w(L) f⟩` evaluated mode by mode.
    pub fn weighted_inner(&self, g: &[C64], f: &[C64], weight: Weight) -> Result<C64> {
        self.check_len(g)?;
        self.check_len(f)?;
        Ok(self
            .modes
            .iter()
            .zip(g.iter().zip(f))
            .map(|(m, (a, b))| a.conj() * b * weight.eval(m.l_val, self.xi))
            .sum())
    }

    pub(crate) fn check_len(&self, v: &[C64]) -> Result<()> {
        if v.len() != self.modes.len() {
            return Err(Error::Argument(format!(
                "vector has length {}, reservoir has {} modes",
                v.len(),
                self.modes.len()
            )));
        }
        Ok(())
    }
}

/// Function of `L` inserted between the two vectors of a spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `1`
    None,
    /// `L`
    L,
    /// `L/(1−ξL)`
    LOverOneMinusXiL,
    /// `1/(1−ξL)`
    InvOneMinusXiL,
}

impl Weight {
    pub fn eval(self, l: f64, xi: f64) -> f64 {
        match self {
            Weight::None => 1.0,
            Weight::L => l,
            Weight::LOverOneMinusXiL => l / (1.0 - xi * l),
            Weight::InvOneMinusXiL => 1.0 / (1.0 - xi * l),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Weight::None => "none",
            Weight::L => "l",
            Weight::LOverOneMinusXiL => "l_over_one_minus_xi_l",
            Weight::InvOneMinusXiL => "inv_one_minus_xi_l",
        }
    }
}

/// Uniform energy bins `[E_b − ΔE/2, E_b + ΔE/2)` covering all mode energies.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMesh {
    e_min: f64,
    delta_e: f64,
    centers: Vec<f64>,
    mode_to_bin: Vec<usize>,
    bin_modes: Vec<Vec<usize>>,
}

impl EnergyMesh {
    pub fn e_min(&self) -> f64 {
        self.e_min
    }

    pub fn e_max(&self) -> f64 {
        self.e_min + self.delta_e * self.centers.len() as f64
    }

    pub fn delta_e(&self) -> f64 {
        self.delta_e
    }

    pub fn n_bins(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, b: usize) -> f64 {
        self.centers[b]
    }

    pub fn mode_to_bin(&self) -> &[usize] {
        &self.mode_to_bin
    }

    /// Mode indices falling in bin `b`, ascending.
    pub fn bin_modes(&self, b: usize) -> &[usize] {
        &self.bin_modes[b]
    }
}

/// Builds a mesh of width `delta_e` whose bins are centred on the midpoint of the mode range.
///
/// The number of bins is the smallest count whose span covers every mode energy, so
/// lattice-spaced modes with spacing `delta_e` land on bin centres.
pub fn build_mesh(reservoir: &ReservoirModel, delta_e: f64) -> Result<EnergyMesh> {
    if !(delta_e > 0.0) || !delta_e.is_finite() {
        return Err(Error::Argument(format!("delta_e must be positive, got {delta_e}")));
    }
    let om = reservoir.omegas();
    if om.iter().any(|w| !w.is_finite()) {
        return Err(Error::Model("non-finite omega".into()));
    }
    let lo = om.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = om.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / delta_e;
    if spread > 1e7 {
        return Err(Error::Argument(format!(
            "delta_e {delta_e} yields more than 1e7 bins"
        )));
    }
    let n_bins = (spread + 1e-9).floor() as usize + 1;
    let e_min = 0.5 * (lo + hi) - 0.5 * n_bins as f64 * delta_e;
    let centers: Vec<f64> = (0..n_bins)
        .map(|b| e_min + (b as f64 + 0.5) * delta_e)
        .collect();
    let mut bin_modes = vec![Vec::new(); n_bins];
    let mode_to_bin: Vec<usize> = om
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let b = (((w - e_min) / delta_e).floor().max(0.0) as usize).min(n_bins - 1);
            bin_modes[b].push(j);
            b
        })
        .collect();
    Ok(EnergyMesh {
        e_min,
        delta_e,
        centers,
        mode_to_bin,
        bin_modes,
    })
}

/// Bin-resolved matrix element `σ(E_b) = ⟨g, P_{E_b} w(L) f⟩` with `P_{E_b} = Π_b/ΔE`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensity {
    pub values: Vec<C64>,
    pub labels: (String, String),
    pub weight: Weight,
}

impl SpectralDensity {
    /// `Σ_b ΔE σ(E_b)`.
    pub fn total(&self, mesh: &EnergyMesh) -> C64 {
        self.values.iter().sum::<C64>() * mesh.delta_e()
    }
}

pub fn spectral_density(
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    g: &[C64],
    f: &[C64],
    weight: Weight,
) -> Result<SpectralDensity> {
    labelled_spectral_density(reservoir, mesh, g, f, weight, ("g", "f"))
}

pub fn labelled_spectral_density(
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    g: &[C64],
    f: &[C64],
    weight: Weight,
    labels: (&str, &str),
) -> Result<SpectralDensity> {
    reservoir.check_len(g)?;
    reservoir.check_len(f)?;
    if mesh.mode_to_bin().len() != reservoir.len() {
        return Err(Error::Argument("mesh was built for a different reservoir".into()));
    }
    let xi = reservoir.xi();
    let mut values = vec![C64::new(0.0, 0.0); mesh.n_bins()];
    for (j, m) in reservoir.modes().iter().enumerate() {
        values[mesh.mode_to_bin()[j]] += g[j].conj() * weight.eval(m.l_val, xi) * f[j];
    }
    let inv = 1.0 / mesh.delta_e();
    for v in &mut values {
        *v *= inv;
    }
    Ok(SpectralDensity {
        values,
        labels: (labels.0.to_string(), labels.1.to_string()),
        weight,
    })
}

/// Densities `σ_{g_m, g_n}` for all four formfactor pairs, indexed `[m][n]`.
pub fn formfactor_densities(
    reservoir: &ReservoirModel,
    mesh: &EnergyMesh,
    weight: Weight,
) -> Result<[[SpectralDensity; 2]; 2]> {
    let g = [reservoir.formfactor(0), reservoir.formfactor(1)];
    let mk = |m: usize, n: usize| {
        labelled_spectral_density(
            reservoir,
            mesh,
            &g[m],
            &g[n],
            weight,
            (["g0", "g1"][m], ["g0", "g1"][n]),
        )
    };
    Ok([[mk(0, 0)?, mk(0, 1)?], [mk(1, 0)?, mk(1, 1)?]])
}

/// Free one-particle evolution `(S_t f)_j = e^{iω_j t} f_j`.
pub fn free_phase(reservoir: &ReservoirModel, f: &[C64], t: f64) -> Result<Vec<C64>> {
    reservoir.check_len(f)?;
    Ok(reservoir
        .modes()
        .iter()
        .zip(f)
        .map(|(m, a)| a * C64::from_polar(1.0, m.omega * t))
        .collect())
}

/// `⟨g, f⟩` with a length check against the reservoir.
pub fn overlap(reservoir: &ReservoirModel, g: &[C64], f: &[C64]) -> Result<C64> {
    reservoir.check_len(g)?;
    reservoir.check_len(f)?;
    Ok(inner(g, f))
}
