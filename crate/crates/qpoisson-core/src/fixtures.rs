//! Reference models shared by tests, benchmarks and the command-line runner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{c, CMat, C64};
use crate::model::{Mode, ReservoirModel, SystemModel};

/// Modes on a uniform grid over `[−half_width, half_width]` with `per_bin` modes per bin of
/// width `2·half_width/n_bins`; amplitudes carry the quadrature weight `√h`.
///
/// `|g₀|²` is a unit Gaussian, `g₁` a shifted, narrower, phase-modulated Gaussian and
/// `L(ω) = l_peak·e^{−ω²/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianReservoir {
    pub n_bins: usize,
    pub per_bin: usize,
    pub half_width: f64,
    pub l_peak: f64,
    pub xi: f64,
}

impl GaussianReservoir {
    pub fn new(n_bins: usize, per_bin: usize, half_width: f64) -> Self {
        Self {
            n_bins,
            per_bin,
            half_width,
            l_peak: 0.5,
            xi: 0.1,
        }
    }

    pub fn delta_e(&self) -> f64 {
        2.0 * self.half_width / self.n_bins as f64
    }

    pub fn build(&self) -> ReservoirModel {
        let de = self.delta_e();
        let h = de / self.per_bin as f64;
        let m = self.n_bins * self.per_bin;
        let modes = (0..m)
            .map(|j| {
                let w = -self.half_width + h * (j as f64 + 0.5);
                let g0 = h.sqrt() * (-w * w / 4.0).exp();
                let g1 = 0.8 * h.sqrt() * (-(w - 0.3) * (w - 0.3) / (4.0 * 0.81)).exp();
                Mode {
                    omega: w,
                    l_val: self.l_peak * (-w * w / 2.0).exp(),
                    g0: c(g0, 0.0),
                    g1: C64::from_polar(g1, 0.4 * w),
                }
            })
            .collect();
        ReservoirModel::new(modes, self.xi).expect("gaussian reservoir is valid")
    }
}

/// Two-level system with degenerate `H_S = ε·1` and a generic non-normal coupling of size `scale`.
pub fn two_level_system(scale: f64) -> SystemModel {
    let h = CMat::identity(2, 2) * c(0.2, 0.0);
    let d = CMat::from_row_slice(2, 2, &[c(0.6, 0.0), c(0.3, 0.2), c(0.0, -0.1), c(0.4, 0.0)]) * c(scale, 0.0);
    SystemModel::new(h, d).expect("two-level system is valid")
}

/// Qubit with non-degenerate `H_S = diag(0, δ)` and diagonal coupling.
pub fn dephasing_qubit(scale: f64) -> SystemModel {
    let h = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.0, 0.0), c(0.35, 0.0)]));
    let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.5, 0.2), c(-0.3, 0.4)])) * c(scale, 0.0);
    SystemModel::new(h, d).expect("dephasing qubit is valid")
}

/// Small random reservoir with modes on `[−2, 2]`, complex amplitudes and `L ∈ [0, l_max]`.
pub fn random_reservoir(m: usize, l_max: f64, xi: f64, seed: u64) -> ReservoirModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oms: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    oms.sort_by(|a, b| a.total_cmp(b));
    let modes = oms
        .into_iter()
        .map(|omega| Mode {
            omega,
            l_val: rng.random_range(0.0..l_max),
            g0: c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
            g1: c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        })
        .collect();
    ReservoirModel::new(modes, xi).expect("random reservoir is valid")
}

/// Random complex vector with entries in the unit square.
pub fn random_vector(m: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    (0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

/// Random hermitian matrix with entries in the unit square.
pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (&a + a.adjoint()) * c(0.5, 0.0)
}
