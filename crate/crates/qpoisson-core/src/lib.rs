//! Numerical low-density-limit pipeline on finite discretizations.
//!
//! A test particle with Hamiltonian `H_S` couples through `i(D ⊗ A⁺(g₀)A(g₁) − h.c.)` to a
//! quasifree reservoir of discrete modes. The crate provides spectral kernels, the
//! one-particle T-operator and S-matrix, exact finite-fugacity Wick correlators with their
//! causal limits, the drift `Γ` with `φ_L(U_t) = e^{−Γt}`, the reduced-dynamics generator and
//! a collision Monte Carlo for `dU_t = dN_t(S − 1)U_t`.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod fixtures;
pub mod kernels;
pub mod limit;
pub mod linalg;
pub mod model;
pub mod scattering;
pub mod wick;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use config::{load_model_str, LoadedModel, ModelDocument};
pub use dynamics::{
    assemble_generator, collision_monte_carlo, drift, evolve_semigroup, series_expectation, GeneratorData,
    TrajectoryConfig,
};
pub use error::{Error, Result};
pub use kernels::{gamma_pv, gamma_resolvent, gamma_table, GammaTable, KernelMethod};
pub use limit::{convergence_study, factorization_check, limit_correlator, LimitEngine};
pub use linalg::{CMat, C64};
pub use model::{
    build_mesh, formfactor_densities, free_phase, spectral_density, EnergyMesh, Mode, ReservoirModel, SpectralDensity,
    SystemModel, Weight,
};
pub use scattering::{
    assemble_s_matrix, assemble_t_operator, build_r, build_scattering, build_t0_t1, lippmann_schwinger_oracle,
    unitarity_report, InversionOptions, SMatrix, ScatteringData,
};
pub use wick::{
    diagram_scaling_report, enumerate_pairings, finite_xi_correlator, simplex_exp_integral, CorrelatorSpec,
    PairingDiagram, Slot,
};
