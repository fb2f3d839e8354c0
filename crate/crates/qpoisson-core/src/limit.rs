//! Causal-state (ξ → 0) correlators of number operators by block composition, convergence
//! studies against finite-ξ values, and the outer-pair factorization property.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{pair_kernel, KernelMethod};
use crate::linalg::C64;
use crate::model::{spectral_density, EnergyMesh, ReservoirModel, Weight};
use crate::wick::{enumerate_pairings, finite_xi_correlator, CorrelatorSpec, Slot, DEFAULT_ORDER_CAP};

/// Kernel source for limit correlators: densities and `γ` for arbitrary vector pairs.
#[derive(Debug, Clone, Copy)]
pub struct LimitEngine<'a> {
    pub reservoir: &'a ReservoirModel,
    pub mesh: &'a EnergyMesh,
    pub method: KernelMethod,
}

impl<'a> LimitEngine<'a> {
    pub fn new(reservoir: &'a ReservoirModel, mesh: &'a EnergyMesh, method: KernelMethod) -> Self {
        Self {
            reservoir,
            mesh,
            method,
        }
    }

    /// `σ^L_{g,f}(E_b)`.
    pub fn sigma_l(&self, g: &[C64], f: &[C64]) -> Result<Vec<C64>> {
        Ok(spectral_density(self.reservoir, self.mesh, g, f, Weight::L)?.values)
    }

    /// `σ_{g,f}(E_b)`.
    pub fn sigma(&self, g: &[C64], f: &[C64]) -> Result<Vec<C64>> {
        Ok(spectral_density(self.reservoir, self.mesh, g, f, Weight::None)?.values)
    }

    /// `γ_{g,f}(E_b)`.
    pub fn gamma(&self, g: &[C64], f: &[C64]) -> Result<Vec<C64>> {
        pair_kernel(self.reservoir, self.mesh, g, f, self.method)
    }
}

/// Connected value of the consecutive slots `start..=end` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockConstant {
    pub start: usize,
    pub end: usize,
    pub value: C64,
}

/// `C(i..j) = Σ_b ΔE σ^L_{g_j,f_i}(E_b) Π_{l=i}^{j−1} γ_{g_l,f_{l+1}}(E_b)` for all `i ≤ j`,
/// indexed `[i−1][j−i]`.
pub fn block_constants(engine: &LimitEngine, slots: &[Slot]) -> Result<Vec<Vec<BlockConstant>>> {
    let n = slots.len();
    let de = engine.mesh.delta_e();
    let links: Vec<Vec<C64>> = (0..n.saturating_sub(1))
        .map(|l| engine.gamma(&slots[l].g, &slots[l + 1].f))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n - i);
        let mut chain = vec![C64::new(1.0, 0.0); engine.mesh.n_bins()];
        for j in i..n {
            if j > i {
                for (c, g) in chain.iter_mut().zip(&links[j - 1]) {
                    *c *= g;
                }
            }
            let sl = engine.sigma_l(&slots[j].g, &slots[i].f)?;
            let value = sl.iter().zip(&chain).map(|(s, c)| s * c).sum::<C64>() * de;
            row.push(BlockConstant {
                start: i + 1,
                end: j + 1,
                value,
            });
        }
        out.push(row);
    }
    Ok(out)
}

/// Limit correlator with the number of composition terms summed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitValue {
    pub value: C64,
    pub n_terms: usize,
}

/// Sum over compositions `(n₁,…,n_B)` of `(t^B/B!) Π C(block)`.
pub fn limit_correlator(engine: &LimitEngine, slots: &[Slot], t: f64) -> Result<LimitValue> {
    if slots.is_empty() {
        return Err(Error::Argument("correlator needs at least one slot".into()));
    }
    let n = slots.len();
    if n > 30 {
        return Err(Error::Resource {
            what: "composition count".into(),
            required: 1u128 << (n - 1),
            budget: 1u128 << 29,
        });
    }
    let c = block_constants(engine, slots)?;
    let mut value = C64::new(0.0, 0.0);
    let mut n_terms = 0usize;
    for mask in 0u64..(1u64 << (n - 1)) {
        let mut start = 0;
        let mut prod = C64::new(1.0, 0.0);
        let mut nb = 0;
        for l in 0..n {
            let cut = l == n - 1 || mask & (1 << l) != 0;
            if cut {
                prod *= c[start][l - start].value;
                nb += 1;
                start = l + 1;
            }
        }
        value += prod * time_factor(t, nb);
        n_terms += 1;
    }
    Ok(LimitValue { value, n_terms })
}

/// `t^B / B!`.
pub fn time_factor(t: f64, blocks: usize) -> f64 {
    (1..=blocks).fold(1.0, |acc, k| acc * t / k as f64)
}

/// `|finite-ξ − limit|` across fugacities.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub order: usize,
    pub xis: Vec<f64>,
    pub errors: Vec<f64>,
    pub fitted_order: f64,
    pub limit: (f64, f64),
    pub finite: Vec<(f64, f64)>,
}

pub fn convergence_study(
    engine: &LimitEngine,
    slots: &[Slot],
    t: f64,
    xis: &[f64],
    budget: u128,
) -> Result<ConvergenceReport> {
    if xis.len() < 2 {
        return Err(Error::Argument("need at least two fugacities".into()));
    }
    let limit = limit_correlator(engine, slots, t)?.value;
    let diagrams = enumerate_pairings(slots.len(), DEFAULT_ORDER_CAP)?;
    let mut errors = Vec::new();
    let mut finite = Vec::new();
    for &xi in xis {
        let spec = CorrelatorSpec {
            slots: slots.to_vec(),
            t,
            xi,
        };
        let v = finite_xi_correlator(&spec, engine.reservoir, &diagrams, budget)?.total;
        errors.push((v - limit).norm());
        finite.push((v.re, v.im));
    }
    Ok(ConvergenceReport {
        order: slots.len(),
        fitted_order: crate::fit::loglog_slope(xis, &errors),
        xis: xis.to_vec(),
        errors,
        limit: (limit.re, limit.im),
        finite,
    })
}

/// Both sides of the outer-pair factorization, per energy bin.
#[derive(Debug, Clone, Serialize)]
pub struct FactorizationReport {
    pub lhs: Vec<(f64, f64)>,
    pub rhs: Vec<(f64, f64)>,
    pub max_abs_diff: f64,
    pub max_abs: f64,
}

/// Evaluates `φ_L(B⁺_f(E,t) N…N B_g(E,t))` by enumerating every pairing of the `2(n+1)`
/// white-noise factors under the causal rules, and compares with
/// `φ_L(B⁺_f B_g)·φ_L(N…N)` from the composition formula.
pub fn factorization_check(engine: &LimitEngine, outer: &Slot, slots: &[Slot], t: f64) -> Result<FactorizationReport> {
    if slots.is_empty() {
        return Err(Error::Argument("inner correlator needs at least one slot".into()));
    }
    let n = slots.len();
    let nb = engine.mesh.n_bins();
    let de = engine.mesh.delta_e();
    let w_out = engine.sigma_l(&outer.g, &outer.f)?;
    let inner = limit_correlator(engine, slots, t)?.value;
    let rhs: Vec<C64> = w_out.iter().map(|w| w * inner).collect();

    // Creation labels 0..=n (0 = outer), annihilation labels 1..=n+1 (n+1 = outer).
    let diagrams = enumerate_pairings(n + 1, DEFAULT_ORDER_CAP + 1)?;
    let mut lhs = vec![C64::new(0.0, 0.0); nb];
    for d in &diagrams {
        let target: Vec<usize> = d.pairs.iter().map(|&(_, j)| j).collect();
        let mut ok = true;
        let mut chain_next = vec![None; n + 1];
        let mut forward = Vec::new();
        for c in 1..=n {
            let a = target[c];
            if a == n + 1 {
                // Inner creator with the outer annihilator: χ_{[0,t_c]}(t) vanishes on the simplex.
                ok = false;
                break;
            }
            if a < c {
                if a + 1 != c {
                    ok = false;
                    break;
                }
                chain_next[a] = Some(c);
            } else {
                forward.push((c, a));
            }
        }
        if !ok {
            continue;
        }
        let mut value = C64::new(1.0, 0.0);
        let mut blocks = 0usize;
        let mut covered = 0usize;
        for &(s, e) in &forward {
            let mut end = s;
            while let Some(nx) = chain_next[end] {
                end = nx;
            }
            if end != e {
                ok = false;
                break;
            }
            let sl = engine.sigma_l(&slots[e - 1].g, &slots[s - 1].f)?;
            let links: Vec<Vec<C64>> = (s..e)
                .map(|l| engine.gamma(&slots[l - 1].g, &slots[l].f))
                .collect::<Result<_>>()?;
            let mut acc = C64::new(0.0, 0.0);
            for b in 0..nb {
                acc += links.iter().fold(sl[b], |term, g| term * g[b]);
            }
            value *= acc * de;
            blocks += 1;
            covered += e - s + 1;
        }
        if !ok || covered != n {
            continue;
        }
        let v = value * time_factor(t, blocks);
        for (l, w) in lhs.iter_mut().zip(&w_out) {
            *l += w * v;
        }
    }
    let max_abs_diff = lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let max_abs = rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    Ok(FactorizationReport {
        lhs: lhs.iter().map(|z| (z.re, z.im)).collect(),
        rhs: rhs.iter().map(|z| (z.re, z.im)).collect(),
        max_abs_diff,
        max_abs,
    })
}
