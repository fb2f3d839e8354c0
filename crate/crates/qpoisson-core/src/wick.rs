//! Gauge-invariant Wick pairings of rescaled number operators and exact finite-ξ correlators
//! smeared over the time simplex.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::ReservoirModel;

pub const DEFAULT_ORDER_CAP: usize = 6;
pub const DEFAULT_TERM_BUDGET: u128 = 10_000_000;

/// One Wick pairing of `A⁺` slots with `A` slots; slots are numbered from 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairingDiagram {
    pub n: usize,
    /// `(i, j)`: `A⁺` at slot `i` pairs with `A` at slot `j`, listed by ascending `i`.
    pub pairs: Vec<(usize, usize)>,
    /// `i ≤ j` uses `φ(A⁺A)`, otherwise `φ(AA⁺)`.
    pub forward: Vec<bool>,
    pub connected: bool,
    /// Number of forward pairs.
    pub k: usize,
    /// `k − 1` for connected diagrams.
    pub xi_order: Option<usize>,
}

impl PairingDiagram {
    fn from_perm(perm: &[usize]) -> Self {
        let n = perm.len();
        let pairs: Vec<(usize, usize)> = perm.iter().enumerate().map(|(i, &j)| (i + 1, j + 1)).collect();
        let forward: Vec<bool> = pairs.iter().map(|&(i, j)| i <= j).collect();
        let k = forward.iter().filter(|&&f| f).count();
        let connected = !(1..n).any(|m| pairs.iter().all(|&(i, j)| (i <= m) == (j <= m)));
        PairingDiagram {
            n,
            pairs,
            forward,
            connected,
            k,
            xi_order: if connected { Some(k - 1) } else { None },
        }
    }

    /// Compact label such as `(1,3)(2,1)(3,2)`.
    pub fn label(&self) -> String {
        self.pairs.iter().map(|(i, j)| format!("({i},{j})")).collect()
    }

    /// The unique connected diagram with one forward pair: `(1,n),(2,1),…,(n,n−1)`.
    pub fn is_survivor(&self) -> bool {
        self.pairs
            .iter()
            .all(|&(i, j)| if i == 1 { j == self.n } else { j == i - 1 })
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All `n!` pairings in lexicographic order of the slot permutation.
pub fn enumerate_pairings(n: usize, cap: usize) -> Result<Vec<PairingDiagram>> {
    if n == 0 {
        return Err(Error::Argument("order must be at least 1".into()));
    }
    if n > cap {
        return Err(Error::Resource {
            what: "pairing enumeration order".into(),
            required: n as u128,
            budget: cap as u128,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![PairingDiagram::from_perm(&perm)];
    while next_permutation(&mut perm) {
        out.push(PairingDiagram::from_perm(&perm));
    }
    Ok(out)
}

/// `∫_{t ≥ t₁ ≥ … ≥ t_n ≥ 0} Π_l e^{i a_l t_l} dt`.
///
/// With `b₀ = 0`, `b_k = a₁ + … + a_k` the integral equals `F[b₀,…,b_n]/iⁿ` for
/// `F(x) = e^{itx}`. The divided differences use the recurrence when the spread of a
/// sub-table satisfies `(b_j − b_i)t > 1` and a Taylor expansion around its midpoint
/// otherwise, which stays accurate for coincident and nearly coincident frequencies.
pub fn simplex_exp_integral(a: &[f64], t: f64) -> C64 {
    let n = a.len();
    let mut b = Vec::with_capacity(n + 1);
    b.push(0.0);
    let mut acc = 0.0;
    for &x in a {
        acc += x;
        b.push(acc);
    }
    b.sort_by(|x, y| x.total_cmp(y));
    let dd = exp_divided_difference(&b, t);
    let mut inv_i_pow = C64::new(1.0, 0.0);
    for _ in 0..n {
        inv_i_pow *= C64::new(0.0, -1.0);
    }
    dd * inv_i_pow
}

const TAYLOR_TERMS: usize = 40;

/// Divided difference of `x ↦ e^{itx}` over ascending nodes.
fn exp_divided_difference(x: &[f64], t: f64) -> C64 {
    let m = x.len();
    // table[i] holds F[x_i .. x_{i+level}] after each level.
    let mut table: Vec<C64> = x.iter().map(|&v| C64::from_polar(1.0, v * t)).collect();
    for level in 1..m {
        for i in 0..m - level {
            let j = i + level;
            let spread = x[j] - x[i];
            table[i] = if spread * t.abs() > 1.0 {
                (table[i + 1] - table[i]) / spread
            } else {
                taylor_dd(&x[i..=j], t)
            };
        }
    }
    table[0]
}

/// `F[y…]` by expansion around the midpoint: `e^{itc} Σ_{k≥m} (it)^k/k! h_{k−m}(x − c)`.
fn taylor_dd(x: &[f64], t: f64) -> C64 {
    let m = x.len() - 1;
    let c = 0.5 * (x[0] + x[m]);
    let y: Vec<f64> = x.iter().map(|v| v - c).collect();
    // Complete homogeneous symmetric polynomials h_d(y), d = 0..TAYLOR_TERMS.
    let mut h = vec![0.0f64; TAYLOR_TERMS];
    h[0] = 1.0;
    let mut first = true;
    for &yv in &y {
        if first {
            for d in 1..TAYLOR_TERMS {
                h[d] = h[d - 1] * yv;
            }
            first = false;
        } else {
            for d in 1..TAYLOR_TERMS {
                h[d] += yv * h[d - 1];
            }
        }
    }
    let it = C64::new(0.0, t);
    // coef_k = (it)^k / k!, starting at k = m.
    let mut coef = C64::new(1.0, 0.0);
    for k in 1..=m {
        coef *= it / k as f64;
    }
    let mut sum = C64::new(0.0, 0.0);
    for (d, hd) in h.iter().enumerate() {
        sum += coef * *hd;
        coef *= it / (m + d + 1) as f64;
    }
    C64::from_polar(1.0, c * t) * sum
}

/// One number-operator slot `N_{f,g}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub f: Vec<C64>,
    pub g: Vec<C64>,
}

/// Product `N_{f₁,g₁,ξ}(t₁)…N_{f_n,g_n,ξ}(t_n)` smeared over the simplex of horizon `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorSpec {
    pub slots: Vec<Slot>,
    pub t: f64,
    pub xi: f64,
}

impl CorrelatorSpec {
    pub fn order(&self) -> usize {
        self.slots.len()
    }
}

/// Total value plus the contribution of every diagram, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorValue {
    pub total: C64,
    pub per_diagram: Vec<C64>,
}

struct PairTerms {
    slot_plus: usize,
    slot_minus: usize,
    terms: Vec<(f64, C64)>,
}

fn pair_terms(spec: &CorrelatorSpec, reservoir: &ReservoirModel, d: &PairingDiagram) -> Vec<PairTerms> {
    let xi = spec.xi;
    d.pairs
        .iter()
        .zip(&d.forward)
        .map(|(&(i, j), &fwd)| {
            let f = &spec.slots[i - 1].f;
            let g = &spec.slots[j - 1].g;
            let terms = reservoir
                .modes()
                .iter()
                .enumerate()
                .filter_map(|(k, md)| {
                    let occ = xi * md.l_val / (1.0 - xi * md.l_val);
                    let w = if fwd { occ } else { 1.0 + occ };
                    let v = f[k] * g[k].conj() * w;
                    (v != C64::new(0.0, 0.0)).then_some((md.omega / xi, v))
                })
                .collect();
            PairTerms {
                slot_plus: i - 1,
                slot_minus: j - 1,
                terms,
            }
        })
        .collect()
}

fn validate(spec: &CorrelatorSpec, reservoir: &ReservoirModel) -> Result<()> {
    if spec.slots.is_empty() {
        return Err(Error::Argument("correlator needs at least one slot".into()));
    }
    reservoir.with_xi(spec.xi)?;
    for s in &spec.slots {
        reservoir.check_len(&s.f)?;
        reservoir.check_len(&s.g)?;
    }
    Ok(())
}

fn check_budget(n_diagrams: usize, m: usize, n: usize, budget: u128) -> Result<()> {
    let required = (n_diagrams as u128).saturating_mul((m as u128).saturating_pow(n as u32));
    if required > budget {
        return Err(Error::Resource {
            what: "mode-tuple terms".into(),
            required,
            budget,
        });
    }
    Ok(())
}

fn diagram_sum<F: Fn(&[f64]) -> C64>(pairs: &[PairTerms], n: usize, leaf: &F) -> C64 {
    fn rec<F: Fn(&[f64]) -> C64>(pairs: &[PairTerms], p: usize, w: C64, a: &mut Vec<f64>, leaf: &F) -> C64 {
        if p == pairs.len() {
            return w * leaf(a);
        }
        let pt = &pairs[p];
        let mut acc = C64::new(0.0, 0.0);
        for &(freq, v) in &pt.terms {
            a[pt.slot_plus] += freq;
            a[pt.slot_minus] -= freq;
            acc += rec(pairs, p + 1, w * v, a, leaf);
            a[pt.slot_plus] -= freq;
            a[pt.slot_minus] += freq;
        }
        acc
    }
    let mut a = vec![0.0; n];
    rec(pairs, 0, C64::new(1.0, 0.0), &mut a, leaf)
}

/// Exact simplex-smeared finite-ξ correlator, diagram by diagram.
pub fn finite_xi_correlator(
    spec: &CorrelatorSpec,
    reservoir: &ReservoirModel,
    diagrams: &[PairingDiagram],
    budget: u128,
) -> Result<CorrelatorValue> {
    validate(spec, reservoir)?;
    let n = spec.order();
    if diagrams.iter().any(|d| d.n != n) {
        return Err(Error::Argument("diagram order differs from correlator order".into()));
    }
    check_budget(diagrams.len(), reservoir.len(), n, budget)?;
    let pref = spec.xi.powi(-(n as i32));
    let t = spec.t;
    let per_diagram: Vec<C64> = diagrams
        .par_iter()
        .map(|d| {
            let pairs = pair_terms(spec, reservoir, d);
            diagram_sum(&pairs, n, &|a: &[f64]| simplex_exp_integral(a, t)) * pref
        })
        .collect();
    let total = per_diagram.iter().sum();
    Ok(CorrelatorValue { total, per_diagram })
}

/// Unsmeared finite-ξ correlator at fixed times `t₁, …, t_n`.
pub fn finite_xi_pointwise(
    spec: &CorrelatorSpec,
    reservoir: &ReservoirModel,
    diagrams: &[PairingDiagram],
    times: &[f64],
    budget: u128,
) -> Result<CorrelatorValue> {
    validate(spec, reservoir)?;
    let n = spec.order();
    if times.len() != n {
        return Err(Error::Argument(format!("need {n} times, got {}", times.len())));
    }
    check_budget(diagrams.len(), reservoir.len(), n, budget)?;
    let pref = spec.xi.powi(-(n as i32));
    let per_diagram: Vec<C64> = diagrams
        .iter()
        .map(|d| {
            let pairs = pair_terms(spec, reservoir, d);
            let leaf = |a: &[f64]| {
                let phase: f64 = a.iter().zip(times).map(|(x, s)| x * s).sum();
                C64::from_polar(1.0, phase)
            };
            diagram_sum(&pairs, n, &leaf) * pref
        })
        .collect();
    let total = per_diagram.iter().sum();
    Ok(CorrelatorValue { total, per_diagram })
}

/// Values of one diagram across a fugacity sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DiagramScaling {
    pub id: usize,
    pub pairing: String,
    pub connected: bool,
    pub k: usize,
    pub values: Vec<(f64, f64)>,
    pub fitted_power: f64,
    pub expected_power: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub xis: Vec<f64>,
    pub diagrams: Vec<DiagramScaling>,
}

impl ScalingReport {
    /// Connected diagrams with `k ≥ 2` have fitted power at least `min_power`, and the
    /// survivor's power lies within `survivor_tol` of zero.
    pub fn selection_holds(&self, min_power: f64, survivor_tol: f64) -> bool {
        self.diagrams.iter().filter(|d| d.connected).all(|d| {
            if d.k == 1 {
                d.fitted_power.abs() <= survivor_tol
            } else {
                d.fitted_power >= min_power
            }
        })
    }
}

/// Per-diagram values for each ξ with log-log fitted leading powers.
pub fn diagram_scaling_report(
    slots: &[Slot],
    t: f64,
    reservoir: &ReservoirModel,
    xis: &[f64],
    budget: u128,
) -> Result<ScalingReport> {
    if xis.len() < 2 {
        return Err(Error::Argument("need at least two fugacities".into()));
    }
    let diagrams = enumerate_pairings(slots.len(), DEFAULT_ORDER_CAP)?;
    let mut values = vec![Vec::new(); diagrams.len()];
    for &xi in xis {
        let spec = CorrelatorSpec {
            slots: slots.to_vec(),
            t,
            xi,
        };
        let v = finite_xi_correlator(&spec, reservoir, &diagrams, budget)?;
        for (slot, x) in values.iter_mut().zip(v.per_diagram) {
            slot.push(x);
        }
    }
    let out = diagrams
        .iter()
        .enumerate()
        .map(|(id, d)| {
            let mags: Vec<f64> = values[id].iter().map(|z| z.norm()).collect();
            DiagramScaling {
                id,
                pairing: d.label(),
                connected: d.connected,
                k: d.k,
                values: values[id].iter().map(|z| (z.re, z.im)).collect(),
                fitted_power: crate::fit::loglog_slope(xis, &mags),
                expected_power: d.xi_order.map(|o| o as f64),
            }
        })
        .collect();
    Ok(ScalingReport {
        xis: xis.to_vec(),
        diagrams: out,
    })
}
