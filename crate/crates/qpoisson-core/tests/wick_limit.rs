use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpoisson_core::error::Error;
use qpoisson_core::fixtures::{random_reservoir, random_vector, GaussianReservoir};
use qpoisson_core::limit::{block_constants, time_factor};
use qpoisson_core::linalg::{c, C64};
use qpoisson_core::wick::{finite_xi_pointwise, DEFAULT_ORDER_CAP, DEFAULT_TERM_BUDGET};
use qpoisson_core::{
    build_mesh, convergence_study, enumerate_pairings, factorization_check, finite_xi_correlator, limit_correlator,
    simplex_exp_integral, spectral_density, CorrelatorSpec, KernelMethod, LimitEngine, Mode, ReservoirModel, Slot,
    Weight,
};

/// Truncated Fock space of `m` modes with `levels` occupation numbers per mode and the
/// thermal weights of independent modes with `⟨a†a⟩ = q/(1−q)`, `q = ξL`.
struct Fock {
    levels: usize,
    modes: usize,
    weights: Vec<f64>,
}

impl Fock {
    fn new(res: &ReservoirModel, xi: f64, levels: usize) -> Self {
        let modes = res.len();
        let dim = levels.pow(modes as u32);
        let local: Vec<Vec<f64>> = res
            .modes()
            .iter()
            .map(|md| {
                let q = xi * md.l_val;
                let w: Vec<f64> = (0..levels).map(|k| q.powi(k as i32)).collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect()
            })
            .collect();
        let weights = (0..dim)
            .map(|k| (0..modes).map(|j| local[j][digit(k, j, levels)]).product())
            .collect();
        Fock { levels, modes, weights }
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }

    /// `Σ_j c_j a_j v` (`dagger = false`) or `Σ_j c_j a_j† v`.
    fn apply(&self, coef: &[C64], dagger: bool, v: &[C64]) -> Vec<C64> {
        let mut out = vec![c(0.0, 0.0); self.dim()];
        for (k, &x) in v.iter().enumerate() {
            if x == c(0.0, 0.0) {
                continue;
            }
            for (j, &cj) in coef.iter().enumerate().take(self.modes) {
                let stride = self.levels.pow(j as u32);
                let n = digit(k, j, self.levels);
                if dagger && n + 1 < self.levels {
                    out[k + stride] += cj * x * ((n + 1) as f64).sqrt();
                } else if !dagger && n > 0 {
                    out[k - stride] += cj * x * (n as f64).sqrt();
                }
            }
        }
        out
    }
}

fn digit(k: usize, j: usize, levels: usize) -> usize {
    (k / levels.pow(j as u32)) % levels
}

/// `ξ^{−n} tr(ρ Π_i A⁺(S_{t_i/ξ} f_i) A(S_{t_i/ξ} g_i))` from explicit operator actions.
fn fock_correlator(fock: &Fock, res: &ReservoirModel, slots: &[Slot], xi: f64, times: &[f64]) -> C64 {
    let mut ops = Vec::new();
    for (slot, &t) in slots.iter().zip(times) {
        let phases: Vec<C64> = res.modes().iter().map(|md| C64::from_polar(1.0, md.omega * t / xi)).collect();
        let create: Vec<C64> = slot.f.iter().zip(&phases).map(|(f, p)| f * p).collect();
        let annihilate: Vec<C64> = slot.g.iter().zip(&phases).map(|(g, p)| (g * p).conj()).collect();
        ops.push((create, true));
        ops.push((annihilate, false));
    }
    let mut total = c(0.0, 0.0);
    for k in 0..fock.dim() {
        let mut v = vec![c(0.0, 0.0); fock.dim()];
        v[k] = c(1.0, 0.0);
        for (coef, dagger) in ops.iter().rev() {
            v = fock.apply(coef, *dagger, &v);
        }
        total += v[k] * fock.weights[k];
    }
    total * xi.powi(-(slots.len() as i32))
}

fn random_slots(m: usize, n: usize, seed: u64) -> Vec<Slot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Slot {
            f: random_vector(m, &mut rng),
            g: random_vector(m, &mut rng),
        })
        .collect()
}

#[test]
fn pointwise_correlators_match_the_fock_space_oracle() {
    let cases: [(usize, usize, usize, f64); 4] = [(2, 1, 30, 1.0), (2, 2, 30, 1.0), (2, 3, 30, 1.0), (3, 3, 12, 0.25)];
    for (case, &(m, n, levels, l_max)) in cases.iter().enumerate() {
        let res = random_reservoir(m, l_max, 0.1, 40 + case as u64);
        let xi = 0.2;
        let fock = Fock::new(&res, xi, levels);
        let slots = random_slots(m, n, 7 + case as u64);
        let times: Vec<f64> = (0..n).map(|k| 0.9 - 0.25 * k as f64).collect();
        let spec = CorrelatorSpec {
            slots: slots.clone(),
            t: 1.0,
            xi,
        };
        let diagrams = enumerate_pairings(n, DEFAULT_ORDER_CAP).unwrap();
        let wick = finite_xi_pointwise(&spec, &res, &diagrams, &times, DEFAULT_TERM_BUDGET).unwrap().total;
        let oracle = fock_correlator(&fock, &res, &slots, xi, &times);
        assert!(
            (wick - oracle).norm() <= 1e-8 * (1.0 + oracle.norm()),
            "M={m} n={n}: wick {wick} oracle {oracle}"
        );
    }
}

fn quad_simplex(a: &[f64], t: f64) -> C64 {
    if a.is_empty() {
        return c(1.0, 0.0);
    }
    let part = |re: bool| {
        quadrature::integrate(
            |s| {
                let z = C64::from_polar(1.0, a[0] * s) * quad_simplex(&a[1..], s);
                if re {
                    z.re
                } else {
                    z.im
                }
            },
            0.0,
            t,
            1e-12,
        )
        .integral
    };
    c(part(true), part(false))
}

#[test]
fn simplex_integral_matches_nested_quadrature() {
    let cases: [&[f64]; 8] = [
        &[0.7],
        &[1e-9],
        &[2.0, -2.0],
        &[0.3, 1.1],
        &[5.0, -4.999999],
        &[1.0, -0.5, 0.25],
        &[3.0, 0.0, -3.0],
        &[1e-7, 2e-7, -3e-7],
    ];
    for a in cases {
        for t in [0.5, 2.0] {
            let closed = simplex_exp_integral(a, t);
            let quad = quad_simplex(a, t);
            assert!((closed - quad).norm() < 1e-8, "a={a:?} t={t}: {closed} vs {quad}");
        }
    }
}

#[test]
fn smeared_correlator_is_the_simplex_average_of_the_pointwise_one() {
    let res = random_reservoir(4, 1.0, 0.1, 5);
    let slots = random_slots(4, 2, 11);
    let xi = 0.5;
    let t = 1.3;
    let diagrams = enumerate_pairings(2, DEFAULT_ORDER_CAP).unwrap();
    let spec = CorrelatorSpec {
        slots: slots.clone(),
        t,
        xi,
    };
    let smeared = finite_xi_correlator(&spec, &res, &diagrams, DEFAULT_TERM_BUDGET).unwrap().total;
    let point = |t1: f64, t2: f64| finite_xi_pointwise(&spec, &res, &diagrams, &[t1, t2], DEFAULT_TERM_BUDGET).unwrap().total;
    let part = |re: bool| {
        quadrature::integrate(
            |t1| {
                quadrature::integrate(
                    |t2| {
                        let z = point(t1, t2);
                        if re {
                            z.re
                        } else {
                            z.im
                        }
                    },
                    0.0,
                    t1,
                    1e-11,
                )
                .integral
            },
            0.0,
            t,
            1e-11,
        )
        .integral
    };
    let quad = c(part(true), part(false));
    assert!((smeared - quad).norm() < 1e-7 * (1.0 + quad.norm()), "{smeared} vs {quad}");
}

#[test]
fn zero_density_gives_zero_correlators() {
    let base = random_reservoir(5, 1.0, 0.1, 2);
    let modes: Vec<Mode> = base.modes().iter().map(|m| Mode { l_val: 0.0, ..*m }).collect();
    let res = ReservoirModel::new(modes, 0.1).unwrap();
    let mesh = build_mesh(&res, 0.5).unwrap();
    let engine = LimitEngine::new(&res, &mesh, KernelMethod::default());
    for n in 1..=3 {
        let slots = random_slots(5, n, n as u64);
        let diagrams = enumerate_pairings(n, DEFAULT_ORDER_CAP).unwrap();
        let spec = CorrelatorSpec {
            slots: slots.clone(),
            t: 1.0,
            xi: 0.1,
        };
        assert_eq!(finite_xi_correlator(&spec, &res, &diagrams, DEFAULT_TERM_BUDGET).unwrap().total, c(0.0, 0.0));
        assert_eq!(limit_correlator(&engine, &slots, 1.0).unwrap().value, c(0.0, 0.0));
    }
}

#[test]
fn limit_correlators_have_closed_forms_at_low_order() {
    let spec = GaussianReservoir::new(12, 2, 3.0);
    let res = spec.build();
    let mesh = build_mesh(&res, spec.delta_e()).unwrap();
    let engine = LimitEngine::new(&res, &mesh, KernelMethod::default());
    let slots = random_slots(res.len(), 2, 3);
    let t = 0.8;
    let n1 = limit_correlator(&engine, &slots[..1], t).unwrap();
    let direct = res.weighted_inner(&slots[0].g, &slots[0].f, Weight::L).unwrap() * t;
    assert!((n1.value - direct).norm() < 1e-12);
    assert_eq!(n1.n_terms, 1);

    let n2 = limit_correlator(&engine, &slots, t).unwrap();
    let a = res.weighted_inner(&slots[0].g, &slots[0].f, Weight::L).unwrap();
    let b = res.weighted_inner(&slots[1].g, &slots[1].f, Weight::L).unwrap();
    let sl = spectral_density(&res, &mesh, &slots[1].g, &slots[0].f, Weight::L).unwrap();
    let gam = engine.gamma(&slots[0].g, &slots[1].f).unwrap();
    let connected: C64 = sl.values.iter().zip(&gam).map(|(x, y)| x * y).sum::<C64>() * mesh.delta_e();
    let expected = a * b * (t * t / 2.0) + connected * t;
    assert!((n2.value - expected).norm() < 1e-12 * (1.0 + expected.norm()));
    assert_eq!(n2.n_terms, 2);
    let blocks = block_constants(&engine, &slots).unwrap();
    assert!((blocks[0][1].value - connected).norm() < 1e-14);
    assert_eq!(time_factor(t, 2), t * t / 2.0);
}

#[test]
fn composition_count_doubles_with_order() {
    let res = random_reservoir(6, 1.0, 0.1, 8);
    let mesh = build_mesh(&res, 0.5).unwrap();
    let engine = LimitEngine::new(&res, &mesh, KernelMethod::default());
    for n in 1..=6 {
        let slots = random_slots(6, n, 100 + n as u64);
        assert_eq!(limit_correlator(&engine, &slots, 1.0).unwrap().n_terms, 1usize << (n - 1));
    }
}

#[test]
fn outer_pair_factorizes_for_each_inner_order() {
    let res = random_reservoir(10, 1.0, 0.1, 31);
    let mesh = build_mesh(&res, 0.4).unwrap();
    for method in [KernelMethod::default(), KernelMethod::ResolventEta { eta: 0.4 }] {
        let engine = LimitEngine::new(&res, &mesh, method);
        for n in 1..=4 {
            let slots = random_slots(10, n + 1, 300 + n as u64);
            let rep = factorization_check(&engine, &slots[0], &slots[1..], 1.1).unwrap();
            assert!(rep.max_abs_diff <= 1e-10 * (1.0 + rep.max_abs), "n={n}: {}", rep.max_abs_diff);
        }
    }
}

#[test]
fn order_one_converges_linearly_in_xi() {
    let spec = GaussianReservoir::new(8, 2, 3.0);
    let res = spec.build();
    let mesh = build_mesh(&res, spec.delta_e()).unwrap();
    let engine = LimitEngine::new(&res, &mesh, KernelMethod::default());
    let slots = random_slots(res.len(), 1, 77);
    let rep = convergence_study(&engine, &slots, 1.0, &[0.2, 0.1, 0.05, 0.025], DEFAULT_TERM_BUDGET).unwrap();
    assert!((rep.fitted_order - 1.0).abs() < 0.05, "{}", rep.fitted_order);
}

#[test]
fn term_budget_is_a_resource_error() {
    let res = random_reservoir(20, 1.0, 0.1, 1);
    let slots = random_slots(20, 3, 1);
    let diagrams = enumerate_pairings(3, DEFAULT_ORDER_CAP).unwrap();
    let spec = CorrelatorSpec { slots, t: 1.0, xi: 0.1 };
    let err = finite_xi_correlator(&spec, &res, &diagrams, 1000).unwrap_err();
    assert!(matches!(err, Error::Resource { .. }));
}
