use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use kirchhoff::dynamics::{integrate_physical, m1, Scheme};
use kirchhoff::effective::{effective_rhs, integrate_effective, Closure, EffScheme, EffectiveState, ShellState};
use kirchhoff::lattice::resonant_triples_for_keys;
use kirchhoff::nonres::{check_nonres, make_nonresonant, perturbation_margin, Form};
use kirchhoff::normal_form::{phi1, phi2_inverse, x3plus, ChainState, Direction, NormalForm, Stage};
use kirchhoff::spectral::{
    pairing, random_pair, random_physical, shell_observables, synth_physical, u_lambda, u_lambda_map, FieldPair,
    PhasePolicy, PhysicalState,
};
use kirchhoff::{build_lattice, resonant_triples, squarefree_decompose, Lattice, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn lat1() -> &'static Arc<Lattice> {
    static L: OnceLock<Arc<Lattice>> = OnceLock::new();
    L.get_or_init(|| build_lattice(1, 64).unwrap())
}

fn lat2() -> &'static Arc<Lattice> {
    static L: OnceLock<Arc<Lattice>> = OnceLock::new();
    L.get_or_init(|| build_lattice(2, 20).unwrap())
}

fn nf(d: usize) -> &'static NormalForm {
    static N1: OnceLock<NormalForm> = OnceLock::new();
    static N2: OnceLock<NormalForm> = OnceLock::new();
    if d == 1 {
        N1.get_or_init(|| NormalForm::new(lat1()))
    } else {
        N2.get_or_init(|| NormalForm::new(lat2()))
    }
}

fn lat(d: usize) -> &'static Arc<Lattice> {
    if d == 1 {
        lat1()
    } else {
        lat2()
    }
}

fn pair(d: usize, seed: u64, decay: f64, size: f64) -> FieldPair {
    random_pair(lat(d), &mut ChaCha8Rng::seed_from_u64(seed), decay, m1(d), size)
}

fn rel(a: &FieldPair, b: &FieldPair) -> f64 {
    a.sub(b).norm(0.0) / b.norm(0.0)
}

/// `⟨Λˢ X₁, Λˢ z⟩ + ⟨Λˢ w, Λˢ X₂⟩` and the size of its two terms.
fn s_pairing(x: &FieldPair, st: &FieldPair, s: f64) -> (f64, f64) {
    let (xu, xv) = (x.u.lambda_pow(s), x.v.lambda_pow(s));
    let (w, z) = (st.u.lambda_pow(s), st.v.lambda_pow(s));
    let total = pairing(&xu, &z).unwrap() + pairing(&w, &xv).unwrap();
    (total.norm(), xu.norm(0.0) * z.norm(0.0) + w.norm(0.0) * xv.norm(0.0))
}

fn effective_state(keys: &[u64], s: &[f64], frac: &[f64], arg: &[f64], closure: Closure) -> EffectiveState {
    let shells = keys
        .iter()
        .enumerate()
        .map(|(i, &n)| ShellState { n, s: s[i], b: C64::from_polar(s[i] * frac[i], arg[i]) })
        .collect();
    EffectiveState { shells, closure }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn triples_share_a_class(n_max in 1u64..400, d in 1usize..=3) {
        let lat = build_lattice(d, n_max.min(if d == 3 { 60 } else { 400 })).unwrap();
        for t in resonant_triples(&lat).iter() {
            let (ma, pa) = squarefree_decompose(t.a);
            let (mb, pb) = squarefree_decompose(t.b);
            let (ml, pl) = squarefree_decompose(t.l);
            prop_assert!(pa == pb && pb == pl);
            prop_assert_eq!(ma + mb, ml);
        }
        for sh in lat.shells() {
            for &k in &sh.members {
                prop_assert!(sh.members.contains(&lat.neg(k)));
            }
        }
    }

    #[test]
    fn parseval_and_b_below_s(seed in any::<u64>(), d in 1usize..=2, s in 0.0f64..3.0) {
        let p = pair(d, seed, 1.5, 1.0);
        let obs = shell_observables(&p);
        let sum: f64 = lat(d).shells().iter().zip(&obs.s).map(|(sh, x)| sh.lambda.powf(2.0 * s) * x).sum();
        let n = p.u.norm(s);
        prop_assert!((sum - n * n).abs() <= 1e-12 * n * n);
        for (b, x) in obs.b.iter().zip(&obs.s) {
            prop_assert!(b.norm() <= x * (1.0 + 1e-14));
        }
    }

    #[test]
    fn linear_stage_identity(seed in any::<u64>(), d in 1usize..=2) {
        let st = random_physical(lat(d), &mut ChaCha8Rng::seed_from_u64(seed), 2.0, m1(d), 1.0);
        let f = phi2_inverse(&phi1(Direction::Inverse, &st));
        let obs = shell_observables(&f);
        for ((u, sh), s) in u_lambda(&st).iter().zip(lat(d).shells()).zip(&obs.s) {
            let want = 2.0 * sh.lambda * sh.lambda * s;
            prop_assert!((u - want).abs() <= 1e-12 * u.abs().max(1e-300), "{} vs {}", u, want);
        }
    }

    #[test]
    fn synthesis_reproduces_u_profile(vals in proptest::collection::vec(0.0f64..2.0, 8), seed in any::<u64>()) {
        let lat = lat2();
        let targets: BTreeMap<u64, f64> = lat.shells().iter().zip(&vals).map(|(s, &v)| (s.n, v)).collect();
        let st = synth_physical(lat, &targets, PhasePolicy::Seeded(seed)).unwrap();
        prop_assert!(st.reality_defect() == 0.0);
        let got = u_lambda_map(&st);
        for (n, t) in &targets {
            prop_assert!((got[n] - t).abs() <= 1e-12 * t.max(1e-300));
        }
    }

    #[test]
    fn nonres_scale_invariance(vals in proptest::collection::vec(1e-3f64..1.0, 16), t in 1e-6f64..1e6, c0 in 0.01f64..1.0) {
        let keys: Vec<u64> = (1..=16u64).map(|i| i * i).collect();
        let triples = resonant_triples_for_keys(&keys);
        let values: BTreeMap<u64, f64> = keys.iter().copied().zip(vals.iter().copied()).collect();
        let scaled: BTreeMap<u64, f64> = values.iter().map(|(&n, &v)| (n, v * t)).collect();
        let a = check_nonres(&values, &triples, c0, Form::U).unwrap();
        let b = check_nonres(&scaled, &triples, c0, Form::U).unwrap();
        let (wa, wb) = (a.worst_margin.unwrap(), b.worst_margin.unwrap());
        prop_assert!((wa - wb).abs() <= 1e-12 * wa.max(1e-300));
        if (wa - c0).abs() > 1e-12 {
            prop_assert_eq!(a.pass, b.pass);
        }
    }

    #[test]
    fn perturbation_bound_is_sound(seed in any::<u64>(), size in 1e-4f64..5e-3) {
        let lat = build_lattice(1, 49).unwrap();
        let base = make_nonresonant(&"decreasing".parse().unwrap(), &lat, 0.05).unwrap();
        let pert = random_physical(&lat, &mut ChaCha8Rng::seed_from_u64(seed), 2.0, 1.0, size);
        let pm = perturbation_margin(&base.state, Some(&base.certificate), &pert).unwrap();
        let sum = PhysicalState { a: &base.state.a + &pert.a, b: &base.state.b + &pert.b };
        let rep = check_nonres(&u_lambda_map(&sum), &resonant_triples(&lat), 1.0, Form::U).unwrap();
        let bound = base.certificate.c0 - 4.0 * pm.mu;
        prop_assert!(rep.worst_margin.unwrap() >= bound - 1e-12, "{:?} < {}", rep.worst_margin, bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stage_round_trips(seed in any::<u64>(), d in 1usize..=2, stage in 0usize..4, eps in 0.005f64..0.05) {
        let nf = nf(d);
        let p = pair(d, seed, 2.5, eps);
        let (st, start) = match stage {
            0 => (Stage::Phi1, ChainState::Physical(random_physical(lat(d), &mut ChaCha8Rng::seed_from_u64(seed), 2.5, m1(d), eps))),
            1 => (Stage::Phi3, ChainState::Pair(p.clone())),
            2 => (Stage::Phi4, ChainState::Pair(p.clone())),
            _ => (Stage::Phi5, ChainState::Pair(p.clone())),
        };
        let fwd = nf.apply_stage(st, Direction::Forward, &start).unwrap();
        let back = nf.apply_stage(st, Direction::Inverse, &fwd).unwrap();
        let err = match (&back, &start) {
            (ChainState::Pair(a), ChainState::Pair(b)) => a.sub(b).norm(m1(d)) / b.norm(m1(d)),
            (ChainState::Physical(a), ChainState::Physical(b)) => {
                PhysicalState { a: &a.a - &b.a, b: &a.b - &b.b }.energy_norm(m1(d)) / b.energy_norm(m1(d))
            }
            _ => unreachable!(),
        };
        prop_assert!(err <= 1e-10, "{:?}: {:e}", st, err);
        if let ChainState::Pair(f) = &fwd {
            prop_assert!(f.conjugacy_defect() <= 1e-15 * f.norm(0.0));
        }
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), d in 1usize..=2, t in 0.01f64..10.0) {
        let nf = nf(d);
        let p = pair(d, seed, 2.0, 0.1);
        let q = p.scale(t);
        prop_assert!(rel(&x3plus(&q), &x3plus(&p).scale(t.powi(3))) <= 1e-12);
        prop_assert!(rel(&nf.w5(&q), &nf.w5(&p).scale(t.powi(5))) <= 1e-12);
        prop_assert!(rel(&nf.phi5_correction(&q), &nf.phi5_correction(&p).scale(t.powi(5))) <= 1e-12);
        prop_assert!(rel(&nf.cubic().correction(&q), &nf.cubic().correction(&p).scale(t.powi(3))) <= 1e-12);
    }

    #[test]
    fn tangents_are_real(seed in any::<u64>(), d in 1usize..=2) {
        let nf = nf(d);
        let p = pair(d, seed, 2.0, 0.05);
        for t in [x3plus(&p), nf.w5(&p), nf.w_field(&p).unwrap()] {
            prop_assert!((&t.u.conj_reflect() - &t.v).max_abs() <= 1e-15 * t.norm(0.0));
        }
    }

    #[test]
    fn x3plus_s_pairing_vanishes(seed in any::<u64>(), d in 1usize..=2) {
        let p = pair(d, seed, 1.5, 1.0);
        let x = x3plus(&p);
        for s in [0.5, 1.0, m1(d)] {
            let (v, scale) = s_pairing(&x, &p, s);
            prop_assert!(v <= 1e-12 * scale, "s={}: {:e} vs {:e}", s, v, scale);
        }
    }

    #[test]
    fn effective_momentum_identity(
        s in proptest::collection::vec(0.0f64..1.0, 16),
        frac in proptest::collection::vec(0.0f64..=1.0, 16),
        arg in proptest::collection::vec(-3.2f64..3.2, 16),
        full in any::<bool>(),
    ) {
        let keys: Vec<u64> = (1..=16u64).map(|i| i * i).collect();
        let triples = resonant_triples_for_keys(&keys);
        let st = effective_state(&keys, &s, &frac, &arg, if full { Closure::FullP } else { Closure::ZeroP });
        let tan = effective_rhs(&st, &triples).unwrap();
        let (mut sum, mut abs) = (0.0, 0.0);
        for (n, ds) in keys.iter().zip(&tan.ds) {
            let l = (*n as f64).sqrt();
            sum += l * ds;
            abs += l * ds.abs();
        }
        prop_assert!(sum.abs() <= 1e-14 * abs, "{:e} vs {:e}", sum, abs);
        for (sh, db) in st.shells.iter().zip(&tan.db) {
            prop_assert!((db.conj() * sh.b).re.abs() <= 1e-14 * db.norm() * sh.b.norm());
        }
    }

    #[test]
    fn effective_support_is_invariant(
        s in proptest::collection::vec(0.0f64..1.0, 9),
        mask in proptest::collection::vec(any::<bool>(), 9),
        arg in proptest::collection::vec(-3.2f64..3.2, 9),
    ) {
        let keys: Vec<u64> = (1..=9u64).map(|i| i * i).collect();
        let s: Vec<f64> = s.iter().zip(&mask).map(|(x, m)| if *m { 1e-3 * x } else { 0.0 }).collect();
        let st = effective_state(&keys, &s, &[0.7; 9], &arg, Closure::FullP);
        let triples = resonant_triples_for_keys(&keys);
        let traj = integrate_effective(&st, &triples, 1e-2, 5.0, EffScheme::Rotframe, 50).unwrap();
        for snap in &traj.states {
            for (a, b) in snap.shells.iter().zip(&st.shells) {
                if b.s == 0.0 {
                    prop_assert!(a.s == 0.0 && a.b == C64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn physical_flow_is_real_reversible_and_support_preserving(seed in any::<u64>(), zero in 1usize..8) {
        let lat = build_lattice(1, 64).unwrap();
        let mut st = random_physical(&lat, &mut ChaCha8Rng::seed_from_u64(seed), 2.0, 1.0, 0.05);
        let idx = lat.shell(zero).members.clone();
        for k in idx.iter().copied() {
            st.a.coeffs[k] = C64::new(0.0, 0.0);
            st.b.coeffs[k] = C64::new(0.0, 0.0);
        }
        let traj = integrate_physical(&st, 1e-3, 2.0, Scheme::Leapfrog, 100).unwrap();
        for s in &traj.states {
            prop_assert!(s.reality_defect() <= 1e-15);
            for &k in &idx {
                prop_assert!(s.a.coeffs[k] == C64::new(0.0, 0.0) && s.b.coeffs[k] == C64::new(0.0, 0.0));
            }
        }
        let end = traj.last();
        let flipped = PhysicalState { a: end.a.clone(), b: -&end.b };
        let back = integrate_physical(&flipped, 1e-3, 2.0, Scheme::Leapfrog, 1000).unwrap();
        let r = back.last();
        let err = PhysicalState { a: &r.a - &st.a, b: &(-&r.b) - &st.b }.energy_norm(1.0) / st.energy_norm(1.0);
        prop_assert!(err <= 1e-10, "{:e}", err);
    }
}
