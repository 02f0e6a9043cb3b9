use std::collections::BTreeSet;
use std::sync::{Arc, LazyLock};

use num_rational::Ratio;
use proptest::prelude::*;
use qtopos::contexts::{build_poset, ClosureOptions, Context};
use qtopos::numerics::{
    eigendecompose, projector_leq, random, spectral_leq, ComplexMatrix, Projector, SelfAdjoint, Tolerance,
};
use qtopos::presheaf::{random_presheaf, FinitePoset, Sieve, SubObject, SubobjectLattice};
use qtopos::quantum::{
    daseinise_projection, daseinise_projection_inner, spectral_leq_oracle, truth_value_mixed, truth_value_pure,
    MixedState, PureState, RGrid,
};
use qtopos::scenario::load_scenario;
use qtopos::symmetry::{FiniteUnitaryGroup, GroupAction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static QUTRIT: LazyLock<Arc<GroupAction>> = LazyLock::new(|| {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/qutrit-rotations.json");
    load_scenario(path).unwrap().action().unwrap()
});

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_projector(dim: usize, rank: usize, seed: u64) -> Projector {
    let basis = random::orthonormal_basis(dim, &mut rng(seed));
    let parts: Vec<Projector> = basis[..rank].iter().map(|v| Projector::onto_ray(v).unwrap()).collect();
    Projector::sum(dim, &parts)
}

fn random_observable(values: &[f64], seed: u64) -> SelfAdjoint {
    let m = random::hermitian_with_spectrum(values, &mut rng(seed));
    eigendecompose(&m, &Tolerance::default()).unwrap()
}

fn shifted(a: &SelfAdjoint, by: f64) -> SelfAdjoint {
    let parts = a.spectrum().iter().map(|v| v + by).zip(a.eigenprojectors().iter().cloned()).collect();
    SelfAdjoint::from_spectral_parts(a.dim(), parts, &Tolerance::default()).unwrap()
}

/// Random order on `n` points from a random DAG on index order.
fn random_poset(n: usize, seed: u64) -> Arc<FinitePoset> {
    let mut r = rng(seed);
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|b| (0..b).map(move |a| (a, b))).filter(|_| r.random_bool(0.35)).collect();
    let labels = (0..n).map(|i| format!("p{i}")).collect();
    Arc::new(FinitePoset::from_pairs(labels, &pairs).unwrap())
}

/// Random selection pruned to a sub-object, lowest elements first.
fn random_subobject(lat: &SubobjectLattice<'_>, seed: u64) -> SubObject {
    let f = lat.parent;
    let base = f.base();
    let mut r = rng(seed);
    let mut s = lat.bottom();
    for &p in base.linear_extension() {
        for x in 0..f.stalk_size(p) {
            let keep =
                r.random_bool(0.6) && base.down(p).iter().all(|&lo| lo == p || s.contains(lo, f.restrict(lo, p, x)));
            s.selection[p][x] = keep;
        }
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_order_is_a_partial_order(seed in any::<u64>(), shift in 0.0f64..1.0) {
        let tol = Tolerance::default();
        let a = random_observable(&[0.0, 1.0, 2.0], seed);
        let basis = random::orthonormal_basis(3, &mut rng(seed ^ 1));
        // b commutes with a half the time so that comparable pairs occur.
        let b = if seed % 2 == 0 {
shifted(&a, shift)
        } else {
            let m = basis.iter().zip([0.5, 1.5, 2.5]).fold(ComplexMatrix::zeros(3), |acc, (v, e)| {
                &acc + &ComplexMatrix::outer(v).scale(e)
            });
            eigendecompose(&m, &tol).unwrap()
        };
        prop_assert!(spectral_leq(&a, &a, &tol).unwrap());
        let ab = spectral_leq(&a, &b, &tol).unwrap();
        let ba = spectral_leq(&b, &a, &tol).unwrap();
        prop_assert_eq!(ab, spectral_leq_oracle(&a, &b, &tol));
        prop_assert_eq!(ba, spectral_leq_oracle(&b, &a, &tol));
        if ab && ba {
            prop_assert!(a.matrix().approx_eq(b.matrix(), 1e-7));
        }
        let c = shifted(&b, 0.25);
        prop_assert!(spectral_leq(&b, &c, &tol).unwrap());
        if ab {
            prop_assert!(spectral_leq(&a, &c, &tol).unwrap());
        }
    }

    #[test]
    fn daseinisation_sandwich_and_monotonicity(seed in any::<u64>(), rank in 1usize..3) {
        let p = &QUTRIT.poset;
        let tol = p.tolerance();
        let pr = random_projector(3, rank, seed);
        let outer: Vec<Projector> = p.contexts().iter().map(|v| daseinise_projection(&pr, v, tol).unwrap()).collect();
        let inner: Vec<Projector> =
            p.contexts().iter().map(|v| daseinise_projection_inner(&pr, v, tol).unwrap()).collect();
        for v in 0..p.len() {
            prop_assert!(projector_leq(&inner[v], &pr, tol).unwrap());
            prop_assert!(projector_leq(&pr, &outer[v], tol).unwrap());
            for &w in p.base().down(v) {
                // Coarser contexts approximate less tightly.
                prop_assert!(projector_leq(&outer[v], &outer[w], tol).unwrap());
                prop_assert!(projector_leq(&inner[w], &inner[v], tol).unwrap());
            }
        }
    }

    #[test]
    fn daseinisation_is_covariant(seed in any::<u64>(), g in 0usize..128) {
        let a = &*QUTRIT;
        let g = g % a.group.order();
        let u = a.group.element(g);
        let tol = a.poset.tolerance();
        let pr = random_projector(3, 1 + (seed % 2) as usize, seed);
        let moved = pr.conjugated_by(u);
        for v in 0..a.poset.len() {
            let lhs = daseinise_projection(&moved, a.poset.context(a.act(g, v)), tol).unwrap();
            let rhs = daseinise_projection(&pr, a.poset.context(v), tol).unwrap().conjugated_by(u);
            prop_assert!(lhs.approx_eq(&rhs, tol));
        }
    }

    #[test]
    fn pure_truth_values_are_sieves_and_match_mixed_at_one(seed in any::<u64>(), rank in 1usize..3) {
        let p = &QUTRIT.poset;
        let psi = PureState::normalized(random::unit_vector(3, &mut rng(seed))).unwrap();
        // Half the time the projector contains the state, so truth values are non-trivial.
        let pr = if seed % 2 == 0 {
            let extra = random_projector(3, rank, seed ^ 7);
            let ray = Projector::onto_ray(psi.vector()).unwrap();
            if rank == 1 { ray } else {
                let m = &ray.matrix().clone() + &extra.matrix().clone();
                eigendecompose(&m, p.tolerance()).unwrap().eigenprojectors().last().cloned().unwrap_or(ray)
            }
        } else {
            random_projector(3, rank, seed)
        };
        let grid = RGrid::parse("1/2,1").unwrap();
        let rho = MixedState::from_pure(&psi);
        for v in 0..p.len() {
            let s = truth_value_pure(p, &pr, &psi, v).unwrap();
            let lower: BTreeSet<usize> = s.members.clone();
            prop_assert!(p.base().check_lower_set(&lower).is_ok());
            prop_assert_eq!(Sieve::from_lower_set(v, &s.to_lower_set(p.base()), p.base()), s.clone());
            let m = truth_value_mixed(p, &pr, &rho, v, Ratio::from_integer(1), &grid).unwrap();
            let at_one: BTreeSet<usize> = m.iter().filter(|&&(_, k)| k == 1).map(|&(w, _)| w).collect();
            prop_assert_eq!(at_one, s.members);
        }
    }

    #[test]
    fn heyting_laws_on_random_presheaves(seed in any::<u64>(), n in 2usize..6) {
        let base = random_poset(n, seed);
        let f = random_presheaf(base, 3, 2, &mut rng(seed ^ 3));
        prop_assert!(f.check_functoriality().is_empty());
        let lat = SubobjectLattice::new(&f);
        let a = random_subobject(&lat, seed ^ 11);
        let b = random_subobject(&lat, seed ^ 13);
        let c = random_subobject(&lat, seed ^ 17);
        for s in [&a, &b, &c] {
            prop_assert!(lat.is_subobject(s));
        }
        let ab = lat.implies(&a, &b);
        prop_assert!(lat.is_subobject(&ab));
        prop_assert!(lat.leq(&lat.meet(&a, &ab), &b));
        prop_assert_eq!(lat.leq(&c, &ab), lat.leq(&lat.meet(&c, &a), &b));
        prop_assert!(lat.leq(&a, &lat.not(&lat.not(&a))));
        prop_assert_eq!(lat.meet(&a, &lat.not(&a)), lat.bottom());
        prop_assert!(lat.leq(&lat.meet(&a, &b), &lat.join(&a, &b)));
    }
}

proptest! {
    // Each case closes a generic basis under a group of order 128.
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn closure_options_commute(seed in any::<u64>()) {
        // Group closure then downward closure equals downward closure then group closure.
        let tol = Tolerance::default();
        let a = &*QUTRIT;
        let basis = random::orthonormal_basis(3, &mut rng(seed));
        let seed_ctx = Context::from_basis(&basis, &tol).unwrap();
        let gens: Vec<ComplexMatrix> = a.group.generators().iter().map(|&g| a.group.element(g).clone()).collect();
        let group = FiniteUnitaryGroup::close_generators(&gens, 1024, &tol).unwrap();
        let trivial = FiniteUnitaryGroup::trivial(3);
        let both = build_poset(
            std::slice::from_ref(&seed_ctx),
            &group,
            ClosureOptions { group: true, meets: false, downward: true },
            4096,
            &tol,
        ).unwrap();
        let down = build_poset(
            std::slice::from_ref(&seed_ctx),
            &trivial,
            ClosureOptions { group: false, meets: false, downward: true },
            4096,
            &tol,
        ).unwrap();
        let then_group = build_poset(
            down.contexts(),
            &group,
            ClosureOptions { group: true, meets: false, downward: false },
            4096,
            &tol,
        ).unwrap();
        prop_assert_eq!(both.len(), then_group.len());
        for v in then_group.contexts() {
            prop_assert!(both.index_of(v).is_some());
        }
    }
}
