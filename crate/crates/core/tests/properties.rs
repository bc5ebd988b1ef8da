use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use latjoin::bounds::{check_dual, is_polymatroid, is_submodular, lovasz_monotonize, relation_pairs, solve_llp};
use latjoin::gen::{random_distributive_query, random_query};
use latjoin::lattice::Lattice;
use latjoin::normality::{coatomic_hypergraph, from_steps, relation_elements};
use latjoin::query::{Query, VarSet};
use latjoin::rational::{q, qi, zero, Q};

fn lattice(seed: u64, k: usize, distributive: bool) -> (Query, Lattice, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qy = if distributive { random_distributive_query(&mut rng, k) } else { random_query(&mut rng, k, 4) };
    let lat = Lattice::from_query(&qy).unwrap();
    (qy, lat, rng)
}

fn step_mixture(lat: &Lattice, rng: &mut ChaCha8Rng) -> Vec<Q> {
    let a: Vec<Q> = (0..lat.len()).map(|z| if z == lat.top { zero() } else { qi(rng.gen_range(0..=3)) }).collect();
    from_steps(lat, &a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closure_is_a_closure_operator(seed in any::<u64>(), k in 2usize..7, a in any::<u32>(), b in any::<u32>()) {
        let (qy, _, _) = lattice(seed, k, false);
        let all = qy.all();
        let (a, b): (VarSet, VarSet) = (a & all, (a | b) & all);
        let (ca, cb) = (qy.closure(a), qy.closure(b));
        prop_assert_eq!(a & !ca, 0);
        prop_assert_eq!(ca & !cb, 0);
        prop_assert_eq!(qy.closure(ca), ca);
    }

    #[test]
    fn lattice_axioms(seed in any::<u64>(), k in 2usize..6) {
        let (_, lat, _) = lattice(seed, k, false);
        let n = lat.len();
        prop_assert!(lat.leq(lat.bottom, lat.top));
        for a in 0..n {
            prop_assert_eq!(lat.join(a, lat.bottom), a);
            prop_assert_eq!(lat.meet(a, lat.top), a);
            for b in 0..n {
                prop_assert_eq!(lat.meet(a, b), lat.meet(b, a));
                prop_assert_eq!(lat.join(a, b), lat.join(b, a));
                prop_assert_eq!(lat.meet(a, lat.join(a, b)), a);
                prop_assert_eq!(lat.join(a, lat.meet(a, b)), a);
                prop_assert_eq!(lat.leq(a, b), lat.meet(a, b) == a);
                for c in 0..n {
                    prop_assert_eq!(lat.meet(a, lat.meet(b, c)), lat.meet(lat.meet(a, b), c));
                    prop_assert_eq!(lat.join(a, lat.join(b, c)), lat.join(lat.join(a, b), c));
                }
            }
        }
    }

    #[test]
    fn mobius_round_trip(seed in any::<u64>(), k in 2usize..6) {
        let (_, lat, mut rng) = lattice(seed, k, false);
        let h: Vec<Q> = (0..lat.len()).map(|_| q(rng.gen_range(-9..=9), rng.gen_range(1..=4))).collect();
        prop_assert_eq!(lat.mobius_apply(&lat.mobius_invert(&h)), h.clone());
        prop_assert_eq!(lat.mobius_invert(&lat.mobius_apply(&h)), h);
    }

    #[test]
    fn lovasz_monotonization(seed in any::<u64>(), k in 2usize..6, bump in 0i64..4) {
        let (_, lat, mut rng) = lattice(seed, k, false);
        let h: Vec<Q> = step_mixture(&lat, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(x, v)| if x == lat.top { v } else { v + qi(bump) })
            .collect();
        prop_assert!(is_submodular(&lat, &h));
        let hb = lovasz_monotonize(&lat, &h).unwrap();
        prop_assert!(is_polymatroid(&lat, &hb));
        prop_assert_eq!(&hb[lat.top], &h[lat.top]);
        prop_assert!((0..lat.len()).all(|x| hb[x] <= h[x] || x == lat.bottom));
    }

    #[test]
    fn compaction_inequality(seed in any::<u64>(), k in 2usize..6, distributive in any::<bool>()) {
        let (_, lat, _) = lattice(seed, k, distributive);
        for z in 0..lat.len() {
            for x in 0..lat.len() {
                for y in 0..lat.len() {
                    let before = lat.coatom_count_c(z, &[x, y]);
                    let after = lat.coatom_count_c(z, &[lat.meet(x, y), lat.join(x, y)]);
                    prop_assert!(before <= after);
                    if distributive && lat.meet_irreducibles.contains(&z) {
                        prop_assert_eq!(before, after);
                    }
                }
            }
        }
    }

    #[test]
    fn llp_duality(seed in any::<u64>(), k in 2usize..6) {
        let (qy, lat, mut rng) = lattice(seed, k, false);
        let rels = relation_elements(&lat, &qy);
        let ns: Vec<Q> = rels.iter().map(|_| q(rng.gen_range(1..=30), rng.gen_range(1..=3))).collect();
        let sol = solve_llp(&lat, &rels, &ns).unwrap().unwrap();
        let dual = check_dual(&lat, &relation_pairs(&lat, &rels, &ns), &sol.cert).unwrap();
        prop_assert_eq!(dual, sol.opt.clone());
        prop_assert!(is_submodular(&lat, &sol.h));
        prop_assert!(rels.iter().zip(&ns).all(|(&r, n)| &sol.h[r] <= n));
        prop_assert_eq!(&sol.h[lat.top], &sol.opt);
    }

    #[test]
    fn step_functions_decide_coatomic_covers(seed in any::<u64>(), k in 2usize..6) {
        let (qy, lat, mut rng) = lattice(seed, k, false);
        let rels = relation_elements(&lat, &qy);
        let names: Vec<String> = qy.relations.iter().map(|r| r.name.clone()).collect();
        let hg = coatomic_hypergraph(&lat, &rels, &names);
        let w: Vec<Q> = rels.iter().map(|_| q(rng.gen_range(0..=4), 4)).collect();
        let covers = hg.vertices.iter().all(|v| {
            hg.edges.iter().zip(&w).filter(|(e, _)| e.1.contains(v)).fold(zero(), |s, (_, x)| s + x) >= qi(1)
        });
        let holds = |h: &[Q]| rels.iter().zip(&w).fold(zero(), |s, (&r, x)| s + x * &h[r]) >= h[lat.top];
        let steps_hold = (0..lat.len()).filter(|&z| z != lat.top).all(|z| holds(&lat.step_function(z)));
        prop_assert_eq!(covers, steps_hold);
        if covers {
            prop_assert!(holds(&step_mixture(&lat, &mut rng)));
        }
    }
}
