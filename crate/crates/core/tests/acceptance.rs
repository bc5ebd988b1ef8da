//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::time::{Duration, Instant};

use latjoin::bounds::{
    check_dual, is_polymatroid, is_submodular, lovasz_monotonize, query_pairs, relation_pairs, solve_cllp, solve_llp,
};
use latjoin::chain::{best_chain_exhaustive, run_chain, select_chain, ChainMode};
use latjoin::csma::{branch_bound, run_csma, CsmaParams};
use latjoin::engine::{brute_force_join, DEFAULT_ORACLE_BUDGET};
use latjoin::lattice::Lattice;
use latjoin::normality::{from_steps, is_normal_lattice, quasi_for_query, relation_elements};
use latjoin::query::Query;
use latjoin::rational::{fmt_q, q, qi, Q};
use latjoin::sm::{
    check_goodness, find_sm_proof, plan_sma, run_sma, sm_bound, SearchOutcome, SmProof, DEFAULT_SEARCH_BUDGET,
};
use latjoin::{fixtures, gen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn setup(qy: &Query) -> Result<(Lattice, Vec<usize>), String> {
    let lat = e(Lattice::from_query(qy))?;
    let rels = relation_elements(&lat, qy);
    Ok((lat, rels))
}

/// Least-squares slope of log₂y against log₂x.
fn slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.log2(), y.log2())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

fn c1() -> Outcome {
    let start = Instant::now();
    let (lat, rels) = setup(&fixtures::triangle())?;
    for k in [4i64, 8, 10, 14] {
        let sol = e(solve_llp(&lat, &rels, &[qi(k), qi(k), qi(k)]))?.ok_or("LLP unbounded")?;
        ensure(sol.opt == q(3 * k, 2), || format!("N=2^{k}: exponent {} != {}", fmt_q(&sol.opt), 3 * k / 2))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("LLP = 3/2 log N at N = 2^4..2^14 in {t:?}"))
}

fn c2() -> Outcome {
    let start = Instant::now();
    let (lat, rels) = setup(&fixtures::bad_for_chain())?;
    let n = qi(12);
    let ns = vec![n.clone(); 4];
    let llp = e(solve_llp(&lat, &rels, &ns))?.ok_or("LLP unbounded")?;
    let chain = e(best_chain_exhaustive(&lat, &rels, &ns))?;
    let sm = e(sm_bound(&lat, &rels, &ns, DEFAULT_SEARCH_BUDGET))?.ok_or("no SM bound")?;
    ensure(llp.opt == q(4, 3) * &n, || format!("LLP {}", fmt_q(&llp.opt)))?;
    ensure(chain.bound == q(3, 2) * &n, || format!("chain {}", fmt_q(&chain.bound)))?;
    ensure(sm.bound == llp.opt, || format!("SM {}", fmt_q(&sm.bound)))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("chain 3/2 n, SM = LLP = 4/3 n, in {t:?}"))
}

fn c3() -> Outcome {
    let (lat, rels) = setup(&fixtures::m3())?;
    let m3 = e(is_normal_lattice(&lat, &rels))?;
    ensure(!m3.normal, || "M3 classified normal".into())?;
    let w = &m3.witness.as_ref().ok_or("M3 without witness")?.0;
    ensure(*w == vec![q(1, 2); 3], || format!("M3 witness {:?}", w.iter().map(fmt_q).collect::<Vec<_>>()))?;
    let (lat, rels) = setup(&fixtures::path_fd())?;
    ensure(e(is_normal_lattice(&lat, &rels))?.normal, || "path-FD lattice classified non-normal".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..20 {
        let k = rng.gen_range(3..=6);
        let qy = gen::random_distributive_query(&mut rng, k);
        let (lat, rels) = setup(&qy)?;
        ensure(lat.is_distributive(), || format!("instance {i}: lattice not distributive"))?;
        ensure(e(is_normal_lattice(&lat, &rels))?.normal, || format!("instance {i}: distributive lattice non-normal"))?;
    }
    Ok("M3 non-normal (1/2,1/2,1/2); path-FD normal; 20/20 distributive normal".into())
}

fn c4() -> Outcome {
    let mut sizes = vec![];
    for n in [4u64, 16, 64] {
        let inst = e(quasi_for_query(&fixtures::path_fd(), n))?;
        let out = e(brute_force_join(&inst.db, DEFAULT_ORACLE_BUDGET))?.table.len() as u64;
        let want = (n as f64).powf(1.5).round() as u64;
        ensure(out == want, || format!("quasi N={n}: |Q| = {out}, want {want}"))?;
        sizes.push(out);
    }
    for n in [4u64, 8, 16] {
        let out = e(brute_force_join(&gen::m3_instance(n), DEFAULT_ORACLE_BUDGET))?.table.len() as u64;
        ensure(out == n * n, || format!("M3 N={n}: |Q| = {out}"))?;
    }
    Ok(format!("quasi |Q| = {sizes:?}; M3 |Q| = N^2 at N = 4, 8, 16"))
}

fn c5() -> Outcome {
    let qy = fixtures::path_fd();
    let (lat, rels) = setup(&qy)?;
    let mut chain_pts = vec![];
    let mut oracle_pts = vec![];
    for k in [8u32, 10, 12] {
        let n = 1u64 << k;
        let db = gen::path_skew_instance(n);
        let logs: Vec<Q> = db.cardinalities().iter().map(|&s| latjoin::rational::log2_upper(s, 1 << 24)).collect();
        let chain = e(select_chain(&lat, &rels, &logs, ChainMode::Exhaustive))?.chain;
        let run = e(run_chain(&db, &lat, &chain))?;
        let oracle = e(brute_force_join(&db, DEFAULT_ORACLE_BUDGET))?;
        ensure(run.table == oracle.table, || format!("N=2^{k}: chain output differs from oracle"))?;
        chain_pts.push((n as f64, run.ops() as f64));
        oracle_pts.push((n as f64, oracle.steps as f64));
    }
    let (sc, so) = (slope(&chain_pts), slope(&oracle_pts));
    ensure(sc <= 1.6, || format!("chain slope {sc:.3} > 1.6"))?;
    ensure(so >= 1.9, || format!("oracle slope {so:.3} < 1.9"))?;
    Ok(format!("outputs match; chain slope {sc:.3}, oracle slope {so:.3}"))
}

fn c6() -> Outcome {
    let qy = fixtures::bad_for_chain();
    let (lat, rels) = setup(&qy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = 0;
    for i in 0..100 {
        let n = rng.gen_range(4..=64);
        let dom = rng.gen_range(2..=4);
        let db = e(gen::random_fd_instance(&qy, n, dom, &mut rng))?;
        let logs: Vec<Q> = db.cardinalities().iter().map(|&s| latjoin::rational::log2_upper(s, 1 << 24)).collect();
        let plan = e(plan_sma(&lat, &rels, &logs, DEFAULT_SEARCH_BUDGET))?;
        let oracle = e(brute_force_join(&db, DEFAULT_ORACLE_BUDGET))?.table;
        let run = run_sma(&db, &lat, &plan, Some(&oracle)).map_err(|x| format!("instance {i}: {x}"))?;
        ensure(run.table == oracle, || format!("instance {i}: SMA output differs from oracle"))?;
        checks += run.cache_checks;
    }
    let mut pts = vec![];
    for k in [9u32, 12] {
        let n = 1u64 << k;
        let db = e(quasi_for_query(&qy, n))?.db;
        let logs: Vec<Q> = db.cardinalities().iter().map(|&s| latjoin::rational::log2_upper(s, 1 << 24)).collect();
        let plan = e(plan_sma(&lat, &rels, &logs, DEFAULT_SEARCH_BUDGET))?;
        let run = e(run_sma(&db, &lat, &plan, None))?;
        pts.push((n as f64, run.ops as f64));
    }
    let s = slope(&pts);
    ensure(s <= 1.45, || format!("SMA slope {s:.3} > 1.45"))?;
    Ok(format!("100/100 match oracle, {checks} cache checks passed; slope {s:.3}"))
}

fn c7() -> Outcome {
    let lat = e(Lattice::from_query(&fixtures::non_tree()))?;
    let el = |s: &str| lat.el(s);
    let (x, y, z, u) = (el("bx"), el("by"), el("cz"), el("u"));
    let (a, b, c, d) = (el("bcxy"), el("b"), el("c"), el("bu"));
    let init = vec![x, y, z, u];
    let bad = e(SmProof::from_element_steps(&lat, init.clone(), 2, &[(x, y), (a, z), (b, u), (c, d)]))?;
    let good = e(SmProof::from_element_steps(&lat, init, 2, &[(x, z), (y, u)]))?;
    ensure(e(bad.is_complete(&lat))? && e(good.is_complete(&lat))?, || "non-tree proofs incomplete".into())?;
    ensure(!e(check_goodness(&lat, &bad))?.good, || "non-tree first proof classified good".into())?;
    ensure(e(check_goodness(&lat, &good))?.good, || "non-tree alternate proof classified bad".into())?;

    let lat = e(Lattice::from_query(&fixtures::bad_sm_proof()))?;
    let el = |s: &str| lat.el(s);
    let (x, y, z, w) = (el("ax"), el("ay"), el("bz"), el("bw"));
    let (a, b, c, d) = (el("a"), el("b"), el("axy"), el("bzw"));
    let p = e(SmProof::from_element_steps(&lat, vec![x, y, z, w], 2, &[(x, y), (z, w), (a, d), (b, c)]))?;
    ensure(e(p.is_complete(&lat))?, || "bad-SM proof incomplete".into())?;
    ensure(!e(check_goodness(&lat, &p))?.good, || "bad-SM proof classified good".into())?;

    let lat = e(Lattice::from_query(&fixtures::bad_for_chain()))?;
    let el = |s: &str| lat.el(s);
    let (r, s, t, u) = (el("abc"), el("ade"), el("bdf"), el("cef"));
    let p = e(SmProof::from_element_steps(&lat, vec![r, s, t, u], 3, &[(r, s), (t, u), (el("a"), el("f"))]))?;
    ensure(e(p.is_complete(&lat))?, || "gap example proof incomplete".into())?;
    ensure(e(check_goodness(&lat, &p))?.good, || "gap example proof classified bad".into())?;
    Ok("non-tree bad then good; bad-SM bad; gap example good".into())
}

fn c8() -> Outcome {
    let lat = e(Lattice::from_query(&fixtures::no_smp()))?;
    let init: Vec<usize> = ["pqx", "pry", "qrz"].iter().map(|s| lat.el(s)).collect();
    match find_sm_proof(&lat, &init, 2, DEFAULT_SEARCH_BUDGET) {
        SearchOutcome::Nonexistent { explored } => Ok(format!("proven nonexistent after {explored} states")),
        SearchOutcome::Budget { explored } => Err(format!("budget exhausted after {explored} states; nonexistence unproven")),
        SearchOutcome::Found(s) => Err(format!("found a proof {s:?}")),
    }
}

fn c9() -> Outcome {
    let qy = fixtures::no_smp();
    let lat = e(Lattice::from_query(&qy))?;
    ensure(qy.fds.iter().any(|f| matches!(f.source, latjoin::query::FdSource::Udf(_))), || "no UDF-backed FDs".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut branches, mut checks) = (0, 0);
    for i in 0..50 {
        let n = rng.gen_range(8..=64);
        let dom = rng.gen_range(2..=5);
        let db = e(gen::random_fd_instance(&qy, n, dom, &mut rng))?;
        let run = run_csma(&db, &lat, &CsmaParams::default()).map_err(|x| format!("instance {i}: {x}"))?;
        let oracle = e(brute_force_join(&db, DEFAULT_ORACLE_BUDGET))?.table;
        ensure(run.table == oracle, || format!("instance {i}: CSMA output differs from oracle"))?;
        ensure(run.branches <= branch_bound(&run), || format!("instance {i}: {} branches", run.branches))?;
        branches += run.branches;
        checks += run.inv_checks;
    }
    Ok(format!("50/50 match oracle; {branches} branches, {checks} invariant checks"))
}

fn c10() -> Outcome {
    for k in [8u32, 12] {
        let n = 1u64 << k;
        for d1 in [2u64, 4, n] {
            let qy = fixtures::triangle_degree(d1);
            let lat = e(Lattice::from_query(&qy))?;
            let pairs = query_pairs(&lat, &qy, &[n; 3], 1 << 24);
            let sol = e(solve_cllp(&lat, &pairs, false))?.ok_or("CLLP unbounded")?;
            let want = std::cmp::min(q(3 * k as i64, 2), qi(k as i64 + d1.trailing_zeros() as i64));
            ensure(sol.opt == want, || format!("N=2^{k}, d1={d1}: {} != {}", fmt_q(&sol.opt), fmt_q(&want)))?;
        }
    }
    Ok("exponent = min(3/2 n, n + log d1) for d1 in {2, 4, N}".into())
}

fn c11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut solved = 0;
    while solved < 1000 {
        let k = rng.gen_range(2..=5);
        let qy = gen::random_query(&mut rng, k, 3);
        let (lat, rels) = setup(&qy)?;
        let ns: Vec<Q> = rels.iter().map(|_| q(rng.gen_range(1..=40), rng.gen_range(1..=4))).collect();
        let sol = e(solve_llp(&lat, &rels, &ns))?.ok_or("LLP unbounded on covering relations")?;
        let dual = e(check_dual(&lat, &relation_pairs(&lat, &rels, &ns), &sol.cert))?;
        ensure(dual == sol.opt, || format!("solve {solved}: primal {} dual {}", fmt_q(&sol.opt), fmt_q(&dual)))?;
        let hs = e(lovasz_monotonize(&lat, &sol.h))?;
        ensure(is_polymatroid(&lat, &hs) && hs[lat.top] == sol.opt, || format!("solve {solved}: monotonized h* broken"))?;
        ensure(rels.iter().zip(&ns).all(|(&r, n)| &hs[r] <= n), || format!("solve {solved}: monotonized h* infeasible"))?;

        let g: Vec<Q> = (0..lat.len()).map(|_| qi(rng.gen_range(-5..=5))).collect();
        ensure(lat.mobius_apply(&lat.mobius_invert(&g)) == g, || "Möbius round trip failed".into())?;
        ensure(lat.mobius_invert(&lat.mobius_apply(&g)) == g, || "Möbius round trip failed".into())?;

        // step-function mixture plus a drop at the top: submodular, not monotone
        let a: Vec<Q> = (0..lat.len()).map(|z| if z == lat.top { qi(0) } else { qi(rng.gen_range(0..=3)) }).collect();
        let bump = qi(rng.gen_range(0..=3));
        let h: Vec<Q> = from_steps(&lat, &a)
            .into_iter()
            .enumerate()
            .map(|(x, v)| if x == lat.top { v } else { v + &bump })
            .collect();
        ensure(is_submodular(&lat, &h), || "mixture not submodular".into())?;
        let hb = e(lovasz_monotonize(&lat, &h))?;
        ensure(is_polymatroid(&lat, &hb) && hb[lat.top] == h[lat.top], || "monotonization not a polymatroid".into())?;
        solved += 1;
    }
    Ok("1000 solves: primal = dual exactly; Möbius round trips exact; monotonizations are polymatroids".into())
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("bound reproduction", c1),
        ("gap reproduction", c2),
        ("normality verdicts", c3),
        ("worst-case witnesses", c4),
        ("chain algorithm scaling", c5),
        ("SMA correctness and invariant", c6),
        ("goodness classifier", c7),
        ("SM-proof nonexistence", c8),
        ("CSMA end to end", c9),
        ("degree-bound bound", c10),
        ("numerical hygiene", c11),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let t = start.elapsed().as_secs_f64();
        match r {
            Ok(msg) => println!("criterion {:>2} PASS {name}: {msg} [{t:.2}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {msg} [{t:.2}s]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
