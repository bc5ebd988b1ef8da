//! SM-proof sequences, proof search, goodness labels, the SM bound and SMA.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::Serialize;

use crate::bounds::{check_output_inequality, relation_pairs, solve_cllp, solve_llp};
use crate::engine::Expander;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeFunction};
use crate::normality::{coatomic_hypergraph, cover_vertices};
use crate::query::bits;
use crate::rational::{fmt_q, le_pow2, lcm_denoms, max_q, qi, to_u64, zero, Q};
use crate::relation::{key_of, restrict, Database, Table};

/// Slot-level SM proof. Slots 0..initial.len() hold the initial copies; step k
/// retires its two slots and creates slot n+2k (the meet) and n+2k+1 (the join).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmProof {
    pub initial: Vec<usize>,
    pub d: u64,
    pub steps: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct Replay {
    pub elems: Vec<usize>,
    pub alive: Vec<bool>,
}

impl Replay {
    pub fn final_multiset(&self) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.elems.len()).filter(|&s| self.alive[s]).map(|s| self.elems[s]).collect();
        v.sort();
        v
    }
}

impl SmProof {
    /// Maps element-level steps onto slots, taking the lowest live slot holding each element.
    pub fn from_element_steps(lat: &Lattice, initial: Vec<usize>, d: u64, steps: &[(usize, usize)]) -> Result<SmProof> {
        let mut elems = initial.clone();
        let mut alive = vec![true; elems.len()];
        let mut out = vec![];
        for &(x, y) in steps {
            let find = |e: usize, skip: Option<usize>, elems: &[usize], alive: &[bool]| {
                (0..elems.len()).find(|&s| alive[s] && elems[s] == e && Some(s) != skip)
            };
            let a = find(x, None, &elems, &alive).ok_or_else(|| Error::Plan(format!("{} not in multiset", lat.label(x))))?;
            let b = find(y, Some(a), &elems, &alive).ok_or_else(|| Error::Plan(format!("{} not in multiset", lat.label(y))))?;
            alive[a] = false;
            alive[b] = false;
            elems.push(lat.meet(x, y));
            elems.push(lat.join(x, y));
            alive.extend([true, true]);
            out.push((a, b));
        }
        let p = SmProof { initial, d, steps: out };
        p.replay(lat)?;
        Ok(p)
    }

    pub fn replay(&self, lat: &Lattice) -> Result<Replay> {
        let mut elems = self.initial.clone();
        let mut alive = vec![true; elems.len()];
        for (k, &(a, b)) in self.steps.iter().enumerate() {
            if a == b || a >= elems.len() || b >= elems.len() || !alive[a] || !alive[b] {
                return Err(Error::Plan(format!("step {k} uses a retired or unknown slot")));
            }
            let (x, y) = (elems[a], elems[b]);
            if lat.comparable(x, y) {
                return Err(Error::Plan(format!("step {k}: {} and {} are comparable", lat.label(x), lat.label(y))));
            }
            alive[a] = false;
            alive[b] = false;
            elems.push(lat.meet(x, y));
            elems.push(lat.join(x, y));
            alive.extend([true, true]);
        }
        Ok(Replay { elems, alive })
    }

    /// Valid SM proof of Σ h(B) ≥ d·h(1̂): ends in a chain with 1̂ at least d times.
    pub fn is_complete(&self, lat: &Lattice) -> Result<bool> {
        let r = self.replay(lat)?;
        let fin = r.final_multiset();
        let chain = fin.iter().all(|&a| fin.iter().all(|&b| lat.comparable(a, b)));
        Ok(chain && fin.iter().filter(|&&e| e == lat.top).count() as u64 >= self.d)
    }

    pub fn element_steps(&self, lat: &Lattice) -> Vec<(usize, usize)> {
        let r = self.replay(lat).expect("replayable proof");
        self.steps.iter().map(|&(a, b)| (r.elems[a], r.elems[b])).collect()
    }
}

/// Co-atom cover counts: for each co-atom Z, |{B : B ⋠ Z}|.
pub fn coatom_cover_counts(lat: &Lattice, multiset: &[usize]) -> Vec<usize> {
    lat.coatoms.iter().map(|&z| multiset.iter().filter(|&&b| !lat.leq(b, z)).count()).collect()
}

fn e_size(lat: &Lattice, x: usize) -> i64 {
    lat.coatoms.iter().filter(|&&z| !lat.leq(x, z)).count() as i64
}

/// Σ|e_B|² progress gain of an SM step.
fn gain(lat: &Lattice, x: usize, y: usize) -> i64 {
    let sq = |v: i64| v * v;
    sq(e_size(lat, lat.meet(x, y))) + sq(e_size(lat, lat.join(x, y))) - sq(e_size(lat, x)) - sq(e_size(lat, y))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SearchOutcome {
    Found(Vec<(usize, usize)>),
    /// Every reachable multiset was explored.
    Nonexistent { explored: u64 },
    Budget { explored: u64 },
}

pub const DEFAULT_SEARCH_BUDGET: u64 = 1_000_000;

fn is_chain(lat: &Lattice, ms: &[usize]) -> bool {
    ms.iter().all(|&a| ms.iter().all(|&b| lat.comparable(a, b)))
}

fn successors(lat: &Lattice, ms: &[usize]) -> Vec<(i64, usize, usize)> {
    let mut distinct = ms.to_vec();
    distinct.dedup();
    let mut out = vec![];
    for (i, &x) in distinct.iter().enumerate() {
        for &y in &distinct[i + 1..] {
            if !lat.comparable(x, y) {
                out.push((gain(lat, x, y), x, y));
            }
        }
    }
    out.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    out
}

fn step_ms(lat: &Lattice, ms: &[usize], x: usize, y: usize) -> Vec<usize> {
    let mut v = ms.to_vec();
    let px = v.iter().position(|&e| e == x).unwrap();
    v.remove(px);
    let py = v.iter().position(|&e| e == y).unwrap();
    v.remove(py);
    v.push(lat.meet(x, y));
    v.push(lat.join(x, y));
    v.sort();
    v
}

/// Exhaustive search over multisets with a global visited set: `Nonexistent`
/// is reported only after every reachable multiset has been expanded.
pub fn find_sm_proof(lat: &Lattice, multiset: &[usize], d: u64, budget: u64) -> SearchOutcome {
    let mut start = multiset.to_vec();
    start.sort();
    let mut visited: HashSet<Vec<usize>> = HashSet::new();
    let mut explored = 0u64;
    let mut path: Vec<(usize, usize)> = vec![];
    // explicit stack of (state, successor list, next index)
    let mut stack: Vec<(Vec<usize>, Vec<(i64, usize, usize)>, usize)> = vec![];
    visited.insert(start.clone());
    let succ = successors(lat, &start);
    if succ.is_empty() && start.iter().filter(|&&e| e == lat.top).count() as u64 >= d {
        return SearchOutcome::Found(vec![]);
    }
    stack.push((start, succ, 0));
    while let Some(top) = stack.last_mut() {
        if top.2 >= top.1.len() {
            stack.pop();
            path.pop();
            continue;
        }
        let (_, x, y) = top.1[top.2];
        top.2 += 1;
        let next = step_ms(lat, &top.0, x, y);
        if !visited.insert(next.clone()) {
            continue;
        }
        explored += 1;
        if explored > budget {
            return SearchOutcome::Budget { explored };
        }
        path.push((x, y));
        let succ = successors(lat, &next);
        if succ.is_empty() {
            if next.iter().filter(|&&e| e == lat.top).count() as u64 >= d {
                return SearchOutcome::Found(path);
            }
            path.pop();
            continue;
        }
        stack.push((next, succ, 0));
    }
    SearchOutcome::Nonexistent { explored }
}

/// Any-order stepping; on distributive lattices Σ|e|² strictly increases, so this terminates.
pub fn greedy_sm_proof(lat: &Lattice, multiset: &[usize], d: u64) -> Result<Vec<(usize, usize)>> {
    let mut ms = multiset.to_vec();
    ms.sort();
    let mut steps = vec![];
    let limit = 10_000;
    while let Some(&(g, x, y)) = successors(lat, &ms).first() {
        if lat.is_distributive() && g <= 0 {
            return Err(Error::Invariant("progress measure did not increase".into()));
        }
        ms = step_ms(lat, &ms, x, y);
        steps.push((x, y));
        if steps.len() > limit {
            return Err(Error::Budget(limit as u64));
        }
    }
    if ms.iter().filter(|&&e| e == lat.top).count() as u64 >= d {
        Ok(steps)
    } else {
        Err(Error::NoProof("greedy stepping ended without d copies of 1̂".into()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelTrace {
    /// Final label set per slot (retired slots included).
    pub labels: Vec<BTreeSet<u32>>,
    /// 𝒜(X,Y) per step.
    pub intersections: Vec<BTreeSet<u32>>,
    pub nlabels: u32,
    pub good: bool,
    pub failure: Option<(usize, String)>,
}

struct LabelState {
    labels: Vec<BTreeSet<u32>>,
    next: u32,
}

impl LabelState {
    fn new(n: usize) -> LabelState {
        LabelState { labels: vec![BTreeSet::from([1]); n], next: 2 }
    }

    /// Applies one step on slots (a,b) producing (meet, join); returns 𝒜.
    fn step(&mut self, a: usize, b: usize, meet_is_bottom: bool) -> BTreeSet<u32> {
        let inter: BTreeSet<u32> = self.labels[a].intersection(&self.labels[b]).copied().collect();
        let mut f: HashMap<u32, u32> = HashMap::new();
        if !meet_is_bottom {
            for &j in &inter {
                f.insert(j, self.next);
                self.next += 1;
            }
        }
        for l in self.labels.iter_mut() {
            let add: Vec<u32> = l.iter().filter_map(|j| f.get(j).copied()).collect();
            l.extend(add);
        }
        self.labels.push(f.values().copied().collect());
        self.labels.push(inter.clone());
        inter
    }
}

pub fn check_goodness(lat: &Lattice, proof: &SmProof) -> Result<LabelTrace> {
    let r = proof.replay(lat)?;
    let mut st = LabelState::new(proof.initial.len());
    let mut inters = vec![];
    let mut failure = None;
    for (k, &(a, b)) in proof.steps.iter().enumerate() {
        let meet = r.elems[proof.initial.len() + 2 * k];
        let inter = st.step(a, b, meet == lat.bottom);
        if inter.is_empty() && failure.is_none() {
            failure = Some((k, format!("A({},{}) is empty", lat.label(r.elems[a]), lat.label(r.elems[b]))));
        }
        inters.push(inter);
    }
    let at_top: BTreeSet<u32> =
        (0..r.elems.len()).filter(|&s| r.elems[s] == lat.top).flat_map(|s| st.labels[s].iter().copied()).collect();
    if failure.is_none() {
        let missing: Vec<u32> = (1..st.next).filter(|l| !at_top.contains(l)).collect();
        if !missing.is_empty() {
            failure = Some((proof.steps.len(), format!("labels {missing:?} never reach 1̂")));
        }
    }
    Ok(LabelTrace { labels: st.labels, intersections: inters, nlabels: st.next - 1, good: failure.is_none(), failure })
}

/// Depth-first search for a good slot-level proof, skipping steps with empty 𝒜.
pub fn find_good_proof(lat: &Lattice, initial: &[usize], d: u64, budget: u64) -> Result<Option<SmProof>> {
    struct S<'a> {
        lat: &'a Lattice,
        d: u64,
        budget: u64,
        nodes: u64,
    }
    fn go(
        s: &mut S,
        elems: &mut Vec<usize>,
        alive: &mut Vec<bool>,
        st: &mut LabelState,
        steps: &mut Vec<(usize, usize)>,
    ) -> Option<Vec<(usize, usize)>> {
        s.nodes += 1;
        if s.nodes > s.budget {
            return None;
        }
        let lat = s.lat;
        let live: Vec<usize> = (0..elems.len()).filter(|&i| alive[i]).collect();
        let mut cands = vec![];
        let mut seen = HashSet::new();
        for (i, &a) in live.iter().enumerate() {
            for &b in &live[i + 1..] {
                let (x, y) = (elems[a], elems[b]);
                if lat.comparable(x, y) || st.labels[a].is_disjoint(&st.labels[b]) {
                    continue;
                }
                let key = ((x, st.labels[a].clone()), (y, st.labels[b].clone()));
                if seen.insert(key) {
                    cands.push((gain(lat, x, y), a, b));
                }
            }
        }
        if cands.is_empty() {
            let fin: Vec<usize> = live.iter().map(|&i| elems[i]).collect();
            if !is_chain(lat, &fin) || (fin.iter().filter(|&&e| e == lat.top).count() as u64) < s.d {
                return None;
            }
            let at_top: BTreeSet<u32> =
                (0..elems.len()).filter(|&i| elems[i] == lat.top).flat_map(|i| st.labels[i].iter().copied()).collect();
            return (1..st.next).all(|l| at_top.contains(&l)).then(|| steps.clone());
        }
        cands.sort_by(|p, q| q.0.cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
        for (_, a, b) in cands {
            let (x, y) = (elems[a], elems[b]);
            let saved_labels = st.labels.clone();
            let saved_next = st.next;
            st.step(a, b, lat.meet(x, y) == lat.bottom);
            alive[a] = false;
            alive[b] = false;
            elems.push(lat.meet(x, y));
            elems.push(lat.join(x, y));
            alive.extend([true, true]);
            steps.push((a, b));
            if let Some(p) = go(s, elems, alive, st, steps) {
                return Some(p);
            }
            steps.pop();
            elems.truncate(elems.len() - 2);
            alive.truncate(alive.len() - 2);
            alive[a] = true;
            alive[b] = true;
            st.labels = saved_labels;
            st.next = saved_next;
        }
        None
    }
    let mut s = S { lat, d, budget, nodes: 0 };
    let mut elems = initial.to_vec();
    let mut alive = vec![true; elems.len()];
    let mut st = LabelState::new(elems.len());
    let found = go(&mut s, &mut elems, &mut alive, &mut st, &mut vec![]);
    if found.is_none() && s.nodes > budget {
        return Err(Error::Budget(budget));
    }
    Ok(found.map(|steps| SmProof { initial: initial.to_vec(), d, steps }))
}

/// Multiset of ⟨w_j = q_j/d⟩: R_j copied q_j times; also returns the relation per copy.
pub fn multiset_of(rels: &[usize], w: &[Q]) -> (Vec<usize>, Vec<usize>, u64) {
    let d = to_u64(&lcm_denoms(w.iter()));
    let mut ms = vec![];
    let mut owner = vec![];
    for (j, wj) in w.iter().enumerate() {
        let qj = wj * qi(d as i64);
        for _ in 0..to_u64(&qj.to_integer()) {
            ms.push(rels[j]);
            owner.push(j);
        }
    }
    (ms, owner, d)
}

#[derive(Clone, Debug, Serialize)]
pub struct SmBound {
    #[serde(with = "crate::rational::serde_q")]
    pub bound: Q,
    #[serde(with = "crate::rational::serde_qvec")]
    pub w: Vec<Q>,
    pub steps: Vec<(usize, usize)>,
}

/// Minimum Σ w_j n_j over candidate dual vertices whose inequality has an SM proof.
/// Candidates: the LLP optimal dual and every valid co-atomic cover vertex.
pub fn sm_bound(lat: &Lattice, rels: &[usize], n: &[Q], budget: u64) -> Result<Option<SmBound>> {
    let mut cands: Vec<Vec<Q>> = vec![];
    if let Some(sol) = solve_llp(lat, rels, n)? {
        cands.push(sol.cert.c);
    }
    let names: Vec<String> = (0..rels.len()).map(|j| format!("R{j}")).collect();
    for w in cover_vertices(&coatomic_hypergraph(lat, rels, &names))? {
        if !cands.contains(&w) && check_output_inequality(lat, rels, &w)?.valid {
            cands.push(w);
        }
    }
    let mut best: Option<SmBound> = None;
    for w in cands {
        let val = w.iter().zip(n).fold(zero(), |acc, (a, b)| acc + a * b);
        if best.as_ref().is_some_and(|b| b.bound <= val) {
            continue;
        }
        let (ms, _, d) = multiset_of(rels, &w);
        if let SearchOutcome::Found(steps) = find_sm_proof(lat, &ms, d, budget) {
            best = Some(SmBound { bound: val, w, steps });
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct SmaPlan {
    #[serde(with = "crate::rational::serde_qvec")]
    pub h: LatticeFunction,
    #[serde(with = "crate::rational::serde_qvec")]
    pub w: Vec<Q>,
    #[serde(with = "crate::rational::serde_qvec")]
    pub n: Vec<Q>,
    pub proof: SmProof,
    /// Relation index per initial copy.
    pub owner: Vec<usize>,
    /// True when planning fell back to uniform relation bounds.
    pub uniform: bool,
}

impl SmaPlan {
    pub fn budget(&self) -> Q {
        self.h.iter().max().cloned().unwrap_or_else(zero)
    }
}

fn plan_with(lat: &Lattice, rels: &[usize], n: &[Q], budget: u64) -> Result<Option<SmaPlan>> {
    let llp = solve_llp(lat, rels, n)?.ok_or(Error::Unbounded)?;
    let cl = solve_cllp(lat, &relation_pairs(lat, rels, n), false)?.ok_or(Error::Unbounded)?;
    if cl.opt != llp.opt {
        return Err(Error::Invariant("CLLP and LLP optima differ".into()));
    }
    let w = llp.cert.c;
    let (ms, owner, d) = multiset_of(rels, &w);
    let Some(proof) = find_good_proof(lat, &ms, d, budget).or_else(|e| match e {
        Error::Budget(_) => Ok(None),
        e => Err(e),
    })?
    else {
        return Ok(None);
    };
    let h = cl.h;
    for (x, y) in proof.element_steps(lat) {
        if &h[x] + &h[y] != &h[lat.meet(x, y)] + &h[lat.join(x, y)] {
            return Err(Error::Invariant(format!("h* is not tight on step ({},{})", lat.label(x), lat.label(y))));
        }
    }
    Ok(Some(SmaPlan { h, w, n: n.to_vec(), proof, owner, uniform: false }))
}

/// Optimal primal/dual pair plus a good proof of the dual inequality. Falls
/// back to uniform bounds max n_j when the optimal dual has no good proof.
pub fn plan_sma(lat: &Lattice, rels: &[usize], n: &[Q], budget: u64) -> Result<SmaPlan> {
    if let Some(p) = plan_with(lat, rels, n, budget)? {
        return Ok(p);
    }
    let m = max_q(n.iter()).unwrap_or_else(zero);
    let un = vec![m; n.len()];
    if un != n {
        if let Some(mut p) = plan_with(lat, rels, &un, budget)? {
            p.uniform = true;
            return Ok(p);
        }
    }
    Err(Error::NoProof("no good SM proof for the optimal dual".into()))
}

#[derive(Debug)]
pub struct SmaRun {
    pub table: Table,
    pub ops: u64,
    /// Number of cache tables checked against 2^{h*}.
    pub cache_checks: u64,
}

/// Runs SMA. With `oracle`, also checks after each step that every output
/// tuple lies in the join of some label subquery.
pub fn run_sma(db: &Database, lat: &Lattice, plan: &SmaPlan, oracle: Option<&Table>) -> Result<SmaRun> {
    let trace = check_goodness(lat, &plan.proof)?;
    if let Some((step, reason)) = trace.failure {
        return Err(Error::NotGood { step, reason });
    }
    let q = &db.query;
    let ex = Expander::new(db)?;
    let h = &plan.h;
    let width = q.nvars();
    let mut ops = 0u64;
    let mut checks = 0u64;
    let cache_ok = |t: &Table, b: usize, checks: &mut u64| -> Result<()> {
        *checks += 1;
        if !le_pow2(t.len() as u64, &h[b]) {
            return Err(Error::Invariant(format!(
                "cache bound: |T({})| = {} > 2^{}",
                lat.label(b),
                t.len(),
                fmt_q(&h[b])
            )));
        }
        Ok(())
    };
    let expanded: Vec<Table> = db.tables.iter().map(|t| ex.expand(t)).collect();
    let mut elems: Vec<usize> = plan.proof.initial.clone();
    let mut cache: Vec<Table> = plan.owner.iter().map(|&j| expanded[j].clone()).collect();
    for (s, t) in cache.iter().enumerate() {
        if lat.set(elems[s]) != t.vars {
            return Err(Error::Plan("initial copy does not match its relation".into()));
        }
        ops += t.len() as u64;
        cache_ok(t, elems[s], &mut checks)?;
    }
    let mut labels = LabelState::new(elems.len());
    let check_invariant = |cache: &[Table], labels: &LabelState| -> Result<()> {
        let Some(o) = oracle else { return Ok(()) };
        for t in &o.rows {
            let covered = (1..labels.next).any(|l| {
                (0..cache.len())
                    .filter(|&s| labels.labels[s].contains(&l))
                    .all(|s| cache[s].contains_key(cache[s].vars, &key_of(t, cache[s].vars)))
            });
            if !covered {
                return Err(Error::Invariant("an output tuple escaped every label subquery".into()));
            }
        }
        Ok(())
    };
    check_invariant(&cache, &labels)?;
    for &(a, b) in &plan.proof.steps {
        let (x, y) = (elems[a], elems[b]);
        let z = lat.meet(x, y);
        let j = lat.join(x, y);
        let zs = lat.set(z);
        let (tx, ty) = (&cache[a], &cache[b]);
        let thr = &h[y] - &h[z];
        // Lite / Heavy over Π_Z T(Y)
        let iy = ty.index(zs);
        ops += ty.len() as u64;
        let mut heavy: HashSet<Vec<u32>> = HashSet::new();
        for (k, rows) in iy.iter() {
            if !le_pow2(rows.len() as u64, &thr) {
                heavy.insert(k.clone());
            }
        }
        let ix = tx.index(zs);
        ops += tx.len() as u64;
        let meet_rows = ix
            .keys()
            .filter(|k| heavy.contains(*k) && iy.contains_key(*k))
            .map(|k| {
                let rep = &tx.rows[ix[k][0] as usize];
                restrict(rep, zs)
            })
            .collect();
        let tmeet = Table::new(zs, width, meet_rows);
        let js = lat.set(j);
        let have = tx.vars | ty.vars;
        let mut join_rows = vec![];
        for r in &tx.rows {
            let key = key_of(r, zs);
            if heavy.contains(&key) {
                continue;
            }
            let Some(bucket) = iy.get(&key) else { continue };
            for &i in bucket {
                ops += 1;
                let mut row = r.to_vec();
                for v in bits(ty.vars) {
                    row[v] = ty.rows[i as usize][v];
                }
                if ex.expand_row(&mut row, have) && ex.check_fds(&row, js) {
                    join_rows.push(restrict(&row, js));
                }
            }
        }
        let tjoin = Table::new(js, width, join_rows);
        cache_ok(&tmeet, z, &mut checks)?;
        cache_ok(&tjoin, j, &mut checks)?;
        ops += (tmeet.len() + tjoin.len()) as u64;
        labels.step(a, b, z == lat.bottom);
        elems.push(z);
        elems.push(j);
        cache.push(tmeet);
        cache.push(tjoin);
        check_invariant(&cache, &labels)?;
    }
    let r = plan.proof.replay(lat)?;
    let tops: Vec<Table> =
        (0..elems.len()).filter(|&s| r.alive[s] && elems[s] == lat.top).map(|s| cache[s].clone()).collect();
    let union = Table::union_all(lat.set(lat.top), width, tops);
    ops += union.len() as u64;
    let table = ex.finalize(&union);
    Ok(SmaRun { table, ops, cache_checks: checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{brute_force_join, DEFAULT_ORACLE_BUDGET};
    use crate::fixtures;
    use crate::gen;
    use crate::normality::relation_elements;
    use crate::rational::log2_upper;
    use rand::SeedableRng;

    fn els(lat: &Lattice, s: &[&str]) -> Vec<usize> {
        s.iter().map(|x| lat.el(x)).collect()
    }

    #[test]
    fn redundant_example_sequence() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let lat = Lattice::boolean(&names);
        let init = els(&lat, &["abc", "abc", "abc", "abd", "acd", "bcd"]);
        let e = |s: &str| lat.el(s);
        let steps = [(e("abc"), e("abd")), (e("abc"), e("acd")), (e("abc"), e("bcd")), (e("ab"), e("ac")), (e("a"), e("bc"))];
        let p = SmProof::from_element_steps(&lat, init.clone(), 3, &steps).unwrap();
        assert!(p.is_complete(&lat).unwrap());
        let mut fin = p.replay(&lat).unwrap().final_multiset();
        fin.retain(|&x| x != lat.top);
        assert_eq!(fin, vec![lat.bottom, e("abc"), e("abc")]);
        let g = greedy_sm_proof(&lat, &init, 3).unwrap();
        assert!(SmProof::from_element_steps(&lat, init, 3, &g).unwrap().is_complete(&lat).unwrap());
    }

    #[test]
    fn bad_for_chain_proof_is_good() {
        let lat = Lattice::from_query(&fixtures::bad_for_chain()).unwrap();
        let e = |s: &str| lat.el(s);
        let init = els(&lat, &["abc", "ade", "bdf", "cef"]);
        let steps = [(e("abc"), e("ade")), (e("bdf"), e("cef")), (e("a"), e("f"))];
        let p = SmProof::from_element_steps(&lat, init.clone(), 3, &steps).unwrap();
        assert!(p.is_complete(&lat).unwrap());
        let t = check_goodness(&lat, &p).unwrap();
        assert!(t.good);
        assert_eq!(t.nlabels, 4);
        assert_eq!(t.labels[4], BTreeSet::from([2, 4]));
        match find_sm_proof(&lat, &init, 3, DEFAULT_SEARCH_BUDGET) {
            SearchOutcome::Found(s) => assert_eq!(s.len(), 3),
            o => panic!("{o:?}"),
        }
    }

    #[test]
    fn non_tree_proofs() {
        let lat = Lattice::from_query(&fixtures::non_tree()).unwrap();
        let e = |s: &str| lat.el(s);
        let (x, y, z, u) = (e("bx"), e("by"), e("cz"), e("u"));
        let (a, b, c, d) = (e("bcxy"), e("b"), e("c"), e("bu"));
        assert_eq!(lat.join(x, y), a);
        assert_eq!(lat.meet(x, y), b);
        assert_eq!(lat.meet(a, z), c);
        assert_eq!(lat.join(b, u), d);
        let init = vec![x, y, z, u];
        let bad = SmProof::from_element_steps(&lat, init.clone(), 2, &[(x, y), (a, z), (b, u), (c, d)]).unwrap();
        assert!(bad.is_complete(&lat).unwrap());
        let t = check_goodness(&lat, &bad).unwrap();
        assert!(!t.good);
        assert_eq!(t.failure.as_ref().unwrap().0, 3);
        assert_eq!(t.labels[4], BTreeSet::from([2]));
        let good = SmProof::from_element_steps(&lat, init, 2, &[(x, z), (y, u)]).unwrap();
        assert!(good.is_complete(&lat).unwrap());
        assert!(check_goodness(&lat, &good).unwrap().good);
    }

    #[test]
    fn bad_sm_proof_fixture() {
        let lat = Lattice::from_query(&fixtures::bad_sm_proof()).unwrap();
        let e = |s: &str| lat.el(s);
        let (x, y, z, w) = (e("ax"), e("ay"), e("bz"), e("bw"));
        let (a, b, c, d) = (e("a"), e("b"), e("axy"), e("bzw"));
        let p = SmProof::from_element_steps(&lat, vec![x, y, z, w], 2, &[(x, y), (z, w), (a, d), (b, c)]).unwrap();
        assert!(p.is_complete(&lat).unwrap());
        let t = check_goodness(&lat, &p).unwrap();
        assert!(!t.good);
        assert!(t.failure.unwrap().1.contains('1'));
    }

    #[test]
    fn no_smp_has_no_proof() {
        let lat = Lattice::from_query(&fixtures::no_smp()).unwrap();
        let init = els(&lat, &["pqx", "pry", "qrz"]);
        assert!(matches!(find_sm_proof(&lat, &init, 2, DEFAULT_SEARCH_BUDGET), SearchOutcome::Nonexistent { .. }));
    }

    #[test]
    fn bounds() {
        let qy = fixtures::bad_for_chain();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = relation_elements(&lat, &qy);
        let b = sm_bound(&lat, &rels, &vec![qi(3); 4], DEFAULT_SEARCH_BUDGET).unwrap().unwrap();
        assert_eq!(b.bound, qi(4));
        let qy = fixtures::triangle();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = relation_elements(&lat, &qy);
        let b = sm_bound(&lat, &rels, &vec![qi(2); 3], DEFAULT_SEARCH_BUDGET).unwrap().unwrap();
        assert_eq!(b.bound, qi(3));
        let qy = fixtures::no_smp();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = relation_elements(&lat, &qy);
        let b = sm_bound(&lat, &rels, &vec![qi(2); 3], DEFAULT_SEARCH_BUDGET).unwrap().unwrap();
        assert_eq!(b.bound, qi(4));
        assert_eq!(solve_llp(&lat, &rels, &vec![qi(2); 3]).unwrap().unwrap().opt, qi(3));
    }

    #[test]
    fn d_cover_preserved_on_distributive() {
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let lat = Lattice::boolean(&names);
        let init = els(&lat, &["abc", "abc", "abc", "abd", "acd", "bcd"]);
        let before = coatom_cover_counts(&lat, &init);
        let steps = greedy_sm_proof(&lat, &init, 3).unwrap();
        let mut ms = init.clone();
        for (x, y) in steps {
            ms = step_ms(&lat, &ms, x, y);
            let now = coatom_cover_counts(&lat, &ms);
            assert!(now.iter().zip(&before).all(|(a, b)| a >= b));
        }
    }

    fn n_of(db: &Database) -> Vec<Q> {
        db.cardinalities().iter().map(|&c| log2_upper(c, 1 << 24)).collect()
    }

    #[test]
    fn sma_matches_oracle_on_random_instances() {
        let qy = fixtures::bad_for_chain();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = relation_elements(&lat, &qy);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let db = gen::random_fd_instance(&qy, 40, 3, &mut rng).unwrap();
            let plan = plan_sma(&lat, &rels, &n_of(&db), 200_000).unwrap();
            let oracle = brute_force_join(&db, DEFAULT_ORACLE_BUDGET).unwrap().table;
            let run = run_sma(&db, &lat, &plan, Some(&oracle)).unwrap();
            assert_eq!(run.table, oracle);
        }
    }

    #[test]
    fn sma_refuses_bad_proof_and_handles_empty() {
        let qy = fixtures::bad_for_chain();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = relation_elements(&lat, &qy);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let db = gen::random_fd_instance(&qy, 20, 3, &mut rng).unwrap();
        let mut plan = plan_sma(&lat, &rels, &n_of(&db), 200_000).unwrap();
        let e = |s: &str| lat.el(s);
        plan.proof = SmProof::from_element_steps(&lat, plan.proof.initial.clone(), plan.proof.d, &[(e("abc"), e("ade"))])
            .unwrap_or(plan.proof);
        if !check_goodness(&lat, &plan.proof).unwrap().good {
            assert!(matches!(run_sma(&db, &lat, &plan, None), Err(Error::NotGood { .. })));
        }
        let empty = crate::relation::Database::new(
            qy.clone(),
            db.tables.iter().enumerate().map(|(i, t)| if i == 0 { Table::empty(t.vars, t.width) } else { t.clone() }).collect(),
            db.udfs.clone(),
            db.dict.lock().unwrap().clone(),
        )
        .unwrap();
        let plan = plan_sma(&lat, &rels, &n_of(&empty), 200_000).unwrap();
        assert!(run_sma(&empty, &lat, &plan, None).unwrap().table.is_empty());
    }
}
