//! Chains, chain hypergraphs and bounds, chain selection and the Chain Algorithm.

use serde::Serialize;

use crate::engine::Expander;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::normality::{fractional_edge_cover, Hypergraph};
use crate::query::bits;
use crate::rational::Q;
use crate::relation::{blank, key_of, Database, Table};

/// Element ids C_0 = 0̂ ≺ … ≺ C_k = 1̂.
pub type Chain = Vec<usize>;

pub fn validate_chain(lat: &Lattice, chain: &[usize]) -> Result<()> {
    if chain.first() != Some(&lat.bottom) || chain.last() != Some(&lat.top) || chain.len() < 2 {
        return Err(Error::Plan("a chain must run from 0̂ to 1̂".into()));
    }
    if chain.windows(2).any(|w| !lat.lt(w[0], w[1])) {
        return Err(Error::Plan("chain is not strictly increasing".into()));
    }
    Ok(())
}

/// Levels i ∈ 1..=k with S ∧ C_i ≠ S ∧ C_{i−1}.
pub fn footprint(lat: &Lattice, chain: &[usize], s: usize) -> Vec<usize> {
    (1..chain.len()).filter(|&i| lat.meet(s, chain[i]) != lat.meet(s, chain[i - 1])).collect()
}

/// Vertices are chain levels 1..=k.
pub fn chain_hypergraph(lat: &Lattice, chain: &[usize], rels: &[usize], names: &[String]) -> Hypergraph {
    Hypergraph {
        vertices: (1..chain.len()).collect(),
        edges: rels.iter().zip(names).map(|(&r, n)| (n.clone(), footprint(lat, chain, r))).collect(),
    }
}

/// First (relation index, level) violating C_{i−1} ∨ (R_j ∧ C_i) = C_i.
pub fn good_violation(lat: &Lattice, chain: &[usize], rels: &[usize]) -> Option<(usize, usize)> {
    for (j, &r) in rels.iter().enumerate() {
        for i in footprint(lat, chain, r) {
            if lat.join(chain[i - 1], lat.meet(r, chain[i])) != chain[i] {
                return Some((j, i));
            }
        }
    }
    None
}

pub fn is_good_chain(lat: &Lattice, chain: &[usize], rels: &[usize]) -> bool {
    good_violation(lat, chain, rels).is_none()
}

fn usable(lat: &Lattice, chain: &[usize], rels: &[usize]) -> bool {
    is_good_chain(lat, chain, rels) && (1..chain.len()).all(|i| rels.iter().any(|&r| footprint(lat, chain, r).contains(&i)))
}

/// Greedy over join-irreducibles below some input: each step picks X with
/// Y ≺ Y ∨ X and Y ∨ X minimal (lowest id on ties).
pub fn select_chain_shearer(lat: &Lattice, rels: &[usize]) -> Result<Chain> {
    let ji: Vec<usize> =
        lat.join_irreducibles.iter().copied().filter(|&x| rels.iter().any(|&r| lat.leq(x, r))).collect();
    let mut chain = vec![lat.bottom];
    let mut y = lat.bottom;
    while y != lat.top {
        let cands: Vec<usize> = ji.iter().map(|&x| lat.join(y, x)).filter(|&c| c != y).collect();
        let next = cands
            .iter()
            .copied()
            .filter(|&c| !cands.iter().any(|&d| lat.lt(d, c)))
            .min()
            .ok_or_else(|| Error::Plan("inputs do not join to 1̂".into()))?;
        chain.push(next);
        y = next;
    }
    if !usable(lat, &chain, rels) {
        return Err(Error::Invariant("greedy chain is not good or has an isolated level".into()));
    }
    Ok(chain)
}

/// Mirror of the greedy over meet-irreducibles: descend from 1̂ by meets, taking
/// the maximal candidate first; backtracks when the resulting chain is not good
/// or leaves a level uncovered.
pub fn select_chain_dual(lat: &Lattice, rels: &[usize]) -> Result<Chain> {
    fn go(lat: &Lattice, rels: &[usize], down: &mut Vec<usize>, budget: &mut u32) -> Option<Chain> {
        let y = *down.last().unwrap();
        if y == lat.bottom {
            let chain: Chain = down.iter().rev().copied().collect();
            return usable(lat, &chain, rels).then_some(chain);
        }
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        let mut cands: Vec<usize> = lat.meet_irreducibles.iter().map(|&x| lat.meet(y, x)).filter(|&c| c != y).collect();
        cands.sort();
        cands.dedup();
        // maximal candidates first, then by decreasing id
        let all = cands.clone();
        cands.sort_by_key(|&c| (all.iter().any(|&d| lat.lt(c, d)), std::cmp::Reverse(lat.set(c).count_ones()), c));
        for c in cands {
            down.push(c);
            if let Some(ch) = go(lat, rels, down, budget) {
                return Some(ch);
            }
            down.pop();
        }
        None
    }
    let mut budget = 100_000;
    go(lat, rels, &mut vec![lat.top], &mut budget).ok_or_else(|| Error::Plan("no usable meet-irreducible chain".into()))
}

pub const CHAIN_ENUM_CAP: usize = 200_000;

/// Every chain from 0̂ to 1̂ (maximal or not).
pub fn all_chains(lat: &Lattice) -> Result<Vec<Chain>> {
    let mut out = vec![];
    let mut stack = vec![vec![lat.bottom]];
    while let Some(c) = stack.pop() {
        let last = *c.last().unwrap();
        if last == lat.top {
            out.push(c);
            if out.len() > CHAIN_ENUM_CAP {
                return Err(Error::Cap(format!("more than {CHAIN_ENUM_CAP} chains")));
            }
            continue;
        }
        for y in (0..lat.len()).rev() {
            if lat.lt(last, y) {
                let mut d = c.clone();
                d.push(y);
                stack.push(d);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainBound {
    pub chain: Chain,
    #[serde(with = "crate::rational::serde_qvec")]
    pub weights: Vec<Q>,
    #[serde(with = "crate::rational::serde_q")]
    pub bound: Q,
}

/// Fractional edge cover of the chain hypergraph; `None` on an isolated level.
pub fn chain_bound(lat: &Lattice, chain: &[usize], rels: &[usize], n: &[Q]) -> Result<Option<ChainBound>> {
    let names: Vec<String> = (0..rels.len()).map(|j| format!("R{j}")).collect();
    let hg = chain_hypergraph(lat, chain, rels, &names);
    Ok(fractional_edge_cover(&hg, n)?.map(|(weights, bound)| ChainBound { chain: chain.to_vec(), weights, bound }))
}

/// Minimum chain bound over all good chains.
pub fn best_chain_exhaustive(lat: &Lattice, rels: &[usize], n: &[Q]) -> Result<ChainBound> {
    let mut best: Option<ChainBound> = None;
    for c in all_chains(lat)? {
        if !is_good_chain(lat, &c, rels) {
            continue;
        }
        if let Some(b) = chain_bound(lat, &c, rels, n)? {
            if best.as_ref().map_or(true, |x| b.bound < x.bound) {
                best = Some(b);
            }
        }
    }
    best.ok_or_else(|| Error::Plan("no good chain without isolated levels".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainMode {
    Shearer,
    Dual,
    Exhaustive,
}

pub fn select_chain(lat: &Lattice, rels: &[usize], n: &[Q], mode: ChainMode) -> Result<ChainBound> {
    let chain = match mode {
        ChainMode::Shearer => select_chain_shearer(lat, rels)?,
        ChainMode::Dual => select_chain_dual(lat, rels)?,
        ChainMode::Exhaustive => return best_chain_exhaustive(lat, rels, n),
    };
    chain_bound(lat, &chain, rels, n)?.ok_or_else(|| Error::Invariant("selected chain has an isolated level".into()))
}

/// Footprint condition e(X ∨ Y) ⊆ e(X) ∪ e(Y), with the chain good for every
/// element and footprints monotone.
pub fn chain_tightness_check(lat: &Lattice, chain: &[usize]) -> bool {
    let all: Vec<usize> = (0..lat.len()).collect();
    if !is_good_chain(lat, chain, &all) {
        return false;
    }
    let e: Vec<Vec<usize>> = all.iter().map(|&x| footprint(lat, chain, x)).collect();
    for x in 0..lat.len() {
        for y in 0..lat.len() {
            if lat.leq(x, y) && !e[x].iter().all(|i| e[y].contains(i)) {
                return false;
            }
            let j = lat.join(x, y);
            if !e[j].iter().all(|i| e[x].contains(i) || e[y].contains(i)) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug)]
pub struct ChainRun {
    pub table: Table,
    pub probes: u64,
    pub emitted: u64,
    /// |Q_i| per level.
    pub level_sizes: Vec<usize>,
}

impl ChainRun {
    pub fn ops(&self) -> u64 {
        self.probes + self.emitted
    }
}

/// Breadth-first Chain Algorithm. Every level extends each tuple of Q_{i−1}
/// through the covering relation with the fewest matches, expands, and checks
/// the other covering relations.
pub fn run_chain(db: &Database, lat: &Lattice, chain: &[usize]) -> Result<ChainRun> {
    validate_chain(lat, chain)?;
    let q = &db.query;
    let ex = Expander::new(db)?;
    let rels: Vec<usize> = q.relations.iter().map(|r| lat.closed(r.set())).collect();
    if let Some((j, i)) = good_violation(lat, chain, &rels) {
        return Err(Error::Plan(format!("chain is not good for {} at level {i}", q.relations[j].name)));
    }
    if lat.set(lat.bottom) != 0 {
        return Err(Error::Plan("0̂ must be the empty set".into()));
    }
    let width = q.nvars();
    let expanded: Vec<Table> = db.tables.iter().map(|t| ex.expand(t)).collect();
    let mut cur = Table::new(0, width, vec![blank(width).into_boxed_slice()]);
    let (mut probes, mut emitted) = (0u64, 0u64);
    let mut level_sizes = vec![];
    for i in 1..chain.len() {
        let (lo, hi) = (lat.set(chain[i - 1]), lat.set(chain[i]));
        let cover: Vec<usize> = (0..rels.len()).filter(|&j| lat.meet(rels[j], chain[i]) != lat.meet(rels[j], chain[i - 1])).collect();
        if cover.is_empty() {
            return Err(Error::Plan(format!("level {i} is not covered by any relation")));
        }
        // Π_{R_j ∧ C_i}(R_j) keyed on R_j ∧ C_{i−1}
        let parts: Vec<(u32, u32, Table)> = cover
            .iter()
            .map(|&j| {
                let to = expanded[j].vars & hi;
                (to, expanded[j].vars & lo, expanded[j].project(to))
            })
            .collect();
        let mut next = vec![];
        for t in &cur.rows {
            let mut best: Option<(usize, usize)> = None;
            for (p, (_, key, tab)) in parts.iter().enumerate() {
                probes += 1;
                let d = tab.degree(*key, &key_of(t, *key));
                if best.map_or(true, |b| d < b.1) {
                    best = Some((p, d));
                }
            }
            let (bp, bd) = best.unwrap();
            if bd == 0 {
                continue;
            }
            let (to, key, tab) = &parts[bp];
            let ix = tab.index(*key);
            for &r in &ix[&key_of(t, *key)] {
                emitted += 1;
                let mut row = t.to_vec();
                for v in bits(*to) {
                    row[v] = tab.rows[r as usize][v];
                }
                if !ex.expand_row(&mut row, lo | to) {
                    continue;
                }
                let ok = parts
                    .iter()
                    .enumerate()
                    .all(|(p, (pto, _, ptab))| p == bp || ptab.contains_key(*pto, &key_of(&row, *pto)));
                probes += parts.len() as u64 - 1;
                if ok && ex.check_fds(&row, hi) {
                    next.push(crate::relation::restrict(&row, hi));
                }
            }
        }
        cur = Table::new(hi, width, next);
        level_sizes.push(cur.len());
    }
    let table = ex.finalize(&cur);
    Ok(ChainRun { table, probes, emitted, level_sizes })
}
