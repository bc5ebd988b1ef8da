//! CSM proof sequences from dual CLLP certificates, degree partitioning, and CSMA.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use num::traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::bounds::{check_dual, solve_cllp, DualCert, Pair};
use crate::engine::Expander;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::query::{bits, VarSet};
use crate::rational::{ceil_log2, fmt_q, lcm_denoms, le_pow2, log2_upper, qi, to_u64, zero, Q};
use crate::relation::{key_of, restrict, Database, Table};

/// Conditional closure: down-closure plus composition along pairs with c > 0.
pub fn conditional_closure(lat: &Lattice, k: &[usize], pairs: &[Pair], cert: &DualCert) -> Vec<usize> {
    closure_with_reasons(lat, k, pairs, cert).0
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Reason {
    Seed,
    Down(usize),
    Compose(usize),
    Sm(usize, usize),
}

fn closure_with_reasons(
    lat: &Lattice,
    k: &[usize],
    pairs: &[Pair],
    cert: &DualCert,
) -> (Vec<usize>, HashMap<usize, Reason>) {
    let mut reasons: HashMap<usize, Reason> = k.iter().map(|&e| (e, Reason::Seed)).collect();
    extend_closure(lat, pairs, cert, &mut reasons, k.to_vec());
    let mut v: Vec<usize> = reasons.keys().copied().collect();
    v.sort();
    (v, reasons)
}

fn extend_closure(lat: &Lattice, pairs: &[Pair], cert: &DualCert, reasons: &mut HashMap<usize, Reason>, seed: Vec<usize>) {
    let mut queue: VecDeque<usize> = seed.into();
    while let Some(y) = queue.pop_front() {
        for x in 0..lat.len() {
            if lat.lt(x, y) && !reasons.contains_key(&x) {
                reasons.insert(x, Reason::Down(y));
                queue.push_back(x);
            }
        }
        for (p, c) in pairs.iter().zip(&cert.c) {
            if p.x == y && c.is_positive() && !reasons.contains_key(&p.y) {
                reasons.insert(p.y, Reason::Compose(y));
                queue.push_back(p.y);
            }
        }
    }
}

/// A pair (A,B) of closure elements with s_{A,B} > 0 whose join leaves the closure.
/// Prefers the largest |A|+|B|, then the smallest ids.
pub fn find_violating_pair(lat: &Lattice, kbar: &[usize], cert: &DualCert) -> Result<(usize, usize)> {
    let inside: HashSet<usize> = kbar.iter().copied().collect();
    let size = |e: usize| lat.set(e).count_ones();
    lat.incomparable_pairs()
        .into_iter()
        .zip(&cert.s)
        .filter(|((a, b), s)| {
            s.is_positive() && inside.contains(a) && inside.contains(b) && !inside.contains(&lat.join(*a, *b))
        })
        .map(|(p, _)| p)
        .max_by(|p, q| (size(p.0) + size(p.1)).cmp(&(size(q.0) + size(q.1))).then(q.cmp(p)))
        .ok_or_else(|| Error::Invariant("closure is stuck below 1̂: certificate is not dual feasible".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RuleKind {
    /// h(Y) → h(Y|X) + h(X)
    Cd { x: usize, y: usize },
    /// h(Y|X) + h(X) → h(Y)
    Cc { x: usize, y: usize },
    /// h(A) + h(B|A∧B) → h(A∨B)
    Sm { a: usize, b: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct CsmRule {
    pub kind: RuleKind,
    pub t: u64,
}

/// Term h(y|x); unconditional terms have x = 0̂.
type Term = (usize, usize);

impl RuleKind {
    fn inputs(&self, lat: &Lattice) -> Vec<Term> {
        match *self {
            RuleKind::Cd { y, .. } => vec![(lat.bottom, y)],
            RuleKind::Cc { x, y } => vec![(x, y), (lat.bottom, x)],
            RuleKind::Sm { a, b } => vec![(lat.bottom, a), (lat.meet(a, b), b)],
        }
    }

    fn outputs(&self, lat: &Lattice) -> Vec<Term> {
        match *self {
            RuleKind::Cd { x, y } => vec![(x, y), (lat.bottom, x)],
            RuleKind::Cc { y, .. } => vec![(lat.bottom, y)],
            RuleKind::Sm { a, b } => vec![(lat.bottom, lat.join(a, b))],
        }
    }

    pub fn render(&self, lat: &Lattice) -> String {
        let l = |e: usize| lat.label(e);
        match *self {
            RuleKind::Cd { x, y } => format!("CD h({}) -> h({}|{}) + h({})", l(y), l(y), l(x), l(x)),
            RuleKind::Cc { x, y } => format!("CC h({}|{}) + h({}) -> h({})", l(y), l(x), l(x), l(y)),
            RuleKind::Sm { a, b } => {
                format!("SM h({}) + h({}|{}) -> h({})", l(a), l(b), l(lat.meet(a, b)), l(lat.join(a, b)))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CsmSequence {
    pub rules: Vec<CsmRule>,
    /// Global denominator: a rule with multiplicity t moves t/D of dual weight.
    pub d: u64,
}

struct Builder<'a> {
    lat: &'a Lattice,
    reasons: HashMap<usize, Reason>,
    initial: HashSet<Term>,
    produced: HashSet<usize>,
    rules: Vec<RuleKind>,
}

impl Builder<'_> {
    fn has_cond(&self, x: usize, y: usize) -> bool {
        if x == self.lat.bottom {
            return self.produced.contains(&y) || self.initial.contains(&(x, y));
        }
        self.initial.contains(&(x, y)) || self.rules.contains(&RuleKind::Cd { x, y })
    }

    fn produce(&mut self, z: usize) -> Result<()> {
        let lat = self.lat;
        if z == lat.bottom || self.produced.contains(&z) || self.initial.contains(&(lat.bottom, z)) {
            self.produced.insert(z);
            return Ok(());
        }
        match self.reasons.get(&z).copied() {
            None | Some(Reason::Seed) => return Err(Error::Plan(format!("no derivation for h({})", lat.label(z)))),
            Some(Reason::Down(y)) => {
                self.produce(y)?;
                self.rules.push(RuleKind::Cd { x: z, y });
            }
            Some(Reason::Compose(x)) => {
                self.produce(x)?;
                self.rules.push(RuleKind::Cc { x, y: z });
            }
            Some(Reason::Sm(p, q)) => {
                let m = lat.meet(p, q);
                let orient = |s: &Self| {
                    if s.has_cond(m, q) {
                        Some((p, q))
                    } else if s.has_cond(m, p) {
                        Some((q, p))
                    } else {
                        None
                    }
                };
                let mut found = orient(self);
                if found.is_none() {
                    self.produce(p)?;
                    found = orient(self);
                }
                if found.is_none() {
                    self.produce(q)?;
                    found = orient(self);
                }
                let (a, b) = match found {
                    Some(o) => o,
                    None => {
                        self.rules.push(RuleKind::Cd { x: m, y: q });
                        self.produced.insert(m);
                        (p, q)
                    }
                };
                self.produce(a)?;
                if m == lat.bottom {
                    self.produce(b)?;
                }
                self.rules.push(RuleKind::Sm { a, b });
            }
        }
        self.produced.insert(z);
        Ok(())
    }
}

/// Builds a CSM sequence reaching h(1̂) from a dual-feasible certificate.
pub fn build_csm_sequence(lat: &Lattice, pairs: &[Pair], cert: &DualCert) -> Result<CsmSequence> {
    check_dual(lat, pairs, cert)?;
    let (_, mut reasons) = closure_with_reasons(lat, &[lat.bottom], pairs, cert);
    while !reasons.contains_key(&lat.top) {
        let kbar: Vec<usize> = reasons.keys().copied().collect();
        let (a, b) = find_violating_pair(lat, &kbar, cert)?;
        let j = lat.join(a, b);
        reasons.insert(j, Reason::Sm(a, b));
        extend_closure(lat, pairs, cert, &mut reasons, vec![j]);
    }
    let initial: HashSet<Term> =
        pairs.iter().zip(&cert.c).filter(|(_, c)| c.is_positive()).map(|(p, _)| (p.x, p.y)).collect();
    let mut b = Builder { lat, reasons, initial, produced: HashSet::new(), rules: vec![] };
    b.produce(lat.top)?;

    // backward demand pass
    let mut demand: HashMap<Term, u64> = HashMap::from([((lat.bottom, lat.top), 1)]);
    let mut mult = vec![0u64; b.rules.len()];
    for (i, r) in b.rules.iter().enumerate().rev() {
        let t = r.outputs(lat).iter().map(|o| demand.get(o).copied().unwrap_or(0)).max().unwrap_or(0);
        mult[i] = t;
        for inp in r.inputs(lat) {
            if inp.0 == lat.bottom && inp.1 == lat.bottom {
                continue;
            }
            *demand.entry(inp).or_default() += t;
        }
    }
    let inc = lat.incomparable_pairs();
    let mut s_use: HashMap<usize, u64> = HashMap::new();
    for (r, &t) in b.rules.iter().zip(&mult) {
        if let RuleKind::Sm { a, b } = *r {
            let k = inc.iter().position(|&p| p == (a.min(b), a.max(b))).expect("incomparable");
            *s_use.entry(k).or_default() += t;
        }
    }
    let base = to_u64(&lcm_denoms(cert.c.iter().chain(&cert.s)));
    let mut need: Vec<(Q, u64)> = vec![];
    for (p, c) in pairs.iter().zip(&cert.c) {
        if let Some(&u) = demand.get(&(p.x, p.y)) {
            if c.is_positive() && u > 0 {
                need.push((c.clone(), u));
            }
        }
    }
    for (k, u) in s_use {
        need.push((cert.s[k].clone(), u));
    }
    let mut d = base;
    while need.iter().any(|(w, u)| w * qi(d as i64) < qi(*u as i64)) {
        d += base;
    }
    let rules =
        b.rules.into_iter().zip(mult).filter(|(_, t)| *t > 0).map(|(kind, t)| CsmRule { kind, t }).collect();
    Ok(CsmSequence { rules, d })
}

/// One part of a degree partition, with integer log bounds.
#[derive(Clone, Debug)]
pub struct Part {
    pub table: Table,
    /// ⌈log₂⌉ bound on the max degree of X-values.
    pub n_yx: i64,
    /// Bound on log₂|Π_X|; always n_Y − n_yx.
    pub n_x: i64,
}

/// Partitions T by ⌈log₂ deg(X)⌉ and halves a bucket by X-value when its
/// projection is too large, so every part has n_x + n_yx = n_y.
pub fn partition_by_degree(t: &Table, x: VarSet, n_y: i64) -> Result<Vec<Part>> {
    if !le_pow2(t.len() as u64, &qi(n_y)) {
        return Err(Error::Invariant(format!("|T| = {} exceeds 2^{n_y}", t.len())));
    }
    let ix = t.index(x);
    let mut buckets: BTreeMap<i64, Vec<&Vec<u32>>> = BTreeMap::new();
    let mut keys: Vec<_> = ix.keys().collect();
    keys.sort();
    for k in keys {
        let rows = &ix[k];
        buckets.entry(ceil_log2(rows.len() as u64) as i64).or_default().push(rows);
    }
    let mut parts = vec![];
    for (j, groups) in buckets {
        let n_x = n_y - j;
        let cap = 1u64 << n_x.clamp(0, 62);
        let chunks: Vec<&[&Vec<u32>]> =
            if groups.len() as u64 <= cap { vec![&groups[..]] } else { groups.chunks(groups.len().div_ceil(2)).collect() };
        for ch in chunks {
            if ch.len() as u64 > cap {
                return Err(Error::Invariant("degree bucket does not fit after halving".into()));
            }
            let rows = ch.iter().flat_map(|g| g.iter().map(|&i| t.rows[i as usize].clone())).collect();
            parts.push(Part { table: Table::new(t.vars, t.width, rows), n_yx: j, n_x });
        }
    }
    Ok(parts)
}

/// Where a pair's guard comes from at the start of a run.
#[derive(Clone, Debug, Serialize)]
pub enum GuardSource {
    Relation(usize),
    DegreeBound(usize),
}

#[derive(Clone, Debug)]
pub struct CsmaPlan {
    pub pairs: Vec<Pair>,
    pub sources: Vec<Vec<GuardSource>>,
    pub cert: DualCert,
    pub opt: Q,
    pub sequence: CsmSequence,
    pub theta: Q,
    pub ell: u64,
}

/// θ = (D−1)(|L|²·log₂ℓ + 1), with log₂ℓ rounded up to a dyadic.
pub fn default_theta(lat: &Lattice, d: u64, ell: u64) -> Q {
    let l2 = qi((lat.len() * lat.len()) as i64);
    qi(d as i64 - 1) * (l2 * log2_upper(ell, 1 << 10) + qi(1))
}

pub fn ell_for(nmax: u64) -> u64 {
    2 * (ceil_log2(nmax) as u64).max(1)
}

/// P⁰ from relation sizes and degree bounds; duplicate pairs are merged.
pub fn initial_pairs(lat: &Lattice, db_query: &crate::query::Query, sizes: &[u64]) -> (Vec<Pair>, Vec<Vec<GuardSource>>) {
    let mut pairs: Vec<Pair> = vec![];
    let mut sources: Vec<Vec<GuardSource>> = vec![];
    let mut add = |x: usize, y: usize, n: Q, src: GuardSource| {
        if let Some(k) = pairs.iter().position(|p| p.x == x && p.y == y) {
            if n < pairs[k].n {
                pairs[k].n = n;
            }
            sources[k].push(src);
        } else {
            pairs.push(Pair { x, y, n });
            sources.push(vec![src]);
        }
    };
    for (j, r) in db_query.relations.iter().enumerate() {
        add(lat.bottom, lat.closed(r.set()), qi(ceil_log2(sizes[j]) as i64), GuardSource::Relation(j));
    }
    for (k, b) in db_query.degree_bounds.iter().enumerate() {
        let (x, y) = (lat.closed(b.given), lat.closed(b.of));
        if x != y {
            add(x, y, qi(ceil_log2(b.bound) as i64), GuardSource::DegreeBound(k));
        }
    }
    (pairs, sources)
}

pub fn plan_csma(lat: &Lattice, query: &crate::query::Query, sizes: &[u64], theta: Option<Q>) -> Result<CsmaPlan> {
    let (pairs, sources) = initial_pairs(lat, query, sizes);
    let sol = solve_cllp(lat, &pairs, true)?.ok_or(Error::Unbounded)?;
    let sequence = build_csm_sequence(lat, &pairs, &sol.cert)?;
    let ell = ell_for(sizes.iter().copied().max().unwrap_or(1));
    let theta = theta.unwrap_or_else(|| default_theta(lat, sequence.d, ell));
    Ok(CsmaPlan { pairs, sources, cert: sol.cert, opt: sol.opt, sequence, theta, ell })
}

impl CsmaPlan {
    pub fn to_json(&self, lat: &Lattice) -> serde_json::Value {
        let inc = lat.incomparable_pairs();
        serde_json::json!({
            "opt": fmt_q(&self.opt),
            "pairs": self.pairs.iter().zip(&self.cert.c).map(|(p, c)| serde_json::json!({
                "x": lat.label(p.x), "y": lat.label(p.y), "n": fmt_q(&p.n), "c": fmt_q(c),
            })).collect::<Vec<_>>(),
            "cert": {
                "s": inc.iter().zip(&self.cert.s).filter(|(_, s)| !s.is_zero()).map(|(&(a, b), s)| serde_json::json!({
                    "a": lat.label(a), "b": lat.label(b), "s": fmt_q(s),
                })).collect::<Vec<_>>(),
                "m": lat.covers.iter().zip(&self.cert.m).filter(|(_, m)| !m.is_zero()).map(|(&(a, b), m)| serde_json::json!({
                    "x": lat.label(a), "y": lat.label(b), "m": fmt_q(m),
                })).collect::<Vec<_>>(),
            },
            "sequence": self.sequence.rules.iter().map(|r| serde_json::json!({
                "rule": r.kind.render(lat), "t": r.t,
            })).collect::<Vec<_>>(),
            "theta": fmt_q(&self.theta),
            "ell": self.ell,
            "D": self.sequence.d,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CsmaParams {
    /// Overrides θ (the literal value never triggers at desk scale).
    pub theta: Option<Q>,
    pub max_restarts: u32,
}

impl Default for CsmaParams {
    fn default() -> Self {
        CsmaParams { theta: None, max_restarts: 64 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchRecord {
    pub path: String,
    pub ops: u64,
    pub output: usize,
    pub restarts: u32,
    pub cd_depth: u32,
}

#[derive(Debug)]
pub struct CsmaRun {
    pub table: Table,
    pub ops: u64,
    pub branches: u64,
    pub restarts: u32,
    pub max_cd_depth: u32,
    pub ell: u64,
    pub inv_checks: u64,
    pub trace: Vec<BranchRecord>,
}

#[derive(Clone)]
struct PairState {
    x: usize,
    y: usize,
    n: Q,
    c: Q,
    guard: Arc<Table>,
}

#[derive(Clone)]
struct Branch {
    pairs: Vec<PairState>,
    s: Vec<Q>,
    m: Vec<Q>,
    opt: Q,
    theta: Q,
    seq: Arc<CsmSequence>,
    rule: usize,
    path: Vec<usize>,
    restarts: u32,
    cd_depth: u32,
    ops: u64,
}

struct Ctx<'a> {
    lat: &'a Lattice,
    ex: Expander<'a>,
    params: &'a CsmaParams,
    ell: u64,
    inc: Vec<(usize, usize)>,
    outputs: Vec<Table>,
    trace: Vec<BranchRecord>,
    inv_checks: u64,
    total_ops: u64,
    restarts: u32,
    max_cd_depth: u32,
}

impl Branch {
    fn find(&self, x: usize, y: usize) -> Option<usize> {
        self.pairs.iter().position(|p| p.x == x && p.y == y)
    }

    fn get(&self, lat: &Lattice, x: usize, y: usize) -> Result<usize> {
        self.find(x, y)
            .ok_or_else(|| Error::Invariant(format!("no guard for h({}|{})", lat.label(y), lat.label(x))))
    }

    fn merge(&mut self, x: usize, y: usize, n: Q, c: Q, guard: Table) {
        match self.find(x, y) {
            Some(k) => {
                let p = &mut self.pairs[k];
                if n < p.n {
                    p.n = n;
                }
                p.c += c;
                p.guard = Arc::new(p.guard.intersect(&guard));
            }
            None => self.pairs.push(PairState { x, y, n, c, guard: Arc::new(guard) }),
        }
    }

    fn cert(&self) -> (Vec<Pair>, DualCert) {
        let pairs = self.pairs.iter().map(|p| Pair { x: p.x, y: p.y, n: p.n.clone() }).collect();
        let cert = DualCert { c: self.pairs.iter().map(|p| p.c.clone()).collect(), s: self.s.clone(), m: self.m.clone() };
        (pairs, cert)
    }
}

impl Ctx<'_> {
    /// Inv1: every guard respects its log-degree bound. Inv2: the adjusted
    /// certificate is dual feasible with objective ≤ OPT.
    fn check(&mut self, b: &Branch) -> Result<()> {
        self.inv_checks += 1;
        let lat = self.lat;
        for p in &b.pairs {
            let deg = p.guard.max_degree(lat.set(p.x)) as u64;
            if !le_pow2(deg, &p.n) {
                return Err(Error::Invariant(format!(
                    "Inv1: guard of h({}|{}) has degree {deg} > 2^{}",
                    lat.label(p.y),
                    lat.label(p.x),
                    fmt_q(&p.n)
                )));
            }
        }
        let (pairs, cert) = b.cert();
        let obj = check_dual(lat, &pairs, &cert).map_err(|e| Error::Invariant(format!("Inv2: {e}")))?;
        if obj > b.opt {
            return Err(Error::Invariant(format!("Inv2: objective {} > OPT {}", fmt_q(&obj), fmt_q(&b.opt))));
        }
        Ok(())
    }

    fn finish(&mut self, b: &Branch) -> Result<()> {
        let lat = self.lat;
        let k = b.get(lat, lat.bottom, lat.top)?;
        let out = (*b.pairs[k].guard).clone();
        self.trace.push(BranchRecord {
            path: b.path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("."),
            ops: b.ops,
            output: out.len(),
            restarts: b.restarts,
            cd_depth: b.cd_depth,
        });
        self.max_cd_depth = self.max_cd_depth.max(b.cd_depth);
        self.outputs.push(out);
        Ok(())
    }

    fn restart(&mut self, mut b: Branch) -> Result<()> {
        let lat = self.lat;
        if b.restarts >= self.params.max_restarts {
            return Err(Error::Budget(self.params.max_restarts as u64));
        }
        let (pairs, cert) = b.cert();
        let obj = check_dual(lat, &pairs, &cert)?;
        let sol = solve_cllp(lat, &pairs, true)?.ok_or(Error::Unbounded)?;
        let d = b.seq.d;
        let drop = if d > 1 { &b.theta / qi(d as i64 - 1) } else { zero() };
        if sol.opt >= obj.clone() - drop {
            return Err(Error::Invariant(format!(
                "restart did not lower the optimum: {} vs objective {}",
                fmt_q(&sol.opt),
                fmt_q(&obj)
            )));
        }
        let seq = build_csm_sequence(lat, &pairs, &sol.cert)?;
        for (p, c) in b.pairs.iter_mut().zip(&sol.cert.c) {
            p.c = c.clone();
        }
        b.s = sol.cert.s;
        b.m = sol.cert.m;
        b.opt = sol.opt;
        b.theta = self.params.theta.clone().unwrap_or_else(|| default_theta(lat, seq.d, self.ell));
        b.seq = Arc::new(seq);
        b.rule = 0;
        b.restarts += 1;
        self.restarts += 1;
        self.check(&b)?;
        self.exec(b)
    }

    fn exec(&mut self, mut b: Branch) -> Result<()> {
        let lat = self.lat;
        while b.rule < b.seq.rules.len() {
            let rule = b.seq.rules[b.rule].clone();
            let eps = Q::new(rule.t.into(), b.seq.d.into());
            b.rule += 1;
            match rule.kind {
                RuleKind::Cd { x, y } => {
                    let ky = b.get(lat, lat.bottom, y)?;
                    let n_y = b.pairs[ky].n.to_integer().to_i64().unwrap_or(0);
                    let guard = b.pairs[ky].guard.clone();
                    let parts = partition_by_degree(&guard, lat.set(x), n_y)?;
                    b.ops += guard.len() as u64;
                    self.total_ops += guard.len() as u64;
                    for (j, part) in parts.into_iter().enumerate() {
                        let mut child = b.clone();
                        child.path.push(j);
                        child.cd_depth += 1;
                        let proj = part.table.project(lat.set(x));
                        child.pairs[ky].guard = Arc::new(part.table.clone());
                        child.pairs[ky].c -= &eps;
                        child.merge(x, y, qi(part.n_yx), eps.clone(), part.table);
                        child.merge(lat.bottom, x, qi(part.n_x), eps.clone(), proj);
                        self.check(&child)?;
                        self.exec(child)?;
                    }
                    return Ok(());
                }
                RuleKind::Cc { x, y } => {
                    let kr = b.get(lat, x, y)?;
                    let ks = b.get(lat, lat.bottom, x)?;
                    let nsum = &b.pairs[kr].n + &b.pairs[ks].n;
                    if nsum > &b.opt + &b.theta {
                        return self.restart(b);
                    }
                    let (r, s) = (b.pairs[kr].guard.clone(), b.pairs[ks].guard.clone());
                    let t = r.semijoin(&s);
                    let cost = (s.len() + t.len()) as u64;
                    b.ops += cost;
                    self.total_ops += cost;
                    b.pairs[kr].c -= &eps;
                    b.pairs[ks].c -= &eps;
                    b.merge(lat.bottom, y, nsum, eps, t);
                }
                RuleKind::Sm { a, b: bb } => {
                    let m = lat.meet(a, bb);
                    let j = lat.join(a, bb);
                    let kr = b.get(lat, lat.bottom, a)?;
                    let ks = b.get(lat, m, bb)?;
                    let nsum = &b.pairs[kr].n + &b.pairs[ks].n;
                    if nsum > &b.opt + &b.theta {
                        return self.restart(b);
                    }
                    let (r, s) = (b.pairs[kr].guard.clone(), b.pairs[ks].guard.clone());
                    let t = self.join(&r, &s, lat.set(m), lat.set(j));
                    let cost = (r.len() + t.len()) as u64;
                    b.ops += cost;
                    self.total_ops += cost;
                    if !le_pow2(t.len() as u64, &nsum) {
                        return Err(Error::Invariant(format!("|T({})| exceeds 2^{}", lat.label(j), fmt_q(&nsum))));
                    }
                    let k = self.inc.iter().position(|&p| p == (a.min(bb), a.max(bb))).expect("incomparable");
                    b.s[k] -= &eps;
                    b.pairs[kr].c -= &eps;
                    b.pairs[ks].c -= &eps;
                    b.merge(lat.bottom, j, nsum, eps, t);
                }
            }
            self.check(&b)?;
        }
        self.finish(&b)
    }

    /// R ⋈ S on the meet's variables, expanded to the join's closure.
    fn join(&self, r: &Table, s: &Table, on: VarSet, to: VarSet) -> Table {
        let ix = s.index(on);
        let have = r.vars | s.vars;
        let mut rows = vec![];
        for row in &r.rows {
            let Some(bucket) = ix.get(&key_of(row, on)) else { continue };
            for &i in bucket {
                let mut full = row.to_vec();
                for v in bits(s.vars) {
                    full[v] = s.rows[i as usize][v];
                }
                if self.ex.expand_row(&mut full, have) && self.ex.check_fds(&full, to) {
                    rows.push(restrict(&full, to));
                }
            }
        }
        Table::new(to, r.width, rows)
    }
}

/// Runs CSMA on a database: CLLP⁰ from sizes and degree bounds, CSM sequence,
/// branch-per-part execution with restarts; output is the union of branch
/// results, semi-join reduced and FD-checked.
pub fn run_csma(db: &Database, lat: &Lattice, params: &CsmaParams) -> Result<CsmaRun> {
    let q = &db.query;
    q.executable()?;
    let sizes = db.cardinalities();
    let plan = plan_csma(lat, q, &sizes, params.theta.clone())?;
    let ex = Expander::new(db)?;
    let expanded: Vec<Table> = db.tables.iter().map(|t| ex.expand(t)).collect();
    let mut pairs = vec![];
    for (k, p) in plan.pairs.iter().enumerate() {
        let mut guard: Option<Table> = None;
        for src in &plan.sources[k] {
            let t = match src {
                GuardSource::Relation(j) => expanded[*j].clone(),
                GuardSource::DegreeBound(i) => {
                    let g = q.relation_index(&q.degree_bounds[*i].guard).expect("validated guard");
                    expanded[g].clone()
                }
            };
            guard = Some(match guard {
                Some(g) => g.intersect(&t),
                None => t,
            });
        }
        let guard = guard.expect("every pair has a source");
        if guard.vars != lat.set(p.y) {
            return Err(Error::Plan(format!("guard for {} has the wrong schema", lat.label(p.y))));
        }
        pairs.push(PairState { x: p.x, y: p.y, n: p.n.clone(), c: plan.cert.c[k].clone(), guard: Arc::new(guard) });
    }
    let ops0: u64 = expanded.iter().map(|t| t.len() as u64).sum();
    let root = Branch {
        pairs,
        s: plan.cert.s.clone(),
        m: plan.cert.m.clone(),
        opt: plan.opt.clone(),
        theta: plan.theta.clone(),
        seq: Arc::new(plan.sequence.clone()),
        rule: 0,
        path: vec![],
        restarts: 0,
        cd_depth: 0,
        ops: 0,
    };
    let mut ctx = Ctx {
        lat,
        ex,
        params,
        ell: plan.ell,
        inc: lat.incomparable_pairs(),
        outputs: vec![],
        trace: vec![],
        inv_checks: 0,
        total_ops: ops0,
        restarts: 0,
        max_cd_depth: 0,
    };
    ctx.check(&root)?;
    ctx.exec(root)?;
    let top = lat.set(lat.top);
    let union = Table::union_all(top, q.nvars(), std::mem::take(&mut ctx.outputs));
    ctx.total_ops += union.len() as u64;
    let table = ctx.ex.finalize(&union);
    Ok(CsmaRun {
        table,
        ops: ctx.total_ops,
        branches: ctx.trace.len() as u64,
        restarts: ctx.restarts,
        max_cd_depth: ctx.max_cd_depth,
        ell: plan.ell,
        inv_checks: ctx.inv_checks,
        trace: ctx.trace,
    })
}

/// Branch-count bound ℓ^{max CD depth}, saturating.
pub fn branch_bound(run: &CsmaRun) -> u64 {
    run.ell.checked_pow(run.max_cd_depth).unwrap_or(u64::MAX)
}
