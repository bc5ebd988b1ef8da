//! The lattice of FD-closed variable sets.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::query::{bits, popcount, Query, VarSet, MAX_VARS};
use crate::rational::{qi, zero, Q};
use num::traits::{Signed, Zero};

/// Exact rational value per lattice element id.
pub type LatticeFunction = Vec<Q>;

const TABLE_CAP: usize = 1024;

#[derive(Clone, Debug)]
pub struct Lattice {
    pub var_names: Vec<String>,
    fds: Vec<(VarSet, VarSet)>,
    pub elements: Vec<VarSet>,
    index: HashMap<VarSet, usize>,
    pub bottom: usize,
    pub top: usize,
    meet_t: Vec<u32>,
    join_t: Vec<u32>,
    pub upper: Vec<Vec<usize>>,
    pub lower: Vec<Vec<usize>>,
    pub covers: Vec<(usize, usize)>,
    pub join_irreducibles: Vec<usize>,
    pub meet_irreducibles: Vec<usize>,
    pub atoms: Vec<usize>,
    pub coatoms: Vec<usize>,
    /// Variables removed as redundant, in removal order.
    pub redundant: Vec<usize>,
}

fn canonical_key(s: VarSet) -> (u32, Vec<usize>) {
    (popcount(s), bits(s).collect())
}

impl Lattice {
    pub fn from_query(q: &Query) -> Result<Lattice> {
        if q.nvars() > MAX_VARS {
            return Err(Error::TooManyVars(q.nvars(), MAX_VARS));
        }
        let fds: Vec<(VarSet, VarSet)> = q.fds.iter().map(|f| (f.lhs, f.rhs)).collect();
        Ok(Self::build(q.vars.clone(), fds))
    }

    /// Boolean algebra on `names` (no FDs).
    pub fn boolean(names: &[String]) -> Lattice {
        Self::build(names.to_vec(), vec![])
    }

    fn build(var_names: Vec<String>, fds: Vec<(VarSet, VarSet)>) -> Lattice {
        let k = var_names.len();
        let all: VarSet = if k == 0 { 0 } else { (1u32 << k) - 1 };
        let close = |s: VarSet| closure_with(&fds, s);
        let mut seen = std::collections::HashSet::new();
        for s in 0..=all {
            seen.insert(close(s));
        }
        let mut elements: Vec<VarSet> = seen.into_iter().collect();
        elements.sort_by_key(|&s| canonical_key(s));
        let index: HashMap<VarSet, usize> = elements.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let n = elements.len();
        let bottom = index[&close(0)];
        let top = index[&close(all)];

        let mut upper = vec![Vec::new(); n];
        let mut lower = vec![Vec::new(); n];
        for (a, &sa) in elements.iter().enumerate() {
            let mut cands: Vec<VarSet> = (0..k).filter(|v| sa >> v & 1 == 0).map(|v| close(sa | 1 << v)).collect();
            cands.sort_by_key(|&s| canonical_key(s));
            cands.dedup();
            let minimal: Vec<VarSet> = cands
                .iter()
                .copied()
                .filter(|&c| !cands.iter().any(|&d| d != c && d & c == d))
                .collect();
            for c in minimal {
                let b = index[&c];
                upper[a].push(b);
                lower[b].push(a);
            }
        }
        for v in upper.iter_mut().chain(lower.iter_mut()) {
            v.sort();
        }
        let mut covers = Vec::new();
        for a in 0..n {
            for &b in &upper[a] {
                covers.push((a, b));
            }
        }
        let join_irreducibles = (0..n).filter(|&x| lower[x].len() == 1).collect();
        let meet_irreducibles = (0..n).filter(|&x| upper[x].len() == 1).collect();
        let atoms = if n > 1 { upper[bottom].clone() } else { vec![] };
        let coatoms = if n > 1 { lower[top].clone() } else { vec![] };

        let mut lat = Lattice {
            var_names,
            fds,
            elements,
            index,
            bottom,
            top,
            meet_t: vec![],
            join_t: vec![],
            upper,
            lower,
            covers,
            join_irreducibles,
            meet_irreducibles,
            atoms,
            coatoms,
            redundant: vec![],
        };
        if n <= TABLE_CAP {
            let mut mt = vec![0u32; n * n];
            let mut jt = vec![0u32; n * n];
            for a in 0..n {
                for b in 0..n {
                    mt[a * n + b] = lat.meet_slow(a, b) as u32;
                    jt[a * n + b] = lat.join_slow(a, b) as u32;
                }
            }
            lat.meet_t = mt;
            lat.join_t = jt;
        }
        lat.redundant = lat.compute_redundant();
        lat
    }

    fn compute_redundant(&self) -> Vec<usize> {
        let k = self.var_names.len();
        let mut remaining: VarSet = if k == 0 { 0 } else { (1u32 << k) - 1 };
        let mut out = vec![];
        for x in 0..k {
            let xp = self.closure(1 << x) & remaining & !(1 << x);
            if self.closure(xp) >> x & 1 == 1 {
                remaining &= !(1 << x);
                out.push(x);
            }
        }
        out
    }

    pub fn closure(&self, s: VarSet) -> VarSet {
        closure_with(&self.fds, s)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn set(&self, e: usize) -> VarSet {
        self.elements[e]
    }

    pub fn id(&self, s: VarSet) -> Option<usize> {
        self.index.get(&s).copied()
    }

    /// Element id of the closure of `s`.
    pub fn closed(&self, s: VarSet) -> usize {
        self.index[&self.closure(s)]
    }

    /// Element by single-char variable names, e.g. "xzu"; "" is the closure of ∅.
    pub fn el(&self, spec: &str) -> usize {
        let mut s = 0;
        for c in spec.chars() {
            let i = self
                .var_names
                .iter()
                .position(|v| v.len() == c.len_utf8() && v.starts_with(c))
                .unwrap_or_else(|| panic!("unknown var {c}"));
            s |= 1 << i;
        }
        self.id(s).unwrap_or_else(|| panic!("{spec} is not closed"))
    }

    pub fn label(&self, e: usize) -> String {
        let s = self.elements[e];
        if s == 0 {
            return "0".to_string();
        }
        let names: Vec<&str> = bits(s).map(|i| self.var_names[i].as_str()).collect();
        if names.iter().all(|n| n.chars().count() == 1) {
            names.concat()
        } else {
            names.join(",")
        }
    }

    pub fn names(&self, e: usize) -> Vec<String> {
        bits(self.elements[e]).map(|i| self.var_names[i].clone()).collect()
    }

    pub fn leq(&self, a: usize, b: usize) -> bool {
        self.elements[a] & !self.elements[b] == 0
    }

    pub fn lt(&self, a: usize, b: usize) -> bool {
        a != b && self.leq(a, b)
    }

    pub fn comparable(&self, a: usize, b: usize) -> bool {
        self.leq(a, b) || self.leq(b, a)
    }

    fn meet_slow(&self, a: usize, b: usize) -> usize {
        self.index[&(self.elements[a] & self.elements[b])]
    }

    fn join_slow(&self, a: usize, b: usize) -> usize {
        self.index[&self.closure(self.elements[a] | self.elements[b])]
    }

    pub fn meet(&self, a: usize, b: usize) -> usize {
        if self.meet_t.is_empty() {
            self.meet_slow(a, b)
        } else {
            self.meet_t[a * self.len() + b] as usize
        }
    }

    pub fn join(&self, a: usize, b: usize) -> usize {
        if self.join_t.is_empty() {
            self.join_slow(a, b)
        } else {
            self.join_t[a * self.len() + b] as usize
        }
    }

    pub fn join_all(&self, xs: impl IntoIterator<Item = usize>) -> usize {
        xs.into_iter().fold(self.bottom, |a, b| self.join(a, b))
    }

    pub fn meet_all(&self, xs: impl IntoIterator<Item = usize>) -> usize {
        xs.into_iter().fold(self.top, |a, b| self.meet(a, b))
    }

    pub fn covers(&self, a: usize, b: usize) -> bool {
        self.upper[a].contains(&b)
    }

    pub fn above(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&y| self.leq(x, y))
    }

    /// Incomparable unordered pairs (a < b by id).
    pub fn incomparable_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = vec![];
        for a in 0..n {
            for b in a + 1..n {
                if !self.comparable(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// g(X) = Σ_{Y⪰X} μ(X,Y) h(Y), computed top-down as g(X) = h(X) − Σ_{Y≻X} g(Y).
    pub fn mobius_invert(&self, h: &[Q]) -> LatticeFunction {
        let n = self.len();
        let mut g = vec![zero(); n];
        // ids sorted by popcount, so reverse order visits uppers first
        for x in (0..n).rev() {
            let mut v = h[x].clone();
            for y in x + 1..n {
                if self.lt(x, y) {
                    v -= &g[y];
                }
            }
            g[x] = v;
        }
        g
    }

    /// h(X) = Σ_{Y⪰X} g(Y).
    pub fn mobius_apply(&self, g: &[Q]) -> LatticeFunction {
        (0..self.len())
            .map(|x| self.above(x).fold(zero(), |acc, y| acc + &g[y]))
            .collect()
    }

    /// μ(x, ·) over the interval above x.
    pub fn mu_from(&self, x: usize) -> Vec<i64> {
        let n = self.len();
        let mut mu = vec![0i64; n];
        mu[x] = 1;
        for y in x + 1..n {
            if self.lt(x, y) {
                let s: i64 = (x..y).filter(|&z| self.leq(x, z) && self.lt(z, y)).map(|z| mu[z]).sum();
                mu[y] = -s;
            }
        }
        mu
    }

    pub fn mu(&self, x: usize, y: usize) -> i64 {
        if !self.leq(x, y) {
            return 0;
        }
        self.mu_from(x)[y]
    }

    /// Step function h_Z(X) = 1 iff X ⋠ Z.
    pub fn step_function(&self, z: usize) -> LatticeFunction {
        (0..self.len()).map(|x| if self.leq(x, z) { zero() } else { qi(1) }).collect()
    }

    pub fn is_distributive(&self) -> bool {
        let n = self.len();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    if self.meet(x, self.join(y, z)) != self.join(self.meet(x, y), self.meet(x, z)) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// |{U ∈ S : U ⪯ Z}|.
    pub fn coatom_count_c(&self, z: usize, s: &[usize]) -> usize {
        s.iter().filter(|&&u| self.leq(u, z)).count()
    }

    /// Diagnostic: an M₃ sublattice (bottom, a, b, c, top) if one exists.
    pub fn find_m3_sublattice(&self) -> Option<[usize; 5]> {
        let n = self.len();
        for a in 0..n {
            for b in a + 1..n {
                if self.comparable(a, b) {
                    continue;
                }
                let m = self.meet(a, b);
                let j = self.join(a, b);
                for c in b + 1..n {
                    if self.comparable(a, c) || self.comparable(b, c) {
                        continue;
                    }
                    if self.meet(a, c) == m
                        && self.meet(b, c) == m
                        && self.join(a, c) == j
                        && self.join(b, c) == j
                    {
                        return Some([m, a, b, c, j]);
                    }
                }
            }
        }
        None
    }

    /// The co-atoms as sets for display.
    pub fn coatom_labels(&self) -> Vec<String> {
        self.coatoms.iter().map(|&z| self.label(z)).collect()
    }
}

pub fn closure_with(fds: &[(VarSet, VarSet)], s: VarSet) -> VarSet {
    let mut c = s;
    loop {
        let before = c;
        for &(l, r) in fds {
            if l & !c == 0 {
                c |= r;
            }
        }
        if c == before {
            return c;
        }
    }
}

/// A join-preserving map between lattices with f(0̂)=0̂′ and f(1̂)=1̂′.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub map: Vec<usize>,
    pub right_adjoint: Vec<usize>,
}

impl Embedding {
    pub fn new(src: &Lattice, dst: &Lattice, map: Vec<usize>) -> Result<Embedding> {
        if map.len() != src.len() {
            return Err(Error::Validation("embedding map has wrong length".into()));
        }
        if map[src.bottom] != dst.bottom || map[src.top] != dst.top {
            return Err(Error::Validation("embedding must fix 0̂ and 1̂".into()));
        }
        for a in 0..src.len() {
            for b in 0..src.len() {
                if map[src.join(a, b)] != dst.join(map[a], map[b]) {
                    return Err(Error::Validation(format!(
                        "embedding does not preserve join of {} and {}",
                        src.label(a),
                        src.label(b)
                    )));
                }
            }
        }
        let right_adjoint = (0..dst.len())
            .map(|y| src.join_all((0..src.len()).filter(|&x| dst.leq(map[x], y))))
            .collect();
        Ok(Embedding { map, right_adjoint })
    }

    /// f(X) ⪯ Y iff X ⪯ r(Y), on all pairs.
    pub fn adjunction_holds(&self, src: &Lattice, dst: &Lattice) -> bool {
        (0..src.len()).all(|x| (0..dst.len()).all(|y| dst.leq(self.map[x], y) == src.leq(x, self.right_adjoint[y])))
    }
}

/// Canonical embedding of an integral normal h into a Boolean algebra.
/// Each X ≠ 1̂ gets −g(X) fresh atoms C(X); f(X) = C \ ∪_{Z⪰X} C(Z)
/// (the standard orientation of the upside-down algebra).
pub fn canonical_embedding(h: &[Q], lat: &Lattice) -> Result<(Embedding, Lattice, Vec<Vec<usize>>)> {
    let g = lat.mobius_invert(h);
    if !h[lat.bottom].is_zero() {
        return Err(Error::NotNormal("h(0̂) ≠ 0".into()));
    }
    for x in 0..lat.len() {
        if !g[x].is_integer() {
            return Err(Error::NotIntegral(format!("g({}) = {}", lat.label(x), g[x])));
        }
        if x != lat.top && g[x].is_positive() {
            return Err(Error::NotNormal(format!("g({}) = {} > 0", lat.label(x), g[x])));
        }
    }
    let mut atoms_of: Vec<Vec<usize>> = vec![vec![]; lat.len()];
    let mut m = 0usize;
    for x in 0..lat.len() {
        if x == lat.top {
            continue;
        }
        let cnt: i64 = (-&g[x]).to_integer().try_into().map_err(|_| Error::Cap("too many atoms".into()))?;
        for _ in 0..cnt {
            atoms_of[x].push(m);
            m += 1;
        }
    }
    if m > MAX_VARS {
        return Err(Error::Cap(format!("canonical embedding needs {m} atoms")));
    }
    let names: Vec<String> = (0..m).map(|i| format!("c{i}")).collect();
    let dst = Lattice::boolean(&names);
    let all: VarSet = if m == 0 { 0 } else { (1u32 << m) - 1 };
    let map: Vec<usize> = (0..lat.len())
        .map(|x| {
            let mut used: VarSet = 0;
            for z in lat.above(x) {
                for &a in &atoms_of[z] {
                    used |= 1 << a;
                }
            }
            dst.id(all & !used).unwrap()
        })
        .collect();
    let emb = Embedding::new(lat, &dst, map)?;
    Ok((emb, dst, atoms_of))
}
