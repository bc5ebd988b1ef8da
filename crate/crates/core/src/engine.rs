//! Expansion procedure, FD verification and the backtracking oracle.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::query::{bits, FdSource, VarSet};
use crate::relation::{blank, key_of, restrict, Database, Key, Row, Table, Val, UNSET};

pub struct Expander<'a> {
    pub db: &'a Database,
    guard_maps: Vec<Option<HashMap<Key, Key>>>,
    plans: Mutex<HashMap<VarSet, Arc<Vec<usize>>>>,
}

impl<'a> Expander<'a> {
    pub fn new(db: &'a Database) -> Result<Expander<'a>> {
        db.query.executable()?;
        let mut guard_maps = vec![];
        for fd in &db.query.fds {
            match &fd.source {
                FdSource::Guard(g) => {
                    let t = db.table(g);
                    let m: HashMap<Key, Key> =
                        t.rows.iter().map(|r| (key_of(r, fd.lhs), key_of(r, fd.rhs))).collect();
                    guard_maps.push(Some(m));
                }
                _ => guard_maps.push(None),
            }
        }
        Ok(Expander { db, guard_maps, plans: Mutex::new(HashMap::new()) })
    }

    pub fn closure(&self, s: VarSet) -> VarSet {
        self.db.query.closure(s)
    }

    /// FDs to apply, in order, to reach closure(have) from `have`.
    fn plan(&self, have: VarSet) -> Arc<Vec<usize>> {
        if let Some(p) = self.plans.lock().unwrap().get(&have) {
            return p.clone();
        }
        let fds = &self.db.query.fds;
        let mut c = have;
        let mut steps = vec![];
        loop {
            let before = c;
            for (k, fd) in fds.iter().enumerate() {
                if fd.lhs & !c == 0 && fd.rhs & !c != 0 {
                    steps.push(k);
                    c |= fd.rhs;
                }
            }
            if c == before {
                break;
            }
        }
        let p = Arc::new(steps);
        self.plans.lock().unwrap().insert(have, p.clone());
        p
    }

    /// Value(s) the FD assigns to its rhs, in ascending variable order.
    fn apply(&self, k: usize, row: &[Val]) -> Option<Key> {
        let fd = &self.db.query.fds[k];
        let lhs = key_of(row, fd.lhs);
        match &fd.source {
            FdSource::Guard(_) => self.guard_maps[k].as_ref().unwrap().get(&lhs).cloned(),
            FdSource::Udf(name) => {
                let v = self.db.udfs[name].eval(&lhs, &self.db.dict)?;
                Some(vec![v])
            }
            FdSource::Abstract => None,
        }
    }

    /// Fills closure(have) \ have; false when an FD has no value or disagrees.
    pub fn expand_row(&self, row: &mut [Val], have: VarSet) -> bool {
        for &k in self.plan(have).iter() {
            let Some(vals) = self.apply(k, row) else { return false };
            for (v, x) in bits(self.db.query.fds[k].rhs).zip(vals) {
                if row[v] == UNSET {
                    row[v] = x;
                } else if row[v] != x {
                    return false;
                }
            }
        }
        true
    }

    /// Every FD whose variables are bound in the row holds.
    pub fn check_fds(&self, row: &[Val], bound: VarSet) -> bool {
        for (k, fd) in self.db.query.fds.iter().enumerate() {
            if (fd.lhs | fd.rhs) & !bound != 0 {
                continue;
            }
            match self.apply(k, row) {
                Some(v) if v == key_of(row, fd.rhs) => {}
                _ => return false,
            }
        }
        true
    }

    /// Expansion of a table to the closure of its variables.
    pub fn expand(&self, t: &Table) -> Table {
        let target = self.closure(t.vars);
        if target == t.vars {
            return t.clone();
        }
        let mut rows = Vec::with_capacity(t.len());
        for r in &t.rows {
            let mut x = r.to_vec();
            if self.expand_row(&mut x, t.vars) {
                rows.push(x.into_boxed_slice());
            }
        }
        Table::new(target, t.width, rows)
    }

    /// Semi-join reduce with every input, then drop rows failing any FD.
    pub fn finalize(&self, t: &Table) -> Table {
        let mut cur = t.clone();
        for r in &self.db.tables {
            cur = cur.semijoin(r);
        }
        let rows = cur.rows.into_iter().filter(|r| self.check_fds(r, t.vars)).collect();
        Table::new(t.vars, t.width, rows)
    }
}

pub struct OracleResult {
    pub table: Table,
    pub steps: u64,
}

pub const DEFAULT_ORACLE_BUDGET: u64 = 100_000_000;

/// Q^D by backtracking over relation variables in variable order with
/// per-relation pruning, then FD completion and verification.
pub fn brute_force_join(db: &Database, budget: u64) -> Result<OracleResult> {
    let ex = Expander::new(db)?;
    let q = &db.query;
    let width = q.nvars();
    let relvars: VarSet = q.relations.iter().fold(0, |s, r| s | r.set());
    if ex.closure(relvars) != q.all() {
        return Err(Error::Validation("some variables are not determined by the relations".into()));
    }
    let order: Vec<usize> = bits(relvars).collect();
    let mut st = Oracle { db, ex: &ex, order, budget, steps: 0, out: vec![], relvars };
    let mut row = blank(width);
    st.go(0, 0, &mut row)?;
    let steps = st.steps;
    let out = std::mem::take(&mut st.out);
    Ok(OracleResult { table: Table::new(q.all(), width, out), steps })
}

struct Oracle<'a, 'b> {
    db: &'a Database,
    ex: &'b Expander<'a>,
    order: Vec<usize>,
    budget: u64,
    steps: u64,
    out: Vec<Row>,
    relvars: VarSet,
}

impl Oracle<'_, '_> {
    fn go(&mut self, depth: usize, assigned: VarSet, row: &mut Vec<Val>) -> Result<()> {
        if depth == self.order.len() {
            let mut full = row.clone();
            if self.ex.expand_row(&mut full, self.relvars) && self.ex.check_fds(&full, self.db.query.all()) {
                self.out.push(full.into_boxed_slice());
            }
            return Ok(());
        }
        let v = self.order[depth];
        let rels: Vec<&Table> = self.db.tables.iter().filter(|t| t.vars >> v & 1 == 1).collect();
        // smallest candidate bucket drives the enumeration
        let mut best: Option<(usize, Vec<u32>)> = None;
        for (i, t) in rels.iter().enumerate() {
            let k = t.vars & assigned;
            let ix = t.index(k);
            let bucket = ix.get(&key_of(row, k)).cloned().unwrap_or_default();
            if best.as_ref().map_or(true, |b| bucket.len() < b.1.len()) {
                best = Some((i, bucket));
            }
        }
        let (bi, bucket) = best.unwrap();
        let mut cands: Vec<Val> = bucket.iter().map(|&r| rels[bi].rows[r as usize][v]).collect();
        cands.sort_unstable();
        cands.dedup();
        let next = assigned | 1 << v;
        for c in cands {
            self.steps += 1;
            if self.steps > self.budget {
                return Err(Error::OracleOverflow(self.budget));
            }
            row[v] = c;
            let ok = rels
                .iter()
                .enumerate()
                .all(|(i, t)| i == bi || t.contains_key(t.vars & next, &key_of(row, t.vars & next)));
            if ok {
                self.go(depth + 1, next, row)?;
            }
        }
        row[v] = UNSET;
        Ok(())
    }
}

/// Π_{vars}(Q) for checking level invariants.
pub fn project_rows(t: &Table, to: VarSet) -> Table {
    let rows = t.rows.iter().map(|r| restrict(r, to)).collect();
    Table::new(to, t.width, rows)
}
