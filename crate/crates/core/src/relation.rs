//! Tables, indexes, UDFs and database instances.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::query::{bits, FdSource, Query, VarSet};

/// Interned value id.
pub type Val = u32;
/// Marks an unbound slot in a full-width row.
pub const UNSET: Val = u32::MAX;
/// Full-width row indexed by variable id.
pub type Row = Box<[Val]>;
pub type Key = Vec<Val>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    pub fn parse(s: &str) -> Value {
        match s.parse::<i64>() {
            Ok(i) => Value::Int(i),
            Err(_) => Value::Str(s.to_string()),
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dict {
    vals: Vec<Value>,
    map: HashMap<Value, Val>,
}

impl Dict {
    pub fn intern(&mut self, v: Value) -> Val {
        if let Some(&id) = self.map.get(&v) {
            return id;
        }
        let id = self.vals.len() as Val;
        self.vals.push(v.clone());
        self.map.insert(v, id);
        id
    }

    pub fn int(&mut self, i: i64) -> Val {
        self.intern(Value::Int(i))
    }

    pub fn get(&self, id: Val) -> &Value {
        &self.vals[id as usize]
    }

    pub fn lookup(&self, v: &Value) -> Option<Val> {
        self.map.get(v).copied()
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }
}

pub fn key_of(row: &[Val], set: VarSet) -> Key {
    bits(set).map(|i| row[i]).collect()
}

pub type Index = HashMap<Key, Vec<u32>>;

/// Rows over the variable set `vars`, stored full width.
#[derive(Debug)]
pub struct Table {
    pub vars: VarSet,
    pub width: usize,
    pub rows: Vec<Row>,
    indexes: Mutex<HashMap<VarSet, Arc<Index>>>,
}

impl Clone for Table {
    fn clone(&self) -> Self {
        Table { vars: self.vars, width: self.width, rows: self.rows.clone(), indexes: Mutex::new(HashMap::new()) }
    }
}

impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.rows == other.rows
    }
}

impl Table {
    /// Deduplicates and sorts for deterministic iteration.
    pub fn new(vars: VarSet, width: usize, rows: Vec<Row>) -> Table {
        let mut rows = rows;
        rows.sort_unstable();
        rows.dedup();
        Table { vars, width, rows, indexes: Mutex::new(HashMap::new()) }
    }

    pub fn empty(vars: VarSet, width: usize) -> Table {
        Table::new(vars, width, vec![])
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Hash index on the projection to `key` (built once, cached).
    pub fn index(&self, key: VarSet) -> Arc<Index> {
        let mut g = self.indexes.lock().unwrap();
        if let Some(ix) = g.get(&key) {
            return ix.clone();
        }
        let mut ix: Index = HashMap::new();
        for (i, r) in self.rows.iter().enumerate() {
            ix.entry(key_of(r, key)).or_default().push(i as u32);
        }
        let ix = Arc::new(ix);
        g.insert(key, ix.clone());
        ix
    }

    /// |σ_{Z=v}(T)|.
    pub fn degree(&self, z: VarSet, v: &[Val]) -> usize {
        self.index(z).get(v).map_or(0, |b| b.len())
    }

    pub fn max_degree(&self, z: VarSet) -> usize {
        self.index(z).values().map(|b| b.len()).max().unwrap_or(0)
    }

    pub fn contains_key(&self, z: VarSet, v: &[Val]) -> bool {
        self.index(z).contains_key(v)
    }

    pub fn project(&self, to: VarSet) -> Table {
        let rows = self.rows.iter().map(|r| restrict(r, to)).collect();
        Table::new(to, self.width, rows)
    }

    /// Keeps rows whose projection onto `other.vars ∩ self.vars` appears in `other`.
    pub fn semijoin(&self, other: &Table) -> Table {
        let k = self.vars & other.vars;
        let ix = other.index(k);
        let rows = self.rows.iter().filter(|r| ix.contains_key(&key_of(r, k))).cloned().collect();
        Table::new(self.vars, self.width, rows)
    }

    pub fn intersect(&self, other: &Table) -> Table {
        assert_eq!(self.vars, other.vars);
        let set: HashSet<&Row> = other.rows.iter().collect();
        let rows = self.rows.iter().filter(|r| set.contains(r)).cloned().collect();
        Table::new(self.vars, self.width, rows)
    }

    pub fn union_all(vars: VarSet, width: usize, parts: impl IntoIterator<Item = Table>) -> Table {
        let mut rows = vec![];
        for p in parts {
            rows.extend(p.rows);
        }
        Table::new(vars, width, rows)
    }
}

pub fn restrict(row: &[Val], to: VarSet) -> Row {
    (0..row.len()).map(|i| if to >> i & 1 == 1 { row[i] } else { UNSET }).collect()
}

pub fn blank(width: usize) -> Vec<Val> {
    vec![UNSET; width]
}

#[derive(Clone, Debug)]
pub enum Udf {
    Concat,
    SumMod(i64),
    Proj(usize),
    Const(Value),
    /// Finite lookup; a miss means no value.
    Table(HashMap<Key, Val>),
}

impl Udf {
    pub fn eval(&self, args: &[Val], dict: &Mutex<Dict>) -> Option<Val> {
        match self {
            Udf::Proj(i) => args.get(*i).copied(),
            Udf::Table(m) => m.get(args).copied(),
            Udf::Const(v) => Some(dict.lock().unwrap().intern(v.clone())),
            Udf::SumMod(m) => {
                let mut d = dict.lock().unwrap();
                let mut acc: i64 = 0;
                for &a in args {
                    match d.get(a) {
                        Value::Int(i) => acc = (acc + i.rem_euclid(*m)) % m,
                        Value::Str(_) => return None,
                    }
                }
                Some(d.int(acc))
            }
            Udf::Concat => {
                let mut d = dict.lock().unwrap();
                let s: Vec<String> = args.iter().map(|&a| d.get(a).to_string()).collect();
                Some(d.intern(Value::Str(s.join("|"))))
            }
        }
    }
}

/// A database instance for a query: one table per relation, UDFs by name.
#[derive(Debug)]
pub struct Database {
    pub query: Query,
    pub tables: Vec<Table>,
    pub udfs: HashMap<String, Udf>,
    pub dict: Mutex<Dict>,
}

impl Database {
    /// Validates table schemas, guarded FDs and degree bounds.
    pub fn new(query: Query, tables: Vec<Table>, udfs: HashMap<String, Udf>, dict: Dict) -> Result<Database> {
        query.validate()?;
        if tables.len() != query.relations.len() {
            return Err(Error::Validation("one table per relation expected".into()));
        }
        for (t, r) in tables.iter().zip(&query.relations) {
            if t.vars != r.set() {
                return Err(Error::Validation(format!("table for {} has the wrong schema", r.name)));
            }
        }
        for fd in &query.fds {
            match &fd.source {
                FdSource::Guard(g) => {
                    let t = &tables[query.relation_index(g).unwrap()];
                    let mut seen: HashMap<Key, Key> = HashMap::new();
                    for r in &t.rows {
                        let l = key_of(r, fd.lhs);
                        let v = key_of(r, fd.rhs);
                        if let Some(prev) = seen.insert(l, v.clone()) {
                            if prev != v {
                                return Err(Error::Validation(format!(
                                    "fd {} violated in guard {g}",
                                    query.fd_label(fd)
                                )));
                            }
                        }
                    }
                }
                FdSource::Udf(u) => {
                    if !udfs.contains_key(u) {
                        return Err(Error::Validation(format!("udf {u:?} not registered")));
                    }
                }
                FdSource::Abstract => {}
            }
        }
        for db in &query.degree_bounds {
            let t = &tables[query.relation_index(&db.guard).unwrap()];
            let d = t.max_degree(db.given) as u64;
            if d > db.bound {
                return Err(Error::Validation(format!(
                    "degree bound {} violated in {}: max degree {d}",
                    db.bound, db.guard
                )));
            }
        }
        Ok(Database { query, tables, udfs, dict: Mutex::new(dict) })
    }

    pub fn width(&self) -> usize {
        self.query.nvars()
    }

    pub fn table(&self, name: &str) -> &Table {
        &self.tables[self.query.relation_index(name).expect("no such relation")]
    }

    pub fn cardinalities(&self) -> Vec<u64> {
        self.tables.iter().map(|t| t.len() as u64).collect()
    }

    /// Renders rows in variable order (all vars of `t`).
    pub fn render(&self, t: &Table) -> Vec<Vec<String>> {
        let d = self.dict.lock().unwrap();
        t.rows.iter().map(|r| bits(t.vars).map(|i| d.get(r[i]).to_string()).collect()).collect()
    }
}

/// Builds a table from value tuples in `attrs` order.
pub fn table_from_values(width: usize, attrs: &[usize], tuples: &[Vec<Value>], dict: &mut Dict) -> Table {
    let vars = attrs.iter().fold(0, |s, &a| s | 1 << a);
    let rows = tuples
        .iter()
        .map(|t| {
            let mut r = blank(width);
            for (k, &a) in attrs.iter().enumerate() {
                r[a] = dict.intern(t[k].clone());
            }
            r.into_boxed_slice()
        })
        .collect();
    Table::new(vars, width, rows)
}

/// Integer tuples convenience.
pub fn table_from_ints(width: usize, attrs: &[usize], tuples: &[Vec<i64>], dict: &mut Dict) -> Table {
    let vals: Vec<Vec<Value>> = tuples.iter().map(|t| t.iter().map(|&i| Value::Int(i)).collect()).collect();
    table_from_values(width, attrs, &vals, dict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degree_examples() {
        let mut d = Dict::default();
        let t = table_from_ints(2, &[0, 1], &[vec![1, 1], vec![1, 2], vec![2, 1]], &mut d);
        let one = d.int(1);
        assert_eq!(t.degree(0b01, &[one]), 2);
        assert_eq!(t.degree(0, &[]), 3);
        let nine = d.int(9);
        assert_eq!(t.degree(0b01, &[nine]), 0);
    }

    #[test]
    fn dedup_and_semijoin() {
        let mut d = Dict::default();
        let t = table_from_ints(2, &[0, 1], &[vec![1, 1], vec![1, 1], vec![2, 3]], &mut d);
        assert_eq!(t.len(), 2);
        let s = table_from_ints(2, &[1], &[vec![3]], &mut d);
        assert_eq!(t.semijoin(&s).len(), 1);
    }

    #[test]
    fn udf_builtins() {
        let dict = Mutex::new(Dict::default());
        let (a, b) = {
            let mut g = dict.lock().unwrap();
            (g.int(5), g.int(7))
        };
        let s = Udf::SumMod(4).eval(&[a, b], &dict).unwrap();
        assert_eq!(dict.lock().unwrap().get(s), &Value::Int(0));
        assert_eq!(Udf::Proj(1).eval(&[a, b], &dict), Some(b));
        let c = Udf::Concat.eval(&[a, b], &dict).unwrap();
        assert_eq!(dict.lock().unwrap().get(c), &Value::Str("5|7".into()));
        assert_eq!(Udf::Table(HashMap::new()).eval(&[a], &dict), None);
    }
}
