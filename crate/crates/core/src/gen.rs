//! Instance generators: product, AGM worst case, quasi-product, modular, random FD-respecting.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::fixtures;
use crate::lattice::{Embedding, Lattice};
use crate::lp::{LinearProgram, Sense};
use crate::query::{bits, Fd, FdSource, Query, RelationDecl, VarSet};
use crate::rational::{qi, to_f64, zero};
use crate::relation::{key_of, table_from_values, Database, Dict, Key, Table, Udf, Value};

/// Projects full tuples (variable order) onto each relation and realizes every
/// UDF-backed FD as a lookup table read off the tuples.
pub fn database_from_full(query: &Query, full: &[Vec<Value>], mut udfs: HashMap<String, Udf>) -> Result<Database> {
    let mut dict = Dict::default();
    let width = query.nvars();
    let all: Vec<usize> = (0..width).collect();
    let ft = table_from_values(width, &all, full, &mut dict);
    let tables: Vec<Table> = query.relations.iter().map(|r| ft.project(r.set())).collect();
    for fd in &query.fds {
        if let FdSource::Udf(name) = &fd.source {
            let mut m: HashMap<Key, u32> = HashMap::new();
            for r in &ft.rows {
                let v = r[fd.rhs.trailing_zeros() as usize];
                if let Some(prev) = m.insert(key_of(r, fd.lhs), v) {
                    if prev != v {
                        return Err(Error::Validation(format!("tuples violate fd {}", query.fd_label(fd))));
                    }
                }
            }
            udfs.insert(name.clone(), Udf::Table(m));
        }
    }
    Database::new(query.clone(), tables, udfs, dict)
}

fn ints(t: &[i64]) -> Vec<Value> {
    t.iter().map(|&i| Value::Int(i)).collect()
}

/// Product instance with the given domain size per variable; FD-free queries only.
pub fn product_instance(query: &Query, sizes: &[u64]) -> Result<Database> {
    if !query.fds.is_empty() {
        return Err(Error::Validation("product instances need a query without FDs".into()));
    }
    let mut dict = Dict::default();
    let width = query.nvars();
    let mut tables = vec![];
    for r in &query.relations {
        let mut tuples: Vec<Vec<i64>> = vec![vec![]];
        for &a in &r.attrs {
            let mut next = vec![];
            for t in &tuples {
                for v in 0..sizes[a] as i64 {
                    let mut t2 = t.clone();
                    t2.push(v);
                    next.push(t2);
                }
            }
            tuples = next;
        }
        let vals: Vec<Vec<Value>> = tuples.iter().map(|t| ints(t)).collect();
        tables.push(table_from_values(width, &r.attrs, &vals, &mut dict));
    }
    Database::new(query.clone(), tables, HashMap::new(), dict)
}

/// AGM worst case: product with domain 2^{v_x}, v an optimal fractional vertex packing.
pub fn agm_worst(query: &Query, n_size: u64) -> Result<Database> {
    let n = crate::rational::log2_upper(n_size, 1 << 24);
    let mut lp = LinearProgram::new(true);
    for v in &query.vars {
        lp.add_var(v.clone(), qi(1));
    }
    for r in &query.relations {
        lp.add_row(r.name.clone(), r.attrs.iter().map(|&a| (a, qi(1))).collect(), Sense::Le, n.clone());
    }
    let sol = lp.solve()?.optimal()?;
    let sizes: Vec<u64> = sol.x.iter().map(|v| (to_f64(v).exp2() + 1e-9).floor().max(1.0) as u64).collect();
    product_instance(query, &sizes)
}

/// Pullback of [s]^atoms through an embedding into a Boolean algebra.
/// Variable x carries the coordinates of the atoms in f(x⁺), encoded base s.
pub fn quasi_product(query: &Query, lat: &Lattice, emb: &Embedding, dst: &Lattice, s: u64) -> Result<Database> {
    let m = dst.var_names.len();
    let total = (s as u128).checked_pow(m as u32).filter(|&t| t <= 5_000_000).ok_or_else(|| {
        Error::Cap(format!("quasi-product of {s}^{m} tuples is too large"))
    })? as u64;
    let atoms: Vec<Vec<usize>> = (0..query.nvars())
        .map(|x| {
            let img = emb.map[lat.closed(1 << x)];
            bits(dst.set(img)).collect()
        })
        .collect();
    let mut full = Vec::with_capacity(total as usize);
    let mut coord = vec![0u64; m];
    for idx in 0..total {
        let mut t = idx;
        for c in coord.iter_mut() {
            *c = t % s;
            t /= s;
        }
        let row: Vec<Value> = atoms
            .iter()
            .map(|at| Value::Int(at.iter().rev().fold(0i64, |acc, &a| acc * s as i64 + coord[a] as i64)))
            .collect();
        full.push(row);
    }
    database_from_full(query, &full, HashMap::new())
}

/// Triangle instance from explicit pairs.
pub fn triangle_instance(r: &[(i64, i64)], s: &[(i64, i64)], t: &[(i64, i64)]) -> Database {
    let q = fixtures::triangle();
    let mut dict = Dict::default();
    let mk = |rows: &[(i64, i64)], attrs: &[usize], dict: &mut Dict| {
        let v: Vec<Vec<Value>> = rows.iter().map(|&(a, b)| ints(&[a, b])).collect();
        table_from_values(3, attrs, &v, dict)
    };
    let tables = vec![mk(r, &[0, 1], &mut dict), mk(s, &[1, 2], &mut dict), mk(t, &[2, 0], &mut dict)];
    Database::new(q, tables, HashMap::new(), dict).unwrap()
}

/// Adversarial chain instance: R=S=T={(1,i)}∪{(i,1)}, i ∈ [N/2], with f(x,z)=x, g(y,u)=u.
pub fn path_skew_instance(n: u64) -> Database {
    let q = fixtures::path_fd();
    let mut pairs = vec![];
    for i in 1..=(n / 2).max(1) as i64 {
        pairs.push(ints(&[1, i]));
        pairs.push(ints(&[i, 1]));
    }
    let mut dict = Dict::default();
    let tables = q.relations.iter().map(|r| table_from_values(4, &r.attrs, &pairs, &mut dict)).collect();
    let udfs = HashMap::from([("f".to_string(), Udf::Proj(0)), ("g".to_string(), Udf::Proj(1))]);
    Database::new(q, tables, udfs, dict).unwrap()
}

/// M₃ modular instance D = {(i,j,k) : i+j+k ≡ 0 mod N}.
pub fn m3_instance(n: u64) -> Database {
    let q = fixtures::m3();
    let n = n as i64;
    let mut full = vec![];
    for i in 0..n {
        for j in 0..n {
            full.push(ints(&[i, j, (2 * n - i - j) % n]));
        }
    }
    database_from_full(&q, &full, HashMap::new()).unwrap()
}

/// Random instance whose full tuples satisfy every FD. Domains are [0,domain).
pub fn random_fd_instance<R: Rng>(query: &Query, ntuples: usize, domain: i64, rng: &mut R) -> Result<Database> {
    let width = query.nvars();
    let mut maps: Vec<HashMap<Vec<i64>, Vec<i64>>> = vec![HashMap::new(); query.fds.len()];
    let mut full: Vec<Vec<i64>> = vec![];
    let mut seen = HashSet::new();
    let pick = |row: &[i64], s: VarSet| -> Vec<i64> { bits(s).map(|i| row[i]).collect() };
    for _ in 0..ntuples * 4 {
        if full.len() >= ntuples {
            break;
        }
        let mut row: Vec<i64> = (0..width).map(|_| rng.gen_range(0..domain)).collect();
        // repair against existing FD maps until stable
        let mut ok = true;
        for _ in 0..width + 2 {
            let mut changed = false;
            for (k, fd) in query.fds.iter().enumerate() {
                if let Some(rhs) = maps[k].get(&pick(&row, fd.lhs)) {
                    for (v, &x) in bits(fd.rhs).zip(rhs) {
                        if row[v] != x {
                            row[v] = x;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        for (k, fd) in query.fds.iter().enumerate() {
            if let Some(rhs) = maps[k].get(&pick(&row, fd.lhs)) {
                if *rhs != pick(&row, fd.rhs) {
                    ok = false;
                }
            }
        }
        if !ok || !seen.insert(row.clone()) {
            continue;
        }
        for (k, fd) in query.fds.iter().enumerate() {
            maps[k].insert(pick(&row, fd.lhs), pick(&row, fd.rhs));
        }
        full.push(row);
    }
    let vals: Vec<Vec<Value>> = full.iter().map(|r| ints(r)).collect();
    database_from_full(query, &vals, HashMap::new())
}

/// `random_fd_instance` driven by a ChaCha8 stream from `seed`.
pub fn random_fd_seeded(query: &Query, ntuples: usize, domain: i64, seed: u64) -> Result<Database> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    random_fd_instance(query, ntuples, domain, &mut rng)
}

fn random_relations<R: Rng>(qy: &mut Query, rng: &mut R) {
    let k = qy.nvars();
    let mut covered: VarSet = 0;
    for j in 0..rng.gen_range(2..=4) {
        let s: VarSet = rng.gen_range(1..1u32 << k);
        covered |= s;
        qy.relations.push(RelationDecl { name: format!("R{j}"), attrs: bits(s).collect(), cardinality: None, source: None });
    }
    let rest = qy.all() & !covered;
    if rest != 0 {
        let j = qy.relations.len();
        qy.relations.push(RelationDecl { name: format!("R{j}"), attrs: bits(rest).collect(), cardinality: None, source: None });
    }
}

fn letters(k: usize) -> Vec<String> {
    (0..k).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
}

/// Random closure system on k variables from up to `nfds` abstract FDs, with
/// relations covering every variable.
pub fn random_query<R: Rng>(rng: &mut R, k: usize, nfds: usize) -> Query {
    let names = letters(k);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut qy = Query::new(&refs);
    for _ in 0..rng.gen_range(0..=nfds) {
        let lhs: VarSet = rng.gen_range(1..1u32 << k);
        let v = rng.gen_range(0..k);
        if lhs >> v & 1 == 0 {
            qy.fds.push(Fd { lhs, rhs: 1 << v, source: FdSource::Abstract });
        }
    }
    random_relations(&mut qy, rng);
    qy
}

/// Order ideals of a random poset on k elements: FD x → (elements below x).
/// The resulting lattice is distributive.
pub fn random_distributive_query<R: Rng>(rng: &mut R, k: usize) -> Query {
    let names = letters(k);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut qy = Query::new(&refs);
    let mut below: Vec<VarSet> = vec![0; k];
    for j in 0..k {
        for i in 0..j {
            if rng.gen_bool(0.3) {
                below[j] |= 1 << i | below[i];
            }
        }
    }
    for (j, &b) in below.iter().enumerate() {
        if b != 0 {
            qy.fds.push(Fd { lhs: 1 << j, rhs: b, source: FdSource::Abstract });
        }
    }
    random_relations(&mut qy, rng);
    qy
}

/// Per-element projection sizes of a full instance table, as log₂ check values.
pub fn projection_sizes(lat: &Lattice, full: &Table) -> Vec<usize> {
    (0..lat.len()).map(|e| full.project(lat.set(e)).len()).collect()
}

pub fn zero_h(lat: &Lattice) -> Vec<crate::rational::Q> {
    vec![zero(); lat.len()]
}
