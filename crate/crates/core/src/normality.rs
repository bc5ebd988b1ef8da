//! Co-atomic hypergraph, edge covers, normal functions and normal lattices.

use num::traits::{Signed, Zero};
use serde::Serialize;

use crate::bounds::check_output_inequality;
use crate::error::{Error, Result};
use crate::gen::quasi_product;
use crate::lattice::{canonical_embedding, Lattice, LatticeFunction};
use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::query::Query;
use crate::rational::{lcm_denoms, one, qi, to_u64, zero, Q};
use crate::relation::Database;

#[derive(Clone, Debug, Serialize)]
pub struct Hypergraph {
    pub vertices: Vec<usize>,
    /// (name, vertices) per relation, in relation order.
    pub edges: Vec<(String, Vec<usize>)>,
}

impl Hypergraph {
    pub fn isolated(&self) -> Vec<usize> {
        self.vertices.iter().copied().filter(|v| !self.edges.iter().any(|e| e.1.contains(v))).collect()
    }
}

/// Lattice elements of the relations, in relation order.
pub fn relation_elements(lat: &Lattice, q: &Query) -> Vec<usize> {
    q.relations.iter().map(|r| lat.closed(r.set())).collect()
}

/// Vertices are co-atoms; e_j holds the co-atoms not above R_j.
pub fn coatomic_hypergraph(lat: &Lattice, rels: &[usize], names: &[String]) -> Hypergraph {
    let edges = rels
        .iter()
        .zip(names)
        .map(|(&r, name)| (name.clone(), lat.coatoms.iter().copied().filter(|&z| !lat.leq(r, z)).collect()))
        .collect();
    Hypergraph { vertices: lat.coatoms.clone(), edges }
}

/// min Σ n_j w_j over fractional edge covers; `None` when a vertex is isolated.
pub fn fractional_edge_cover(hg: &Hypergraph, n: &[Q]) -> Result<Option<(Vec<Q>, Q)>> {
    if !hg.isolated().is_empty() {
        return Ok(None);
    }
    let mut lp = LinearProgram::new(false);
    for (j, e) in hg.edges.iter().enumerate() {
        lp.add_var(format!("w_{}", e.0), n[j].clone());
    }
    for &v in &hg.vertices {
        let row: Vec<(usize, Q)> =
            hg.edges.iter().enumerate().filter(|(_, e)| e.1.contains(&v)).map(|(j, _)| (j, one())).collect();
        lp.add_row(format!("cover{v}"), row, Sense::Ge, one());
    }
    match lp.solve()? {
        LpOutcome::Optimal(s) => Ok(Some((s.x, s.objective))),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Unbounded),
    }
}

/// max Σ a_v subject to Σ_{v∈e_j} a_v ≤ n_j.
pub fn fractional_vertex_packing(hg: &Hypergraph, n: &[Q]) -> Result<Option<(Vec<Q>, Q)>> {
    let mut lp = LinearProgram::new(true);
    for &v in &hg.vertices {
        lp.add_var(format!("a{v}"), one());
    }
    for (j, e) in hg.edges.iter().enumerate() {
        let row = e.1.iter().map(|v| (hg.vertices.iter().position(|u| u == v).unwrap(), one())).collect();
        lp.add_row(format!("pack_{}", e.0), row, Sense::Le, n[j].clone());
    }
    match lp.solve()? {
        LpOutcome::Optimal(s) => Ok(Some((s.x, s.objective))),
        _ => Ok(None),
    }
}

#[derive(Clone, Debug)]
pub struct NormalCheck {
    pub normal: bool,
    /// g nonzero only at 1̂ and co-atoms.
    pub strictly: bool,
    pub g: LatticeFunction,
    /// a_Z = −g(Z), so h = Σ a_Z h_Z when normal.
    pub a: LatticeFunction,
}

pub fn is_normal_function(lat: &Lattice, h: &[Q]) -> NormalCheck {
    let g = lat.mobius_invert(h);
    let below_top_ok = (0..lat.len()).all(|x| x == lat.top || !g[x].is_positive());
    let normal = below_top_ok && h[lat.bottom].is_zero();
    let strictly = normal && (0..lat.len()).all(|x| x == lat.top || lat.coatoms.contains(&x) || g[x].is_zero());
    let a = (0..lat.len()).map(|x| if x == lat.top { zero() } else { -&g[x] }).collect();
    NormalCheck { normal, strictly, g, a }
}

/// Σ a_Z h_Z.
pub fn from_steps(lat: &Lattice, a: &[Q]) -> LatticeFunction {
    let mut h = vec![zero(); lat.len()];
    for z in 0..lat.len() {
        if a[z].is_zero() {
            continue;
        }
        for (x, v) in lat.step_function(z).into_iter().enumerate() {
            h[x] += &a[z] * v;
        }
    }
    h
}

/// Solves A x = b over the rationals; `None` if singular.
fn solve_square(mut a: Vec<Vec<Q>>, mut b: Vec<Q>) -> Option<Vec<Q>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col].clone();
        for k in col..n {
            a[col][k] = &a[col][k] / &p;
        }
        b[col] = &b[col] / &p;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for k in col..n {
                    let t = &f * &a[col][k];
                    a[r][k] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    Some(b)
}

/// Basis-choice cap for vertex enumeration.
pub const VERTEX_CAP: u64 = 2_000_000;

fn binom(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul((n - i) as u64) / (i as u64 + 1))
}

/// Vertices of {w ≥ 0 : Σ_{j∋v} w_j ≥ 1 for each vertex v}.
pub fn cover_vertices(hg: &Hypergraph) -> Result<Vec<Vec<Q>>> {
    let m = hg.edges.len();
    let nv = hg.vertices.len();
    // rows 0..m are w_j ≥ 0, rows m.. are cover rows
    let rows: Vec<Vec<Q>> = (0..m)
        .map(|j| (0..m).map(|k| if j == k { one() } else { zero() }).collect())
        .chain(hg.vertices.iter().map(|v| hg.edges.iter().map(|e| if e.1.contains(v) { one() } else { zero() }).collect()))
        .collect();
    let rhs: Vec<Q> = (0..m).map(|_| zero()).chain((0..nv).map(|_| one())).collect();
    let total = m + nv;
    if binom(total, m) > VERTEX_CAP {
        return Err(Error::Cap(format!("vertex enumeration over {} bases", binom(total, m))));
    }
    let mut out: Vec<Vec<Q>> = vec![];
    let mut pick: Vec<usize> = (0..m).collect();
    if m == 0 {
        return Ok(out);
    }
    loop {
        let a = pick.iter().map(|&r| rows[r].clone()).collect();
        let b = pick.iter().map(|&r| rhs[r].clone()).collect();
        if let Some(w) = solve_square(a, b) {
            let feasible = w.iter().all(|x| !x.is_negative())
                && (m..total).all(|r| rows[r].iter().zip(&w).fold(zero(), |s, (c, x)| s + c * x) >= one());
            if feasible && !out.contains(&w) {
                out.push(w);
            }
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                out.sort();
                return Ok(out);
            }
            i -= 1;
            if pick[i] < total - m + i {
                pick[i] += 1;
                for k in i + 1..m {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LatticeNormality {
    pub normal: bool,
    pub vertices: Vec<Vec<Q>>,
    /// Failing vertex w and a polymatroid violating Σ w_j h(R_j) ≥ h(1̂).
    pub witness: Option<(Vec<Q>, LatticeFunction)>,
}

/// Checks the output inequality at every vertex of the co-atomic cover polyhedron.
pub fn is_normal_lattice(lat: &Lattice, rels: &[usize]) -> Result<LatticeNormality> {
    let names: Vec<String> = (0..rels.len()).map(|j| format!("R{j}")).collect();
    let hg = coatomic_hypergraph(lat, rels, &names);
    let vertices = cover_vertices(&hg)?;
    for w in &vertices {
        let chk = check_output_inequality(lat, rels, w)?;
        if !chk.valid {
            return Ok(LatticeNormality { normal: false, vertices: vertices.clone(), witness: Some((w.clone(), chk.witness.unwrap())) });
        }
    }
    Ok(LatticeNormality { normal: true, vertices, witness: None })
}

/// Scales h by the lcm of its denominators.
pub fn scale_to_integral(h: &[Q]) -> (LatticeFunction, u64) {
    let k = to_u64(&lcm_denoms(h.iter()));
    (h.iter().map(|v| v * qi(k as i64)).collect(), k)
}

/// Instance whose entropy is h: canonical embedding with domain [2] per atom.
pub fn materialize_normal(query: &Query, lat: &Lattice, h: &[Q]) -> Result<Database> {
    let chk = is_normal_function(lat, h);
    if !chk.normal {
        return Err(Error::NotNormal("h has a positive Möbius value below 1̂".into()));
    }
    let (emb, dst, _) = canonical_embedding(h, lat)?;
    quasi_product(query, lat, &emb, &dst, 2)
}

#[derive(Debug)]
pub struct QuasiInstance {
    pub db: Database,
    /// Vertex packing over the co-atoms (unit relation sizes).
    pub packing: Vec<Q>,
    pub scale: u64,
    pub domain: u64,
}

fn exact_root(n: u64, k: u64) -> Option<u64> {
    let r = (n as f64).powf(1.0 / k as f64).round() as u64;
    (r.saturating_sub(1)..=r + 1).find(|&c| c > 0 && (c as u128).checked_pow(k as u32) == Some(n as u128))
}

/// Worst-case quasi-product where every relation has size N: a strictly normal
/// h from an optimal co-atomic vertex packing, scaled to integers, domain N^{1/k}.
pub fn quasi_for_query(query: &Query, n_size: u64) -> Result<QuasiInstance> {
    let lat = Lattice::from_query(query)?;
    let rels = relation_elements(&lat, query);
    let names: Vec<String> = query.relations.iter().map(|r| r.name.clone()).collect();
    let hg = coatomic_hypergraph(&lat, &rels, &names);
    let ones = vec![one(); rels.len()];
    let (a, _) = fractional_vertex_packing(&hg, &ones)?.ok_or_else(|| Error::Validation("no vertex packing".into()))?;
    let (ai, k) = scale_to_integral(&a);
    let mut steps = vec![zero(); lat.len()];
    for (i, &z) in hg.vertices.iter().enumerate() {
        steps[z] = ai[i].clone();
    }
    let h = from_steps(&lat, &steps);
    let s = exact_root(n_size, k)
        .ok_or_else(|| Error::Validation(format!("N = {n_size} has no integral {k}-th root; pick N = s^{k}")))?;
    let (emb, dst, _) = canonical_embedding(&h, &lat)?;
    let db = quasi_product(query, &lat, &emb, &dst, s)?;
    Ok(QuasiInstance { db, packing: a, scale: k, domain: s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{brute_force_join, DEFAULT_ORACLE_BUDGET};
    use crate::fixtures;
    use crate::rational::q;

    fn setup(qy: &Query) -> (Lattice, Vec<usize>, Vec<String>) {
        let lat = Lattice::from_query(qy).unwrap();
        let rels = relation_elements(&lat, qy);
        let names = qy.relations.iter().map(|r| r.name.clone()).collect();
        (lat, rels, names)
    }

    #[test]
    fn path_fd_hypergraph() {
        let (lat, rels, names) = setup(&fixtures::path_fd());
        let hg = coatomic_hypergraph(&lat, &rels, &names);
        let mut v = hg.vertices.clone();
        v.sort();
        let mut want = vec![lat.el("xyu"), lat.el("yz"), lat.el("xzu")];
        want.sort();
        assert_eq!(v, want);
        let e = |i: usize, s: &[&str]| {
            let mut a = hg.edges[i].1.clone();
            a.sort();
            let mut b: Vec<usize> = s.iter().map(|x| lat.el(x)).collect();
            b.sort();
            assert_eq!(a, b);
        };
        e(0, &["yz", "xzu"]);
        e(1, &["xyu", "xzu"]);
        e(2, &["xyu", "yz"]);
    }

    #[test]
    fn m3_hypergraph_edges() {
        let (lat, rels, names) = setup(&fixtures::m3());
        let hg = coatomic_hypergraph(&lat, &rels, &names);
        assert_eq!(hg.edges[0].1, vec![lat.el("y"), lat.el("z")]);
    }

    #[test]
    fn covers() {
        let (lat, rels, names) = setup(&fixtures::triangle());
        let hg = coatomic_hypergraph(&lat, &rels, &names);
        let (w, rho) = fractional_edge_cover(&hg, &[qi(4), qi(4), qi(4)]).unwrap().unwrap();
        assert_eq!(rho, qi(6));
        assert_eq!(w, vec![q(1, 2); 3]);
        let (lat, rels, names) = setup(&fixtures::bad_for_chain());
        let hg = coatomic_hypergraph(&lat, &rels, &names);
        let (_, rho) = fractional_edge_cover(&hg, &vec![qi(3); 4]).unwrap().unwrap();
        assert_eq!(rho, qi(4));
        let single = Hypergraph { vertices: vec![1, 2], edges: vec![("R".into(), vec![1, 2])] };
        assert_eq!(fractional_edge_cover(&single, &[qi(5)]).unwrap().unwrap().1, qi(5));
        let iso = Hypergraph { vertices: vec![1, 2], edges: vec![("R".into(), vec![1])] };
        assert!(fractional_edge_cover(&iso, &[qi(5)]).unwrap().is_none());
    }

    #[test]
    fn normal_functions() {
        let lat = Lattice::from_query(&fixtures::path_fd()).unwrap();
        let c = is_normal_function(&lat, &fixtures::path_fd_half_h(&lat));
        assert!(c.normal && c.strictly);
        for &z in &lat.coatoms {
            assert_eq!(c.g[z], q(-1, 2));
        }
        let b = Lattice::from_query(&fixtures::boolean3()).unwrap();
        let c = is_normal_function(&b, &fixtures::non_normal_h(&b));
        assert!(!c.normal);
        assert_eq!(c.g[b.bottom], qi(1));
        for z in 0..lat.len() {
            if z == lat.top {
                continue;
            }
            let c = is_normal_function(&lat, &lat.step_function(z));
            assert!(c.normal);
            assert_eq!(c.a[z], qi(1));
        }
    }

    #[test]
    fn lattice_verdicts() {
        let (lat, rels, _) = setup(&fixtures::m3());
        let v = is_normal_lattice(&lat, &rels).unwrap();
        assert!(!v.normal);
        let (w, h) = v.witness.unwrap();
        assert_eq!(w, vec![q(1, 2); 3]);
        assert!(crate::bounds::is_polymatroid(&lat, &h));
        assert!(crate::bounds::inequality_slack(&lat, &rels, &w, &h).is_negative());
        let (lat, rels, _) = setup(&fixtures::path_fd());
        assert!(is_normal_lattice(&lat, &rels).unwrap().normal);
        let (lat, rels, _) = setup(&fixtures::no_smp());
        assert!(is_normal_lattice(&lat, &rels).unwrap().normal);
    }

    #[test]
    fn materialize_path_fd() {
        let qy = fixtures::path_fd();
        let lat = Lattice::from_query(&qy).unwrap();
        let (h, k) = scale_to_integral(&fixtures::path_fd_half_h(&lat));
        assert_eq!(k, 2);
        let db = materialize_normal(&qy, &lat, &h).unwrap();
        let full = brute_force_join(&db, DEFAULT_ORACLE_BUDGET).unwrap().table;
        assert_eq!(full.len(), 8);
        for x in 0..lat.len() {
            let sz = full.project(lat.set(x)).len() as u64;
            assert_eq!(qi(sz.trailing_zeros() as i64), h[x]);
            assert!(sz.is_power_of_two());
        }
        // x and u share their coordinates
        for r in &full.rows {
            assert_eq!(r[0], r[3]);
        }
    }

    #[test]
    fn materialize_zero() {
        let qy = fixtures::triangle();
        let lat = Lattice::from_query(&qy).unwrap();
        let db = materialize_normal(&qy, &lat, &vec![zero(); lat.len()]).unwrap();
        assert_eq!(brute_force_join(&db, DEFAULT_ORACLE_BUDGET).unwrap().table.len(), 1);
    }

    #[test]
    fn quasi_path_fd_sizes() {
        for n in [4u64, 16, 64] {
            let qi = quasi_for_query(&fixtures::path_fd(), n).unwrap();
            assert_eq!(qi.db.cardinalities(), vec![n; 3]);
            let out = brute_force_join(&qi.db, DEFAULT_ORACLE_BUDGET).unwrap().table.len() as u64;
            assert_eq!(out * out, n * n * n);
        }
        assert!(quasi_for_query(&fixtures::path_fd(), 8).is_err());
    }
}
