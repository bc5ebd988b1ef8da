//! LLP / CLLP construction, dual certificates, output inequalities, monotonization.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeFunction};
use crate::lp::{LinearProgram, LpOutcome, Sense};
use crate::rational::{fmt_q, one, qi, zero, Q};
use num::traits::{Signed, Zero};

/// Log-degree constraint h(Y) − h(X) ≤ n.
#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub x: usize,
    pub y: usize,
    pub n: Q,
}

/// Dual solution. `c` is per pair, `s` per entry of `Lattice::incomparable_pairs`,
/// `m` per entry of `Lattice::covers`. For the LLP, c is w and m is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DualCert {
    pub c: Vec<Q>,
    pub s: Vec<Q>,
    pub m: Vec<Q>,
}

#[derive(Clone, Debug)]
pub struct CllpSolution {
    pub opt: Q,
    pub h: LatticeFunction,
    pub cert: DualCert,
}

struct Layout {
    var_of: Vec<Option<usize>>,
}

impl Layout {
    fn new(lat: &Lattice, lp: &mut LinearProgram) -> Layout {
        let mut var_of = vec![None; lat.len()];
        for x in 0..lat.len() {
            if x != lat.bottom {
                let obj = if x == lat.top { one() } else { zero() };
                var_of[x] = Some(lp.add_var(format!("h({})", lat.label(x)), obj));
            }
        }
        Layout { var_of }
    }

    fn terms(&self, items: &[(usize, i64)]) -> Vec<(usize, Q)> {
        let mut acc: Vec<(usize, Q)> = vec![];
        for &(e, c) in items {
            if let Some(v) = self.var_of[e] {
                if let Some(t) = acc.iter_mut().find(|t| t.0 == v) {
                    t.1 += qi(c);
                } else {
                    acc.push((v, qi(c)));
                }
            }
        }
        acc.retain(|t| !t.1.is_zero());
        acc
    }

    fn h(&self, lat: &Lattice, x: &[Q]) -> LatticeFunction {
        (0..lat.len()).map(|e| self.var_of[e].map(|v| x[v].clone()).unwrap_or_else(zero)).collect()
    }
}

fn add_submod_rows(lat: &Lattice, lp: &mut LinearProgram, lay: &Layout, inc: &[(usize, usize)]) {
    for &(a, b) in inc {
        let t = lay.terms(&[(lat.meet(a, b), 1), (lat.join(a, b), 1), (a, -1), (b, -1)]);
        lp.add_row(format!("sm({},{})", lat.label(a), lat.label(b)), t, Sense::Le, zero());
    }
}

/// max h(1̂) s.t. submodularity on incomparable pairs, h(R_j) ≤ n_j, h ≥ 0.
pub fn build_llp(lat: &Lattice, rels: &[usize], n: &[Q]) -> LinearProgram {
    let mut lp = LinearProgram::new(true);
    let lay = Layout::new(lat, &mut lp);
    add_submod_rows(lat, &mut lp, &lay, &lat.incomparable_pairs());
    for (j, &r) in rels.iter().enumerate() {
        let t = lay.terms(&[(r, 1)]);
        lp.add_row(format!("card{j}({})", lat.label(r)), t, Sense::Le, n[j].clone());
    }
    lp
}

/// CLLP rows are ordered: pairs, submodularity, monotonicity on covers.
pub fn build_cllp(lat: &Lattice, pairs: &[Pair]) -> LinearProgram {
    let mut lp = LinearProgram::new(true);
    let lay = Layout::new(lat, &mut lp);
    for (k, p) in pairs.iter().enumerate() {
        let t = lay.terms(&[(p.y, 1), (p.x, -1)]);
        lp.add_row(format!("deg{k}({}|{})", lat.label(p.y), lat.label(p.x)), t, Sense::Le, p.n.clone());
    }
    add_submod_rows(lat, &mut lp, &lay, &lat.incomparable_pairs());
    for &(a, b) in &lat.covers {
        let t = lay.terms(&[(a, 1), (b, -1)]);
        lp.add_row(format!("mono({},{})", lat.label(a), lat.label(b)), t, Sense::Le, zero());
    }
    lp
}

/// Dual of the CLLP as an explicit program: min Σ n·c subject to netflow constraints.
pub fn build_dual_cllp(lat: &Lattice, pairs: &[Pair]) -> LinearProgram {
    let inc = lat.incomparable_pairs();
    let mut lp = LinearProgram::new(false);
    let cvars: Vec<usize> = pairs
        .iter()
        .map(|p| lp.add_var(format!("c({}|{})", lat.label(p.y), lat.label(p.x)), p.n.clone()))
        .collect();
    let svars: Vec<usize> =
        inc.iter().map(|&(a, b)| lp.add_var(format!("s({},{})", lat.label(a), lat.label(b)), zero())).collect();
    let mvars: Vec<usize> =
        lat.covers.iter().map(|&(a, b)| lp.add_var(format!("m({},{})", lat.label(a), lat.label(b)), zero())).collect();
    for z in 0..lat.len() {
        if z == lat.bottom {
            continue;
        }
        let mut t: Vec<(usize, Q)> = vec![];
        for (k, p) in pairs.iter().enumerate() {
            if p.y == z {
                t.push((cvars[k], one()));
            }
            if p.x == z {
                t.push((cvars[k], -one()));
            }
        }
        for (k, &(a, b)) in inc.iter().enumerate() {
            let coef = [lat.meet(a, b) == z, lat.join(a, b) == z].iter().filter(|&&v| v).count() as i64
                - [a == z, b == z].iter().filter(|&&v| v).count() as i64;
            if coef != 0 {
                t.push((svars[k], qi(coef)));
            }
        }
        for (k, &(a, b)) in lat.covers.iter().enumerate() {
            if a == z {
                t.push((mvars[k], one()));
            }
            if b == z {
                t.push((mvars[k], -one()));
            }
        }
        let rhs = if z == lat.top { one() } else { zero() };
        lp.add_row(format!("netflow({})", lat.label(z)), t, Sense::Ge, rhs);
    }
    lp
}

/// netflow(Z) of a certificate, computed directly from its definition.
pub fn netflow(lat: &Lattice, pairs: &[Pair], cert: &DualCert, z: usize) -> Q {
    let mut f = zero();
    for (k, p) in pairs.iter().enumerate() {
        if p.y == z {
            f += &cert.c[k];
        }
        if p.x == z {
            f -= &cert.c[k];
        }
    }
    for (k, (a, b)) in lat.incomparable_pairs().into_iter().enumerate() {
        let s = &cert.s[k];
        if s.is_zero() {
            continue;
        }
        if lat.meet(a, b) == z {
            f += s;
        }
        if lat.join(a, b) == z {
            f += s;
        }
        if a == z {
            f -= s;
        }
        if b == z {
            f -= s;
        }
    }
    for (k, &(a, b)) in lat.covers.iter().enumerate() {
        if a == z {
            f += &cert.m[k];
        }
        if b == z {
            f -= &cert.m[k];
        }
    }
    f
}

/// Re-checks nonnegativity and netflow; returns the objective Σ n·c.
pub fn check_dual(lat: &Lattice, pairs: &[Pair], cert: &DualCert) -> Result<Q> {
    let neg = cert.c.iter().chain(&cert.s).chain(&cert.m).any(|v| v.is_negative());
    if neg {
        return Err(Error::Invariant("negative dual entry".into()));
    }
    for z in 0..lat.len() {
        if z == lat.bottom {
            continue;
        }
        let f = netflow(lat, pairs, cert, z);
        let need = if z == lat.top { one() } else { zero() };
        if f < need {
            return Err(Error::Invariant(format!("netflow({}) = {} < {}", lat.label(z), fmt_q(&f), fmt_q(&need))));
        }
    }
    Ok(pairs.iter().zip(&cert.c).fold(zero(), |acc, (p, c)| acc + &p.n * c))
}

pub fn relation_pairs(lat: &Lattice, rels: &[usize], n: &[Q]) -> Vec<Pair> {
    rels.iter().zip(n).map(|(&r, n)| Pair { x: lat.bottom, y: r, n: n.clone() }).collect()
}

/// Relation pairs plus one pair per degree bound, with log sizes rounded up to
/// multiples of 1/den (exact on powers of two).
pub fn query_pairs(lat: &Lattice, q: &crate::query::Query, sizes: &[u64], den: u64) -> Vec<Pair> {
    let mut pairs: Vec<Pair> = q
        .relations
        .iter()
        .zip(sizes)
        .map(|(r, &s)| Pair { x: lat.bottom, y: lat.closed(r.set()), n: crate::rational::log2_upper(s, den) })
        .collect();
    for b in &q.degree_bounds {
        let (x, y) = (lat.closed(b.given), lat.closed(b.of));
        if x != y {
            pairs.push(Pair { x, y, n: crate::rational::log2_upper(b.bound, den) });
        }
    }
    pairs
}

/// LLP optimum; `None` when unbounded (some co-atom uncovered).
pub fn solve_llp(lat: &Lattice, rels: &[usize], n: &[Q]) -> Result<Option<CllpSolution>> {
    let lp = build_llp(lat, rels, n);
    let sol = match lp.solve()? {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Unbounded => return Ok(None),
        LpOutcome::Infeasible => return Err(Error::Infeasible),
    };
    let ninc = lat.incomparable_pairs().len();
    let s = sol.duals[..ninc].to_vec();
    let c = sol.duals[ninc..].to_vec();
    let cert = DualCert { c, s, m: vec![zero(); lat.covers.len()] };
    let h = layout_h(lat, &sol.x);
    let pairs = relation_pairs(lat, rels, n);
    let obj = check_dual(lat, &pairs, &cert)?;
    if obj != sol.objective {
        return Err(Error::Invariant("LLP certificate objective mismatch".into()));
    }
    Ok(Some(CllpSolution { opt: sol.objective, h, cert }))
}

fn layout_h(lat: &Lattice, x: &[Q]) -> LatticeFunction {
    let mut lp = LinearProgram::new(true);
    Layout::new(lat, &mut lp).h(lat, x)
}

/// CLLP optimum with certificate; `refine` prefers smaller dual support.
pub fn solve_cllp(lat: &Lattice, pairs: &[Pair], refine: bool) -> Result<Option<CllpSolution>> {
    let lp = build_cllp(lat, pairs);
    let out = if refine { lp.solve_refined()? } else { lp.solve()? };
    let sol = match out {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Unbounded => return Ok(None),
        LpOutcome::Infeasible => return Err(Error::Infeasible),
    };
    let np = pairs.len();
    let ninc = lat.incomparable_pairs().len();
    let cert = DualCert {
        c: sol.duals[..np].to_vec(),
        s: sol.duals[np..np + ninc].to_vec(),
        m: sol.duals[np + ninc..].to_vec(),
    };
    let obj = check_dual(lat, pairs, &cert)?;
    if obj != sol.objective {
        return Err(Error::Invariant("CLLP certificate objective mismatch".into()));
    }
    Ok(Some(CllpSolution { opt: sol.objective, h: layout_h(lat, &sol.x), cert }))
}

pub fn is_submodular(lat: &Lattice, h: &[Q]) -> bool {
    lat.incomparable_pairs()
        .into_iter()
        .all(|(a, b)| &h[a] + &h[b] >= &h[lat.meet(a, b)] + &h[lat.join(a, b)])
}

pub fn is_monotone(lat: &Lattice, h: &[Q]) -> bool {
    lat.covers.iter().all(|&(a, b)| h[a] <= h[b])
}

/// h(0̂) = 0, monotone, submodular.
pub fn is_polymatroid(lat: &Lattice, h: &[Q]) -> bool {
    h[lat.bottom].is_zero() && h.iter().all(|v| !v.is_negative()) && is_monotone(lat, h) && is_submodular(lat, h)
}

/// h̄(0̂)=0, h̄(X) = min_{Y⪰X} h(Y).
pub fn lovasz_monotonize(lat: &Lattice, h: &[Q]) -> Result<LatticeFunction> {
    if h.iter().any(|v| v.is_negative()) || !is_submodular(lat, h) {
        return Err(Error::Validation("monotonization needs a nonnegative submodular function".into()));
    }
    Ok((0..lat.len())
        .map(|x| {
            if x == lat.bottom {
                zero()
            } else {
                lat.above(x).map(|y| h[y].clone()).min().unwrap()
            }
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct OutputCheck {
    pub valid: bool,
    /// Submodularity multipliers (indexed like `incomparable_pairs`) when valid.
    pub s: Option<Vec<Q>>,
    /// Polymatroid violating the inequality when invalid.
    pub witness: Option<LatticeFunction>,
}

/// Decides Σ w_j h(R_j) ≥ h(1̂) over all polymatroids.
pub fn check_output_inequality(lat: &Lattice, rels: &[usize], w: &[Q]) -> Result<OutputCheck> {
    let mut lp = LinearProgram::new(true);
    let lay = Layout::new(lat, &mut lp);
    for (j, &r) in rels.iter().enumerate() {
        if let Some(v) = lay.var_of[r] {
            lp.objective[v] -= &w[j];
        }
    }
    let inc = lat.incomparable_pairs();
    add_submod_rows(lat, &mut lp, &lay, &inc);
    let t = lay.terms(&[(lat.top, 1)]);
    lp.add_row("norm", t, Sense::Le, one());
    let sol = lp.solve()?.optimal()?;
    if sol.objective.is_zero() {
        let s = sol.duals[..inc.len()].to_vec();
        Ok(OutputCheck { valid: true, s: Some(s), witness: None })
    } else {
        let h = lay.h(lat, &sol.x);
        let hb = lovasz_monotonize(lat, &h)?;
        Ok(OutputCheck { valid: false, s: None, witness: Some(hb) })
    }
}

/// Evaluates Σ w_j h(R_j) − h(1̂).
pub fn inequality_slack(lat: &Lattice, rels: &[usize], w: &[Q], h: &[Q]) -> Q {
    rels.iter().zip(w).fold(zero(), |acc, (&r, wj)| acc + wj * &h[r]) - &h[lat.top]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rational::q;

    fn rels_of(lat: &Lattice, qy: &crate::query::Query) -> Vec<usize> {
        qy.relations.iter().map(|r| lat.closed(r.set())).collect()
    }

    #[test]
    fn triangle_llp() {
        let qy = fixtures::triangle();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = rels_of(&lat, &qy);
        let n = vec![qi(4); 3];
        let sol = solve_llp(&lat, &rels, &n).unwrap().unwrap();
        assert_eq!(sol.opt, qi(6));
        assert_eq!(sol.cert.c, vec![q(1, 2); 3]);
    }

    #[test]
    fn bad_for_chain_llp() {
        let qy = fixtures::bad_for_chain();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = rels_of(&lat, &qy);
        let sol = solve_llp(&lat, &rels, &vec![qi(3); 4]).unwrap().unwrap();
        assert_eq!(sol.opt, qi(4));
    }

    #[test]
    fn fd_two_relation_bound() {
        // R(x), S(y), T(x,y,z), xy→z
        let qy = crate::query::Query::new(&["x", "y", "z"])
            .relation("R", &["x"])
            .relation("S", &["y"])
            .relation("T", &["x", "y", "z"])
            .fd("xy", "z", crate::query::FdSource::Abstract);
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = rels_of(&lat, &qy);
        let sol = solve_llp(&lat, &rels, &[qi(2), qi(2), qi(10)]).unwrap().unwrap();
        assert_eq!(sol.opt, qi(4));
    }

    #[test]
    fn cllp_matches_llp_and_dual_program() {
        for (name, qy) in fixtures::all_queries() {
            let lat = Lattice::from_query(&qy).unwrap();
            let rels = rels_of(&lat, &qy);
            let n = vec![qi(2); rels.len()];
            let a = solve_llp(&lat, &rels, &n).unwrap().map(|s| s.opt);
            let pairs = relation_pairs(&lat, &rels, &n);
            let b = solve_cllp(&lat, &pairs, false).unwrap().map(|s| s.opt);
            assert_eq!(a, b, "{name}");
            if let Some(v) = a {
                let d = build_dual_cllp(&lat, &pairs).solve().unwrap().optimal().unwrap();
                assert_eq!(d.objective, v, "{name}");
            }
        }
    }

    #[test]
    fn output_inequalities() {
        let qy = fixtures::triangle();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = rels_of(&lat, &qy);
        let chk = check_output_inequality(&lat, &rels, &vec![q(1, 2); 3]).unwrap();
        assert!(chk.valid);
        let s = chk.s.unwrap();
        let pairs = relation_pairs(&lat, &rels, &[qi(1), qi(1), qi(1)]);
        let cert = DualCert { c: vec![q(1, 2); 3], s, m: vec![zero(); lat.covers.len()] };
        check_dual(&lat, &pairs, &cert).unwrap();

        let qy = fixtures::m3();
        let lat = Lattice::from_query(&qy).unwrap();
        let rels = rels_of(&lat, &qy);
        let chk = check_output_inequality(&lat, &rels, &vec![q(1, 2); 3]).unwrap();
        assert!(!chk.valid);
        let h = chk.witness.unwrap();
        assert!(is_polymatroid(&lat, &h));
        assert!(inequality_slack(&lat, &rels, &vec![q(1, 2); 3], &h).is_negative());
    }

    #[test]
    fn monotonize_examples() {
        let lat = Lattice::from_query(&fixtures::path_fd()).unwrap();
        let h = fixtures::path_fd_half_h(&lat);
        assert_eq!(lovasz_monotonize(&lat, &h).unwrap(), h);
        // shifting by a constant keeps submodularity; h(0̂) becomes 5
        let h5: Vec<Q> = h.iter().map(|v| v + qi(5)).collect();
        let hb = lovasz_monotonize(&lat, &h5).unwrap();
        assert!(hb[lat.bottom].is_zero());
        assert!(is_polymatroid(&lat, &hb));
        assert_eq!(hb[lat.top], h5[lat.top]);
    }
}
