//! Example queries used throughout tests, the CLI and the docs.

use crate::lattice::{Lattice, LatticeFunction};
use crate::query::{DegreeBound, Fd, FdSource, Query, VarSet};
use crate::rational::{q, qi, Q};

pub fn triangle() -> Query {
    Query::new(&["x", "y", "z"]).relation("R", &["x", "y"]).relation("S", &["y", "z"]).relation("T", &["z", "x"])
}

/// Triangle with |σ_{x=v} R| ≤ d1.
pub fn triangle_degree(d1: u64) -> Query {
    let mut qy = triangle();
    qy.degree_bounds.push(DegreeBound { given: qy.set("x"), of: qy.set("xy"), bound: d1, guard: "R".into() });
    qy
}

/// R(x,y), S(y,z), T(z,u) with xz→u and yu→x.
pub fn path_fd() -> Query {
    Query::new(&["x", "y", "z", "u"])
        .relation("R", &["x", "y"])
        .relation("S", &["y", "z"])
        .relation("T", &["z", "u"])
        .fd("xz", "u", FdSource::Udf("f".into()))
        .fd("yu", "x", FdSource::Udf("g".into()))
}

/// Half on singletons and xu, 1 on pairs, 3/2 at the top.
pub fn path_fd_half_h(lat: &Lattice) -> LatticeFunction {
    let mut h = vec![qi(0); lat.len()];
    for s in ["x", "y", "z", "u", "xu"] {
        h[lat.el(s)] = q(1, 2);
    }
    for s in ["xy", "zu", "xyu", "yz", "xzu"] {
        h[lat.el(s)] = qi(1);
    }
    h[lat.top] = q(3, 2);
    h
}

pub fn m3() -> Query {
    Query::new(&["x", "y", "z"])
        .relation("R", &["x"])
        .relation("S", &["y"])
        .relation("T", &["z"])
        .fd("xy", "z", FdSource::Udf("mz".into()))
        .fd("xz", "y", FdSource::Udf("my".into()))
        .fd("yz", "x", FdSource::Udf("mx".into()))
}

/// Boolean algebra 2^{xyz} with the non-normal h (1 on singletons, 2 above).
pub fn non_normal_h(lat: &Lattice) -> LatticeFunction {
    (0..lat.len())
        .map(|e| match lat.set(e).count_ones() {
            0 => qi(0),
            1 => qi(1),
            _ => qi(2),
        })
        .collect()
}

pub fn boolean3() -> Query {
    Query::new(&["x", "y", "z"]).relation("R", &["x"]).relation("S", &["y"]).relation("T", &["z"])
}

/// R(x), S(y), xy→z.
pub fn maximal_no_good() -> Query {
    Query::new(&["x", "y", "z"])
        .relation("R", &["x"])
        .relation("S", &["y"])
        .fd("xy", "z", FdSource::Udf("f".into()))
}

/// Simple FDs a→b, b→c.
pub fn simple_chain() -> Query {
    Query::new(&["a", "b", "c"])
        .relation("R", &["a"])
        .relation("S", &["b", "c"])
        .fd("a", "b", FdSource::Abstract)
        .fd("b", "c", FdSource::Abstract)
}

/// Query whose lattice is the given Moore family. FDs are split to single
/// rhs variables; an FD inside some relation is guarded by it, others get a
/// table UDF named after the FD.
pub fn from_family(vars: &[&str], family: &[&str], relations: &[(&str, &str)]) -> Query {
    let mut qy = Query::new(vars);
    let fam: Vec<VarSet> = family.iter().map(|s| if s.is_empty() { 0 } else { qy.set(s) }).collect();
    for (name, attrs) in relations {
        let names: Vec<String> = attrs.chars().map(|c| c.to_string()).collect();
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        qy = qy.relation(name, &refs);
    }
    let mut fds = vec![];
    for (lhs, rhs) in Query::fds_from_closed_sets(vars.len(), &fam) {
        for v in crate::query::bits(rhs) {
            let both = lhs | 1 << v;
            let source = match qy.relations.iter().find(|r| r.set() & both == both) {
                Some(r) => FdSource::Guard(r.name.clone()),
                None => FdSource::Udf(format!("f_{}_{}", qy.set_label(lhs), qy.vars[v])),
            };
            fds.push(Fd { lhs, rhs: 1 << v, source });
        }
    }
    qy.fds = fds;
    qy
}

pub const BAD_FOR_CHAIN_FAMILY: &[&str] =
    &["", "a", "b", "c", "d", "e", "f", "abc", "ade", "bdf", "cef", "abcdef"];

pub fn bad_for_chain() -> Query {
    from_family(
        &["a", "b", "c", "d", "e", "f"],
        BAD_FOR_CHAIN_FAMILY,
        &[("R", "abc"), ("S", "ade"), ("T", "bdf"), ("U", "cef")],
    )
}

pub const NO_SMP_FAMILY: &[&str] = &[
    "", "p", "q", "r", "pq", "pr", "qr", "pqx", "pry", "qrz", "pqr", "apqr", "bpqr", "cpqr", "abpqrx", "acpqry",
    "bcpqrz", "abcpqrxyz",
];

pub fn no_smp() -> Query {
    from_family(
        &["p", "q", "r", "x", "y", "z", "a", "b", "c"],
        NO_SMP_FAMILY,
        &[("R", "xpq"), ("S", "ypr"), ("T", "zqr")],
    )
}

pub const NON_TREE_FAMILY: &[&str] = &["", "c", "b", "u", "cz", "bx", "by", "bu", "bcxy", "cbuzxy"];

pub fn non_tree() -> Query {
    from_family(
        &["c", "b", "u", "z", "x", "y"],
        NON_TREE_FAMILY,
        &[("X", "bx"), ("Y", "by"), ("Z", "cz"), ("U", "u")],
    )
}

pub const BAD_SM_PROOF_FAMILY: &[&str] =
    &["", "a", "ax", "ay", "axy", "b", "bz", "bw", "bzw", "axybzw"];

pub fn bad_sm_proof() -> Query {
    from_family(
        &["a", "x", "y", "b", "z", "w"],
        BAD_SM_PROOF_FAMILY,
        &[("X", "ax"), ("Y", "ay"), ("Z", "bz"), ("W", "bw")],
    )
}

/// The certificate of the no-smp example, indexed against the lattice.
pub fn no_smp_reference_cert(lat: &Lattice) -> (Vec<Q>, Vec<Q>) {
    let c = vec![q(1, 2); 3];
    let inc = lat.incomparable_pairs();
    let mut s = vec![qi(0); inc.len()];
    let pairs = [
        ("pqx", "pqr"),
        ("pry", "pqr"),
        ("qrz", "pqr"),
        ("abpqrx", "acpqry"),
        ("apqr", "bcpqrz"),
        ("pq", "pr"),
        ("p", "qr"),
    ];
    for (a, b) in pairs {
        let (a, b) = (lat.el(a), lat.el(b));
        let k = inc.iter().position(|&(u, v)| (u, v) == (a.min(b), a.max(b))).expect("pair is incomparable");
        s[k] = q(1, 2);
    }
    (c, s)
}

pub fn all_queries() -> Vec<(&'static str, Query)> {
    vec![
        ("triangle", triangle()),
        ("path_fd", path_fd()),
        ("m3", m3()),
        ("boolean3", boolean3()),
        ("maximal_no_good", maximal_no_good()),
        ("simple_chain", simple_chain()),
        ("bad_for_chain", bad_for_chain()),
        ("no_smp", no_smp()),
        ("non_tree", non_tree()),
        ("bad_sm_proof", bad_sm_proof()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families_round_trip() {
        for (fam, qy) in [
            (BAD_FOR_CHAIN_FAMILY, bad_for_chain()),
            (NO_SMP_FAMILY, no_smp()),
            (NON_TREE_FAMILY, non_tree()),
            (BAD_SM_PROOF_FAMILY, bad_sm_proof()),
        ] {
            qy.validate().unwrap();
            let lat = Lattice::from_query(&qy).unwrap();
            assert_eq!(lat.len(), fam.len());
            for s in fam {
                lat.el(s);
            }
        }
    }

    #[test]
    fn bad_for_chain_shape() {
        let lat = Lattice::from_query(&bad_for_chain()).unwrap();
        assert_eq!(lat.coatoms.len(), 4);
        assert_eq!(lat.atoms.len(), 6);
        assert_eq!(lat.join(lat.el("a"), lat.el("f")), lat.top);
    }
}
