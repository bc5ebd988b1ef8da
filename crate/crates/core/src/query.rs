//! Queries: variables, relations, functional dependencies, degree bounds.

use crate::error::{Error, Result};

/// Bitset over the query's variable order.
pub type VarSet = u32;

pub const MAX_VARS: usize = 20;

pub fn bits(s: VarSet) -> impl Iterator<Item = usize> {
    (0..32).filter(move |i| s >> i & 1 == 1)
}

pub fn popcount(s: VarSet) -> u32 {
    s.count_ones()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FdSource {
    /// Holds inside the named relation, which is used as a lookup at expansion time.
    Guard(String),
    /// Computed by the named UDF (single-variable rhs).
    Udf(String),
    /// Bound-only analyses; execution refuses.
    Abstract,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fd {
    pub lhs: VarSet,
    pub rhs: VarSet,
    pub source: FdSource,
}

#[derive(Clone, Debug)]
pub struct RelationDecl {
    pub name: String,
    /// Variable indices in schema order.
    pub attrs: Vec<usize>,
    pub cardinality: Option<u64>,
    pub source: Option<String>,
}

impl RelationDecl {
    pub fn set(&self) -> VarSet {
        self.attrs.iter().fold(0, |s, &a| s | 1 << a)
    }
}

#[derive(Clone, Debug)]
pub struct DegreeBound {
    pub given: VarSet,
    pub of: VarSet,
    pub bound: u64,
    /// Relation whose attribute set is `of`.
    pub guard: String,
}

#[derive(Clone, Debug, Default)]
pub struct Query {
    pub vars: Vec<String>,
    pub relations: Vec<RelationDecl>,
    pub fds: Vec<Fd>,
    pub degree_bounds: Vec<DegreeBound>,
}

impl Query {
    pub fn new(vars: &[&str]) -> Self {
        Query { vars: vars.iter().map(|s| s.to_string()).collect(), ..Default::default() }
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn all(&self) -> VarSet {
        if self.vars.len() == 32 {
            u32::MAX
        } else {
            (1u32 << self.vars.len()) - 1
        }
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::UnknownAttribute(name.to_string()))
    }

    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<VarSet> {
        let mut s = 0;
        for n in names {
            s |= 1 << self.var_index(n.as_ref())?;
        }
        Ok(s)
    }

    /// Short form: each var name is one char ("xz" → {x,z}); otherwise comma separated.
    pub fn set(&self, spec: &str) -> VarSet {
        if spec.contains(',') {
            let names: Vec<&str> = spec.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
            self.set_of(&names).expect("unknown var")
        } else {
            let names: Vec<String> = spec.chars().map(|c| c.to_string()).collect();
            self.set_of(&names).expect("unknown var")
        }
    }

    pub fn names(&self, s: VarSet) -> Vec<String> {
        bits(s).map(|i| self.vars[i].clone()).collect()
    }

    pub fn set_label(&self, s: VarSet) -> String {
        if s == 0 {
            return "{}".to_string();
        }
        let names = self.names(s);
        if names.iter().all(|n| n.chars().count() == 1) {
            names.concat()
        } else {
            names.join(",")
        }
    }

    pub fn relation(mut self, name: &str, attrs: &[&str]) -> Self {
        let attrs = attrs.iter().map(|a| self.var_index(a).expect("unknown attr")).collect();
        self.relations.push(RelationDecl { name: name.to_string(), attrs, cardinality: None, source: None });
        self
    }

    pub fn fd(mut self, lhs: &str, rhs: &str, source: FdSource) -> Self {
        let (l, r) = (self.set(lhs), self.set(rhs));
        self.fds.push(Fd { lhs: l, rhs: r, source });
        self
    }

    pub fn relation_index(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    /// Fixpoint of FD application.
    pub fn closure(&self, s: VarSet) -> VarSet {
        let mut c = s;
        loop {
            let before = c;
            for fd in &self.fds {
                if fd.lhs & !c == 0 {
                    c |= fd.rhs;
                }
            }
            if c == before {
                return c;
            }
        }
    }

    pub fn closure_names<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<String>> {
        Ok(self.names(self.closure(self.set_of(names)?)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.vars.len() > MAX_VARS {
            return Err(Error::TooManyVars(self.vars.len(), MAX_VARS));
        }
        for (i, v) in self.vars.iter().enumerate() {
            if self.vars[..i].contains(v) {
                return Err(Error::Validation(format!("duplicate variable {v:?}")));
            }
        }
        for (i, r) in self.relations.iter().enumerate() {
            if self.relations[..i].iter().any(|o| o.name == r.name) {
                return Err(Error::Validation(format!("duplicate relation name {:?}", r.name)));
            }
            if r.attrs.is_empty() {
                return Err(Error::Validation(format!("relation {} has no attributes", r.name)));
            }
            if r.cardinality == Some(0) {
                return Err(Error::Validation(format!("relation {} has cardinality 0", r.name)));
            }
        }
        for fd in &self.fds {
            if fd.rhs == 0 {
                return Err(Error::Validation("fd with empty rhs".into()));
            }
            if (fd.lhs | fd.rhs) & !self.all() != 0 {
                return Err(Error::Validation("fd mentions unknown variable".into()));
            }
            match &fd.source {
                FdSource::Guard(g) => {
                    let r = self
                        .relation_index(g)
                        .ok_or_else(|| Error::Validation(format!("fd guard {g:?} is not a relation")))?;
                    if (fd.lhs | fd.rhs) & !self.relations[r].set() != 0 {
                        return Err(Error::Validation(format!(
                            "fd {} not contained in its guard {g}",
                            self.fd_label(fd)
                        )));
                    }
                }
                FdSource::Udf(_) => {
                    if fd.rhs.count_ones() != 1 {
                        return Err(Error::Validation(format!(
                            "udf-backed fd {} must have a single rhs variable",
                            self.fd_label(fd)
                        )));
                    }
                }
                FdSource::Abstract => {}
            }
        }
        for db in &self.degree_bounds {
            if db.given & !db.of != 0 || db.given == db.of {
                return Err(Error::Validation("degree bound needs given ⊂ of".into()));
            }
            if db.bound == 0 {
                return Err(Error::Validation("degree bound must be ≥ 1".into()));
            }
            let r = self
                .relation_index(&db.guard)
                .ok_or_else(|| Error::Validation(format!("degree bound guard {:?} missing", db.guard)))?;
            if self.relations[r].set() != db.of {
                return Err(Error::Validation("degree bound `of` must match a relation's attributes".into()));
            }
        }
        Ok(())
    }

    pub fn fd_label(&self, fd: &Fd) -> String {
        format!("{}->{}", self.set_label(fd.lhs), self.set_label(fd.rhs))
    }

    /// True when every FD can be evaluated at run time.
    pub fn executable(&self) -> Result<()> {
        for fd in &self.fds {
            if fd.source == FdSource::Abstract {
                return Err(Error::Unexpandable(self.fd_label(fd)));
            }
        }
        Ok(())
    }

    /// FDs realizing a Moore family of closed sets. Each subset S whose current
    /// closure differs from the family's closure gets S → cl_F(S) \ cl(S).
    pub fn fds_from_closed_sets(nvars: usize, family: &[VarSet]) -> Vec<(VarSet, VarSet)> {
        let all = (1u32 << nvars) - 1;
        let cl_f = |s: VarSet| family.iter().filter(|&&c| c & s == s).fold(all, |a, &c| a & c);
        let mut fds: Vec<(VarSet, VarSet)> = Vec::new();
        let mut subsets: Vec<VarSet> = (0..=all).collect();
        subsets.sort_by_key(|s| (s.count_ones(), *s));
        for s in subsets {
            let mut c = s;
            loop {
                let b = c;
                for &(l, r) in &fds {
                    if l & !c == 0 {
                        c |= r;
                    }
                }
                if b == c {
                    break;
                }
            }
            let target = cl_f(s);
            if c != target {
                fds.push((s, target & !c));
            }
        }
        fds
    }
}
