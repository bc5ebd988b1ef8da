//! Exact two-phase simplex over BigRational with Bland's rule.

use crate::error::{Error, Result};
use crate::rational::{lcm_denoms, one, zero, Q};
use num::traits::{Signed, Zero};
use num::BigInt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Q)>,
    pub sense: Sense,
    pub rhs: Q,
    pub name: String,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub var_names: Vec<String>,
    pub objective: Vec<Q>,
    pub maximize: bool,
    pub constraints: Vec<Constraint>,
    /// Variables without the x ≥ 0 bound.
    pub free: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub x: Vec<Q>,
    /// One per constraint; objective = Σ duals·rhs.
    pub duals: Vec<Q>,
    pub objective: Q,
}

#[derive(Clone, Debug)]
pub enum LpOutcome {
    Optimal(Solution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Result<Solution> {
        match self {
            LpOutcome::Optimal(s) => Ok(s),
            LpOutcome::Infeasible => Err(Error::Infeasible),
            LpOutcome::Unbounded => Err(Error::Unbounded),
        }
    }
}

impl LinearProgram {
    pub fn new(maximize: bool) -> Self {
        LinearProgram { maximize, ..Default::default() }
    }

    pub fn add_var(&mut self, name: impl Into<String>, obj: Q) -> usize {
        self.var_names.push(name.into());
        self.objective.push(obj);
        self.free.push(false);
        self.var_names.len() - 1
    }

    pub fn add_row(&mut self, name: impl Into<String>, coeffs: Vec<(usize, Q)>, sense: Sense, rhs: Q) -> usize {
        let coeffs = coeffs.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        self.constraints.push(Constraint { coeffs, sense, rhs, name: name.into() });
        self.constraints.len() - 1
    }

    pub fn nvars(&self) -> usize {
        self.var_names.len()
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        solve_exact(self)
    }

    /// Row activity Σ a_ij x_j.
    pub fn activity(&self, row: usize, x: &[Q]) -> Q {
        self.constraints[row].coeffs.iter().fold(zero(), |acc, (j, c)| acc + c * &x[*j])
    }

    pub fn is_feasible(&self, x: &[Q]) -> bool {
        for (j, v) in x.iter().enumerate() {
            if !self.free[j] && v.is_negative() {
                return false;
            }
        }
        self.constraints.iter().enumerate().all(|(i, c)| {
            let a = self.activity(i, x);
            match c.sense {
                Sense::Le => a <= c.rhs,
                Sense::Ge => a >= c.rhs,
                Sense::Eq => a == c.rhs,
            }
        })
    }

    /// Checks sign conditions and reduced costs of a dual vector.
    pub fn dual_feasible(&self, y: &[Q]) -> bool {
        let sign_ok = self.constraints.iter().zip(y).all(|(c, v)| match (c.sense, self.maximize) {
            (Sense::Eq, _) => true,
            (Sense::Le, true) | (Sense::Ge, false) => !v.is_negative(),
            (Sense::Ge, true) | (Sense::Le, false) => !v.is_positive(),
        });
        if !sign_ok {
            return false;
        }
        let mut col = vec![zero(); self.nvars()];
        for (c, v) in self.constraints.iter().zip(y) {
            if v.is_zero() {
                continue;
            }
            for (j, a) in &c.coeffs {
                col[*j] += a * v;
            }
        }
        (0..self.nvars()).all(|j| {
            let red = &col[j] - &self.objective[j];
            if self.free[j] {
                red.is_zero()
            } else if self.maximize {
                !red.is_negative()
            } else {
                !red.is_positive()
            }
        })
    }

    /// Solve, then among optimal duals pick one minimizing Σ|y| (smaller support).
    /// Only for max problems with Le rows and nonnegative variables.
    pub fn solve_refined(&self) -> Result<LpOutcome> {
        let out = self.solve()?;
        let sol = match out {
            LpOutcome::Optimal(s) => s,
            other => return Ok(other),
        };
        if !self.maximize || self.free.iter().any(|&f| f) || self.constraints.iter().any(|c| c.sense != Sense::Le) {
            return Ok(LpOutcome::Optimal(sol));
        }
        // min Σ y  s.t.  Aᵀy ≥ c, bᵀy = OPT, y ≥ 0
        let mut d = LinearProgram::new(false);
        for c in &self.constraints {
            d.add_var(format!("y_{}", c.name), one());
        }
        let mut cols: Vec<Vec<(usize, Q)>> = vec![vec![]; self.nvars()];
        for (i, c) in self.constraints.iter().enumerate() {
            for (j, a) in &c.coeffs {
                cols[*j].push((i, a.clone()));
            }
        }
        for (j, col) in cols.into_iter().enumerate() {
            d.add_row(format!("col_{j}"), col, Sense::Ge, self.objective[j].clone());
        }
        let brow = self.constraints.iter().enumerate().map(|(i, c)| (i, c.rhs.clone())).collect();
        d.add_row("opt", brow, Sense::Eq, sol.objective.clone());
        match d.solve()? {
            LpOutcome::Optimal(ds) => {
                let y = ds.x;
                if !self.dual_feasible(&y) {
                    return Err(Error::Invariant("refined dual infeasible".into()));
                }
                Ok(LpOutcome::Optimal(Solution { x: sol.x, duals: y, objective: sol.objective }))
            }
            _ => Ok(LpOutcome::Optimal(sol)),
        }
    }

    /// LP-format text; each row scaled to integer coefficients.
    pub fn to_lp_format(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
        };
        let names: Vec<String> = self.var_names.iter().enumerate().map(|(j, n)| format!("v{j}_{}", clean(n))).collect();
        let term = |c: &Q, j: usize| -> String {
            let sign = if c.is_negative() { "-" } else { "+" };
            format!(" {sign} {} {}", c.abs().to_integer(), names[j])
        };
        let mut out = String::new();
        out.push_str(if self.maximize { "Maximize\n obj:" } else { "Minimize\n obj:" });
        let l = lcm_denoms(self.objective.iter());
        let lq = Q::from_integer(l);
        for (j, c) in self.objective.iter().enumerate() {
            if !c.is_zero() {
                out.push_str(&term(&(c * &lq), j));
            }
        }
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let l: BigInt = lcm_denoms(c.coeffs.iter().map(|(_, a)| a).chain(std::iter::once(&c.rhs)));
            let lq = Q::from_integer(l);
            out.push_str(&format!(" r{i}_{}:", clean(&c.name)));
            if c.coeffs.is_empty() {
                out.push_str(&format!(" 0 {}", names.first().cloned().unwrap_or_default()));
            }
            for (j, a) in &c.coeffs {
                out.push_str(&term(&(a * &lq), *j));
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            out.push_str(&format!(" {op} {}\n", (&c.rhs * &lq).to_integer()));
        }
        out.push_str("Bounds\n");
        for (j, n) in names.iter().enumerate() {
            if self.free[j] {
                out.push_str(&format!(" {n} free\n"));
            }
        }
        out.push_str("End\n");
        out
    }
}

struct Tableau {
    rows: Vec<Vec<Q>>,
    obj: Vec<Q>,
    basis: Vec<usize>,
    ncols: usize,
    /// columns that may never enter (artificials)
    blocked: Vec<bool>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.ncols
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        if p != one() {
            for v in self.rows[r].iter_mut() {
                if !v.is_zero() {
                    *v /= &p;
                }
            }
        }
        let nz: Vec<usize> = (0..=self.ncols).filter(|&j| !self.rows[r][j].is_zero()).collect();
        let prow: Vec<Q> = nz.iter().map(|&j| self.rows[r][j].clone()).collect();
        for i in 0..self.rows.len() {
            if i == r || self.rows[i][c].is_zero() {
                continue;
            }
            let f = self.rows[i][c].clone();
            for (k, &j) in nz.iter().enumerate() {
                let d = &f * &prow[k];
                self.rows[i][j] -= d;
            }
        }
        if !self.obj[c].is_zero() {
            let f = self.obj[c].clone();
            for (k, &j) in nz.iter().enumerate() {
                let d = &f * &prow[k];
                self.obj[j] -= d;
            }
        }
        self.basis[r] = c;
    }

    /// Maximization loop on the current objective row (obj[j] = z_j − c_j).
    fn run(&mut self) -> bool {
        loop {
            let enter = (0..self.ncols).find(|&j| !self.blocked[j] && self.obj[j].is_negative());
            let Some(c) = enter else { return true };
            let mut best: Option<(Q, usize, usize)> = None;
            for i in 0..self.rows.len() {
                let a = &self.rows[i][c];
                if a.is_positive() {
                    let ratio = &self.rows[i][self.rhs()] / a;
                    let better = match &best {
                        None => true,
                        Some((br, bb, _)) => ratio < *br || (ratio == *br && self.basis[i] < *bb),
                    };
                    if better {
                        best = Some((ratio, self.basis[i], i));
                    }
                }
            }
            match best {
                None => return false,
                Some((_, _, r)) => self.pivot(r, c),
            }
        }
    }
}

/// Exact simplex. Free variables are split; rows with negative rhs are negated.
pub fn solve_exact(lp: &LinearProgram) -> Result<LpOutcome> {
    let n0 = lp.nvars();
    let m = lp.constraints.len();
    // structural columns: nonneg vars as-is, free vars get a negative twin
    let mut twin = vec![None; n0];
    let mut nstruct = n0;
    for j in 0..n0 {
        if lp.free[j] {
            twin[j] = Some(nstruct);
            nstruct += 1;
        }
    }
    let sign = if lp.maximize { one() } else { -one() };
    let mut cost = vec![zero(); nstruct];
    for j in 0..n0 {
        cost[j] = &lp.objective[j] * &sign;
        if let Some(t) = twin[j] {
            cost[t] = -&cost[j];
        }
    }
    // normalized rows
    let mut negated = vec![false; m];
    let mut senses = vec![Sense::Le; m];
    for (i, c) in lp.constraints.iter().enumerate() {
        negated[i] = c.rhs.is_negative();
        senses[i] = match (c.sense, negated[i]) {
            (Sense::Le, true) => Sense::Ge,
            (Sense::Ge, true) => Sense::Le,
            (s, _) => s,
        };
    }
    let nslack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let nart = senses.iter().filter(|s| **s != Sense::Le).count();
    let ncols = nstruct + nslack + nart;
    let mut rows = vec![vec![zero(); ncols + 1]; m];
    let mut basis = vec![0; m];
    let mut unit_col = vec![0; m];
    let mut blocked = vec![false; ncols];
    let (mut sk, mut ak) = (nstruct, nstruct + nslack);
    for (i, c) in lp.constraints.iter().enumerate() {
        let s = if negated[i] { -one() } else { one() };
        for (j, a) in &c.coeffs {
            rows[i][*j] += a * &s;
            if let Some(t) = twin[*j] {
                rows[i][t] -= a * &s;
            }
        }
        rows[i][ncols] = &c.rhs * &s;
        match senses[i] {
            Sense::Le => {
                rows[i][sk] = one();
                basis[i] = sk;
                unit_col[i] = sk;
                sk += 1;
            }
            Sense::Ge => {
                rows[i][sk] = -one();
                sk += 1;
                rows[i][ak] = one();
                basis[i] = ak;
                unit_col[i] = ak;
                blocked[ak] = true;
                ak += 1;
            }
            Sense::Eq => {
                rows[i][ak] = one();
                basis[i] = ak;
                unit_col[i] = ak;
                blocked[ak] = true;
                ak += 1;
            }
        }
    }
    let is_art = |j: usize| j >= nstruct + nslack && j < ncols;
    let mut t = Tableau { rows, obj: vec![zero(); ncols + 1], basis, ncols, blocked };

    if nart > 0 {
        // phase 1: max −Σ artificials; artificials may enter here
        for j in 0..ncols {
            t.blocked[j] = false;
        }
        for i in 0..m {
            if is_art(t.basis[i]) {
                for j in 0..=ncols {
                    if !is_art(j) {
                        let v = t.rows[i][j].clone();
                        t.obj[j] -= v;
                    }
                }
            }
        }
        if !t.run() {
            return Err(Error::Invariant("phase 1 unbounded".into()));
        }
        if t.obj[ncols].is_negative() {
            return Ok(LpOutcome::Infeasible);
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if is_art(t.basis[i]) {
                if let Some(j) = (0..nstruct + nslack).find(|&j| !t.rows[i][j].is_zero()) {
                    t.pivot(i, j);
                }
            }
        }
        for j in 0..ncols {
            t.blocked[j] = is_art(j);
        }
    }
    // phase 2 objective row
    let cb: Vec<Q> = t.basis.iter().map(|&b| if b < nstruct { cost[b].clone() } else { zero() }).collect();
    for j in 0..=ncols {
        let mut z = zero();
        for i in 0..m {
            if !cb[i].is_zero() && !t.rows[i][j].is_zero() {
                z += &cb[i] * &t.rows[i][j];
            }
        }
        if j < nstruct {
            z -= &cost[j];
        }
        t.obj[j] = z;
    }
    if !t.run() {
        return Ok(LpOutcome::Unbounded);
    }
    let mut xs = vec![zero(); nstruct];
    for i in 0..m {
        if t.basis[i] < nstruct {
            xs[t.basis[i]] = t.rows[i][ncols].clone();
        }
    }
    let mut x = xs[..n0].to_vec();
    for j in 0..n0 {
        if let Some(tw) = twin[j] {
            x[j] -= &xs[tw];
        }
    }
    let obj_max = t.obj[ncols].clone();
    let objective = &obj_max * &sign;
    let duals: Vec<Q> = (0..m)
        .map(|i| {
            let mut y = t.obj[unit_col[i]].clone();
            if negated[i] {
                y = -y;
            }
            y * &sign
        })
        .collect();
    // strong duality and feasibility, exactly
    let dual_obj = lp.constraints.iter().zip(&duals).fold(zero(), |acc, (c, y)| acc + &c.rhs * y);
    let primal_obj = lp.objective.iter().zip(&x).fold(zero(), |acc, (c, v)| acc + c * v);
    if dual_obj != objective || primal_obj != objective {
        return Err(Error::Invariant(format!(
            "strong duality failed: primal {primal_obj} dual {dual_obj} tableau {objective}"
        )));
    }
    if !lp.is_feasible(&x) {
        return Err(Error::Invariant("primal solution infeasible".into()));
    }
    if !lp.dual_feasible(&duals) {
        return Err(Error::Invariant("dual solution infeasible".into()));
    }
    Ok(LpOutcome::Optimal(Solution { x, duals, objective }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    #[test]
    fn small_max() {
        // max 3x + 2y, x + y ≤ 4, x + 3y ≤ 6, x ≤ 3
        let mut lp = LinearProgram::new(true);
        let x = lp.add_var("x", qi(3));
        let y = lp.add_var("y", qi(2));
        lp.add_row("a", vec![(x, qi(1)), (y, qi(1))], Sense::Le, qi(4));
        lp.add_row("b", vec![(x, qi(1)), (y, qi(3))], Sense::Le, qi(6));
        lp.add_row("c", vec![(x, qi(1))], Sense::Le, qi(3));
        let s = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(s.objective, qi(11));
        assert_eq!(s.x, vec![qi(3), qi(1)]);
        assert_eq!(s.duals, vec![qi(2), qi(0), qi(1)]);
    }

    #[test]
    fn ge_eq_and_min() {
        // min x + y, x + 2y ≥ 3, x − y = 0  → x=y=1
        let mut lp = LinearProgram::new(false);
        let x = lp.add_var("x", qi(1));
        let y = lp.add_var("y", qi(1));
        lp.add_row("a", vec![(x, qi(1)), (y, qi(2))], Sense::Ge, qi(3));
        lp.add_row("b", vec![(x, qi(1)), (y, qi(-1))], Sense::Eq, qi(0));
        let s = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(s.objective, qi(2));
        assert_eq!(s.duals[0], q(2, 3));
    }

    #[test]
    fn degenerate_zero() {
        let mut lp = LinearProgram::new(true);
        let h = lp.add_var("h1", qi(1));
        lp.add_row("c", vec![(h, qi(1))], Sense::Le, qi(0));
        let s = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(s.objective, qi(0));
    }

    #[test]
    fn unbounded_and_infeasible() {
        let mut lp = LinearProgram::new(true);
        let a = lp.add_var("a", qi(1));
        let b = lp.add_var("b", qi(0));
        lp.add_row("c", vec![(b, qi(1))], Sense::Le, qi(1));
        let _ = a;
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Unbounded));
        let mut lp = LinearProgram::new(true);
        let a = lp.add_var("a", qi(1));
        lp.add_row("c", vec![(a, qi(1))], Sense::Le, qi(-1));
        assert!(matches!(lp.solve().unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn free_variable() {
        // max −x s.t. x ≥ −2, x free → x = −2
        let mut lp = LinearProgram::new(true);
        let x = lp.add_var("x", qi(-1));
        lp.free[x] = true;
        lp.add_row("c", vec![(x, qi(1))], Sense::Ge, qi(-2));
        let s = lp.solve().unwrap().optimal().unwrap();
        assert_eq!(s.x[0], qi(-2));
        assert_eq!(s.objective, qi(2));
    }

    #[test]
    fn lp_dump_has_integer_rows() {
        let mut lp = LinearProgram::new(true);
        let x = lp.add_var("h(xy)", qi(1));
        lp.add_row("card R", vec![(x, q(1, 2))], Sense::Le, q(3, 4));
        let s = lp.to_lp_format();
        assert!(s.contains("+ 2 v0_h_xy_ <= 3"), "{s}");
    }
}
