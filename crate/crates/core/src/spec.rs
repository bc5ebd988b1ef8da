//! JSON query specs and TSV instance files.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{bits, DegreeBound, Fd, FdSource, Query, RelationDecl};
use crate::relation::{table_from_values, Database, Dict, Key, Table, Udf, Value};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationSpec {
    pub name: String,
    pub attrs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<u64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    pub lhs: Vec<String>,
    pub rhs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub udf: Option<String>,
    /// Bound-only FD; execution refuses.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub r#abstract: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeSpec {
    pub of: Vec<String>,
    pub given: Vec<String>,
    pub bound: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuerySpec {
    pub vars: Vec<String>,
    pub relations: Vec<RelationSpec>,
    #[serde(default)]
    pub fds: Vec<FdSpec>,
    #[serde(default)]
    pub degree_bounds: Vec<DegreeSpec>,
    /// UDF name → builtin: "concat", "sum_mod(m)", "proj(i)", "const(v)", "table(file)".
    #[serde(default)]
    pub udfs: BTreeMap<String, String>,
}

impl QuerySpec {
    pub fn parse(text: &str) -> Result<QuerySpec> {
        serde_json::from_str(text)
            .map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))
    }

    pub fn load(path: &Path) -> Result<QuerySpec> {
        QuerySpec::parse(&fs::read_to_string(path)?)
    }

    pub fn to_query(&self) -> Result<Query> {
        let mut q = Query { vars: self.vars.clone(), ..Default::default() };
        if q.vars.len() > crate::query::MAX_VARS {
            return Err(Error::TooManyVars(q.vars.len(), crate::query::MAX_VARS));
        }
        for r in &self.relations {
            let attrs = r.attrs.iter().map(|a| q.var_index(a)).collect::<Result<Vec<_>>>()?;
            q.relations.push(RelationDecl {
                name: r.name.clone(),
                attrs,
                cardinality: r.cardinality,
                source: r.file.clone(),
            });
        }
        for f in &self.fds {
            let source = match (&f.guard, &f.udf, f.r#abstract) {
                (Some(g), None, false) => FdSource::Guard(g.clone()),
                (None, Some(u), false) => {
                    if !self.udfs.contains_key(u) {
                        return Err(Error::Validation(format!("udf {u:?} is not declared")));
                    }
                    FdSource::Udf(u.clone())
                }
                (None, None, true) => FdSource::Abstract,
                _ => {
                    return Err(Error::Validation(format!(
                        "fd {:?}->{:?} needs exactly one of guard, udf, abstract",
                        f.lhs, f.rhs
                    )))
                }
            };
            q.fds.push(Fd { lhs: q.set_of(&f.lhs)?, rhs: q.set_of(&f.rhs)?, source });
        }
        for d in &self.degree_bounds {
            let of = q.set_of(&d.of)?;
            let guard = q
                .relations
                .iter()
                .find(|r| r.set() == of)
                .ok_or_else(|| Error::Validation(format!("degree bound over {:?} matches no relation", d.of)))?
                .name
                .clone();
            q.degree_bounds.push(DegreeBound { given: q.set_of(&d.given)?, of, bound: d.bound, guard });
        }
        q.validate()?;
        Ok(q)
    }

    pub fn from_query(q: &Query, udfs: &BTreeMap<String, String>) -> QuerySpec {
        QuerySpec {
            vars: q.vars.clone(),
            relations: q
                .relations
                .iter()
                .map(|r| RelationSpec {
                    name: r.name.clone(),
                    attrs: r.attrs.iter().map(|&a| q.vars[a].clone()).collect(),
                    file: r.source.clone(),
                    cardinality: r.cardinality,
                })
                .collect(),
            fds: q
                .fds
                .iter()
                .map(|f| {
                    let mut s = FdSpec { lhs: q.names(f.lhs), rhs: q.names(f.rhs), ..Default::default() };
                    match &f.source {
                        FdSource::Guard(g) => s.guard = Some(g.clone()),
                        FdSource::Udf(u) => s.udf = Some(u.clone()),
                        FdSource::Abstract => s.r#abstract = true,
                    }
                    s
                })
                .collect(),
            degree_bounds: q
                .degree_bounds
                .iter()
                .map(|d| DegreeSpec { of: q.names(d.of), given: q.names(d.given), bound: d.bound })
                .collect(),
            udfs: udfs.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

/// Reads a TSV file: header of attribute names, then one tuple per line.
pub fn read_tsv(path: &Path) -> Result<(Vec<String>, Vec<Vec<Value>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some((_, h)) => h.split('\t').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Parse(format!("{}: empty file", path.display()))),
    };
    let mut rows = vec![];
    for (i, line) in lines {
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                i + 1,
                header.len(),
                cells.len()
            )));
        }
        rows.push(cells.iter().map(|c| Value::parse(c.trim())).collect());
    }
    Ok((header, rows))
}

pub fn write_tsv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_udf(expr: &str, base: &Path, dict: &mut Dict) -> Result<Udf> {
    let expr = expr.trim();
    let arg = |name: &str| expr.strip_prefix(name).and_then(|r| r.strip_prefix('(')).and_then(|r| r.strip_suffix(')'));
    let bad = || Error::Parse(format!("bad udf expression {expr:?}"));
    if expr == "concat" {
        return Ok(Udf::Concat);
    }
    if let Some(a) = arg("sum_mod") {
        return Ok(Udf::SumMod(a.trim().parse().map_err(|_| bad())?));
    }
    if let Some(a) = arg("proj") {
        return Ok(Udf::Proj(a.trim().parse().map_err(|_| bad())?));
    }
    if let Some(a) = arg("const") {
        return Ok(Udf::Const(Value::parse(a.trim())));
    }
    if let Some(a) = arg("table") {
        let (header, rows) = read_tsv(&base.join(a.trim()))?;
        if header.len() < 2 {
            return Err(Error::Parse(format!("udf table {a} needs key columns and a value column")));
        }
        let mut m: HashMap<Key, u32> = HashMap::new();
        for r in rows {
            let key: Key = r[..r.len() - 1].iter().map(|v| dict.intern(v.clone())).collect();
            let v = dict.intern(r[r.len() - 1].clone());
            if m.insert(key, v).is_some_and(|old| old != v) {
                return Err(Error::Validation(format!("udf table {a} is not a function")));
            }
        }
        return Ok(Udf::Table(m));
    }
    Err(bad())
}

/// Loads a spec and its data; relative files resolve against the spec's directory.
pub fn load_database(spec_path: &Path) -> Result<Database> {
    let spec = QuerySpec::load(spec_path)?;
    let base = spec_path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    database_from_spec(&spec, &base)
}

pub fn database_from_spec(spec: &QuerySpec, base: &Path) -> Result<Database> {
    let q = spec.to_query()?;
    let mut dict = Dict::default();
    let mut tables = vec![];
    for r in &spec.relations {
        let file = r.file.as_ref().ok_or_else(|| Error::Validation(format!("relation {} has no file", r.name)))?;
        let (header, rows) = read_tsv(&base.join(file))?;
        let mut perm = vec![];
        for a in &r.attrs {
            perm.push(
                header
                    .iter()
                    .position(|h| h == a)
                    .ok_or_else(|| Error::UnknownAttribute(format!("{a} missing from {file}")))?,
            );
        }
        if header.len() != r.attrs.len() {
            return Err(Error::Validation(format!("{file}: header {header:?} does not match {:?}", r.attrs)));
        }
        let tuples: Vec<Vec<Value>> = rows.iter().map(|row| perm.iter().map(|&k| row[k].clone()).collect()).collect();
        let attrs: Vec<usize> = r.attrs.iter().map(|a| q.var_index(a)).collect::<Result<_>>()?;
        tables.push(table_from_values(q.nvars(), &attrs, &tuples, &mut dict));
    }
    let mut udfs = HashMap::new();
    for (name, expr) in &spec.udfs {
        udfs.insert(name.clone(), parse_udf(expr, base, &mut dict)?);
    }
    Database::new(q, tables, udfs, dict)
}

fn render_table(db: &Database, t: &Table, attrs: &[usize]) -> Vec<Vec<String>> {
    let d = db.dict.lock().unwrap();
    t.rows.iter().map(|r| attrs.iter().map(|&a| d.get(r[a]).to_string()).collect()).collect()
}

/// Writes every relation as `<name>.tsv` and every table UDF as `udf_<name>.tsv`
/// into `dir`, plus the spec itself as `query.json`. Returns the spec path.
pub fn write_instance(dir: &Path, db: &Database) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let q = &db.query;
    let mut spec = QuerySpec::from_query(q, &BTreeMap::new());
    for (k, r) in q.relations.iter().enumerate() {
        let file = format!("{}.tsv", r.name);
        let header: Vec<String> = r.attrs.iter().map(|&a| q.vars[a].clone()).collect();
        write_tsv(&dir.join(&file), &header, &render_table(db, &db.tables[k], &r.attrs))?;
        spec.relations[k].file = Some(file);
        spec.relations[k].cardinality = Some(db.tables[k].len() as u64);
    }
    let mut names: Vec<&String> = db.udfs.keys().collect();
    names.sort();
    for name in names {
        let expr = match &db.udfs[name] {
            Udf::Concat => "concat".to_string(),
            Udf::SumMod(m) => format!("sum_mod({m})"),
            Udf::Proj(i) => format!("proj({i})"),
            Udf::Const(v) => format!("const({v})"),
            Udf::Table(m) => {
                let fd = q.fds.iter().find(|f| f.source == FdSource::Udf(name.clone()));
                let mut header: Vec<String> = fd.map(|f| q.names(f.lhs)).unwrap_or_default();
                header.push(fd.map(|f| q.names(f.rhs).concat()).unwrap_or_else(|| "value".into()));
                let d = db.dict.lock().unwrap();
                let mut rows: Vec<Vec<String>> = m
                    .iter()
                    .map(|(k, v)| k.iter().chain([v]).map(|&x| d.get(x).to_string()).collect())
                    .collect();
                rows.sort();
                let file = format!("udf_{name}.tsv");
                write_tsv(&dir.join(&file), &header, &rows)?;
                format!("table({file})")
            }
        };
        spec.udfs.insert(name.clone(), expr);
    }
    let path = dir.join("query.json");
    fs::write(&path, spec.to_json())?;
    Ok(path)
}

/// Variables of a set in query order, for headers.
pub fn header_of(q: &Query, vars: crate::query::VarSet) -> Vec<String> {
    bits(vars).map(|i| q.vars[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{brute_force_join, DEFAULT_ORACLE_BUDGET};
    use crate::{fixtures, gen};

    #[test]
    fn round_trip_m3_with_table_udfs() {
        let dir = std::env::temp_dir().join(format!("latjoin-spec-{}", std::process::id()));
        let db = gen::m3_instance(4);
        let path = write_instance(&dir, &db).unwrap();
        let back = load_database(&path).unwrap();
        assert_eq!(back.cardinalities(), db.cardinalities());
        let a = brute_force_join(&db, DEFAULT_ORACLE_BUDGET).unwrap().table.len();
        let b = brute_force_join(&back, DEFAULT_ORACLE_BUDGET).unwrap().table.len();
        assert_eq!((a, b), (16, 16));
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn parse_errors_carry_positions() {
        let e = QuerySpec::parse("{\n  \"vars\": [\"x\",\n  ]\n}").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let s = QuerySpec::parse(r#"{"vars":["x","y"],"relations":[{"name":"R","attrs":["x","w"]}]}"#).unwrap();
        assert!(matches!(s.to_query(), Err(Error::UnknownAttribute(_))));
    }

    #[test]
    fn fd_needs_one_source() {
        let s = QuerySpec::parse(
            r#"{"vars":["x","y"],"relations":[{"name":"R","attrs":["x","y"]}],
                "fds":[{"lhs":["x"],"rhs":["y"]}]}"#,
        )
        .unwrap();
        assert!(matches!(s.to_query(), Err(Error::Validation(_))));
    }

    #[test]
    fn from_query_round_trips() {
        let q = fixtures::no_smp();
        let s = QuerySpec::from_query(&q, &BTreeMap::new());
        let back = QuerySpec::parse(&s.to_json()).unwrap();
        let err = back.to_query();
        // udf-backed fds need declared udfs
        assert!(err.is_err() || q.fds.iter().all(|f| !matches!(f.source, FdSource::Udf(_))));
        let q2 = QuerySpec::from_query(&fixtures::triangle_degree(4), &BTreeMap::new()).to_query().unwrap();
        assert_eq!(q2.degree_bounds.len(), 1);
    }
}
