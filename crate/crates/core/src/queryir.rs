//! Conjunctive selection-join queries, a parser for the `COUNT(*)` SQL
//! subset, and sub-plan space enumeration.
//!
//! A [`Query`] keeps one merged [`Region`] per filtered column; joins are
//! edges of the catalog join graph and must form a tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ColumnKind, ColumnRef, JoinEdge};

/// Upper limit on tables per query; sub-plan enumeration walks all subsets.
pub const MAX_QUERY_TABLES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("unknown table `{name}` at {pos}")]
    UnknownTable { name: String, pos: usize },
    #[error("unknown column `{}{column}` at {pos}", if table.is_empty() { String::new() } else { format!("{table}.") })]
    UnknownColumn { table: String, column: String, pos: usize },
    #[error("ambiguous column `{column}` at {pos}")]
    AmbiguousColumn { column: String, pos: usize },
    #[error("table `{name}` listed twice at {pos}")]
    DuplicateTable { name: String, pos: usize },
    #[error("literal at {pos} does not fit column `{column}`")]
    LiteralMismatch { column: String, pos: usize },
    #[error("non-equality join between columns at {pos}")]
    NonEquiJoin { pos: usize },
    #[error("join `{edge}` at {pos} is not an edge of the catalog join graph")]
    UnknownJoin { edge: String, pos: usize },
    #[error("join graph of the query is disconnected")]
    DisconnectedJoinGraph,
    #[error("join graph of the query is cyclic")]
    CyclicJoinGraph,
    #[error("query touches {0} tables, more than the supported {MAX_QUERY_TABLES}")]
    TooManyTables(usize),
}

/// Constraint region of one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Interval {
        lo: f64,
        lo_inclusive: bool,
        hi: f64,
        hi_inclusive: bool,
    },
    /// Sorted, deduplicated, non-empty.
    Values(Vec<f64>),
    Empty,
}

impl Region {
    pub fn closed(lo: f64, hi: f64) -> Region {
        Region::Interval {
            lo,
            lo_inclusive: true,
            hi,
            hi_inclusive: true,
        }
        .normalized()
    }

    pub fn point(v: f64) -> Region {
        Region::closed(v, v)
    }

    pub fn values(vs: Vec<f64>) -> Region {
        let mut vs: Vec<f64> = vs.into_iter().map(|v| if v == 0.0 { 0.0 } else { v }).collect();
        vs.sort_by(f64::total_cmp);
        vs.dedup_by(|a, b| a == b);
        if vs.is_empty() {
            Region::Empty
        } else {
            Region::Values(vs)
        }
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        match self {
            Region::Interval {
                lo,
                lo_inclusive,
                hi,
                hi_inclusive,
            } => (if *lo_inclusive { v >= *lo } else { v > *lo }) && (if *hi_inclusive { v <= *hi } else { v < *hi }),
            Region::Values(vs) => {
                let v = if v == 0.0 { 0.0 } else { v };
                vs.binary_search_by(|x| x.total_cmp(&v)).is_ok()
            }
            Region::Empty => false,
        }
    }

    fn normalized(self) -> Region {
        match self {
            Region::Interval {
                lo,
                lo_inclusive,
                hi,
                hi_inclusive,
            } => {
                if lo.is_nan() || hi.is_nan() || lo > hi || (lo == hi && !(lo_inclusive && hi_inclusive)) {
                    Region::Empty
                } else {
                    Region::Interval {
                        lo,
                        lo_inclusive,
                        hi,
                        hi_inclusive,
                    }
                }
            }
            Region::Values(vs) => Region::values(vs),
            Region::Empty => Region::Empty,
        }
    }

    pub fn intersect(&self, other: &Region) -> Region {
        match (self, other) {
            (Region::Empty, _) | (_, Region::Empty) => Region::Empty,
            (Region::Values(a), r) | (r, Region::Values(a)) => {
                Region::values(a.iter().copied().filter(|v| r.contains(*v)).collect())
            }
            (
                Region::Interval {
                    lo: l1,
                    lo_inclusive: li1,
                    hi: h1,
                    hi_inclusive: hi1,
                },
                Region::Interval {
                    lo: l2,
                    lo_inclusive: li2,
                    hi: h2,
                    hi_inclusive: hi2,
                },
            ) => {
                let (lo, lo_inclusive) = if l1 > l2 {
                    (*l1, *li1)
                } else if l2 > l1 {
                    (*l2, *li2)
                } else {
                    (*l1, *li1 && *li2)
                };
                let (hi, hi_inclusive) = if h1 < h2 {
                    (*h1, *hi1)
                } else if h2 < h1 {
                    (*h2, *hi2)
                } else {
                    (*h1, *hi1 && *hi2)
                };
                Region::Interval {
                    lo,
                    lo_inclusive,
                    hi,
                    hi_inclusive,
                }
                .normalized()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub table: String,
    pub column: String,
    pub region: Region,
}

/// Identifier of a sub-plan: its sorted table names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubPlanKey(Vec<String>);

impl SubPlanKey {
    pub fn new<I, S>(tables: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v: Vec<String> = tables.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        SubPlanKey(v)
    }

    pub fn tables(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse(s: &str) -> SubPlanKey {
        SubPlanKey::new(s.split('|').filter(|t| !t.is_empty()))
    }
}

impl fmt::Display for SubPlanKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("|"))
    }
}

/// Canonical conjunctive query. Tables, edges and predicates are kept sorted
/// so structurally equal queries compare equal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub tables: Vec<String>,
    pub join_edges: Vec<JoinEdge>,
    pub predicates: Vec<Predicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPlanQuery {
    pub parent: String,
    pub key: SubPlanKey,
    pub join_edges: Vec<JoinEdge>,
    pub predicates: Vec<Predicate>,
}

impl SubPlanQuery {
    pub fn tables(&self) -> &[String] {
        self.key.tables()
    }

    pub fn predicates_on<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a Predicate> + 'a {
        self.predicates.iter().filter(move |p| p.table == table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPlanSpace {
    pub parent: String,
    pub entries: Vec<SubPlanQuery>,
}

impl SubPlanSpace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &SubPlanKey> {
        self.entries.iter().map(|e| &e.key)
    }
}

impl Query {
    /// Builds a query from parts, sorting and validating the join tree.
    pub fn new(
        id: impl Into<String>,
        tables: Vec<String>,
        join_edges: Vec<JoinEdge>,
        predicates: Vec<Predicate>,
    ) -> Result<Query, QueryError> {
        let mut tables = tables;
        tables.sort();
        tables.dedup();
        if tables.len() > MAX_QUERY_TABLES {
            return Err(QueryError::TooManyTables(tables.len()));
        }
        let mut join_edges = join_edges;
        join_edges.sort();
        join_edges.dedup_by(|a, b| a.left == b.left && a.right == b.right);
        let mut merged: BTreeMap<(String, String), Region> = BTreeMap::new();
        for p in predicates {
            let slot = merged.entry((p.table, p.column)).or_insert(p.region.clone());
            *slot = slot.intersect(&p.region);
        }
        let predicates = merged
            .into_iter()
            .map(|((table, column), region)| Predicate { table, column, region })
            .collect();
        let q = Query {
            id: id.into(),
            tables,
            join_edges,
            predicates,
        };
        q.check_tree()?;
        Ok(q)
    }

    fn check_tree(&self) -> Result<(), QueryError> {
        let n = self.tables.len();
        let index = |t: &str| self.tables.binary_search_by(|x| x.as_str().cmp(t)).ok();
        let mut parent: Vec<usize> = (0..n).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut cyclic = false;
        for e in &self.join_edges {
            let (Some(a), Some(b)) = (index(&e.left.table), index(&e.right.table)) else {
                return Err(QueryError::DisconnectedJoinGraph);
            };
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            if ra == rb {
                cyclic = true;
            } else {
                parent[ra] = rb;
            }
        }
        let roots: BTreeSet<usize> = (0..n).map(|i| root(&mut parent, i)).collect();
        if roots.len() > 1 {
            return Err(QueryError::DisconnectedJoinGraph);
        }
        if cyclic {
            return Err(QueryError::CyclicJoinGraph);
        }
        Ok(())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Query {
        self.id = id.into();
        self
    }

    pub fn table_index(&self, table: &str) -> Option<usize> {
        self.tables.binary_search_by(|t| t.as_str().cmp(table)).ok()
    }

    /// Adjacency bitmask per table (indices follow `tables`).
    pub fn adjacency(&self) -> Vec<u32> {
        let mut adj = vec![0u32; self.tables.len()];
        for e in &self.join_edges {
            let a = self.table_index(&e.left.table).expect("validated edge");
            let b = self.table_index(&e.right.table).expect("validated edge");
            adj[a] |= 1 << b;
            adj[b] |= 1 << a;
        }
        adj
    }

    pub fn mask_key(&self, mask: u32) -> SubPlanKey {
        SubPlanKey::new(
            self.tables
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, t)| t.clone()),
        )
    }

    pub fn full_key(&self) -> SubPlanKey {
        SubPlanKey::new(self.tables.iter().cloned())
    }

    /// The sub-plan induced by `tables`; edges and predicates outside the
    /// subset are dropped.
    pub fn subplan(&self, key: &SubPlanKey) -> SubPlanQuery {
        let inside = |t: &str| key.tables().iter().any(|k| k == t);
        SubPlanQuery {
            parent: self.id.clone(),
            key: key.clone(),
            join_edges: self
                .join_edges
                .iter()
                .filter(|e| inside(&e.left.table) && inside(&e.right.table))
                .cloned()
                .collect(),
            predicates: self.predicates.iter().filter(|p| inside(&p.table)).cloned().collect(),
        }
    }

    pub fn as_subplan(&self) -> SubPlanQuery {
        self.subplan(&self.full_key())
    }

    /// Renders the query back into the accepted SQL subset.
    pub fn to_sql(&self, catalog: &Catalog) -> String {
        let mut conds: Vec<String> = self.join_edges.iter().map(|e| e.to_string()).collect();
        for p in &self.predicates {
            let col = catalog.column(&p.table, &p.column).ok();
            let lit = |v: f64| match col {
                Some(c) if c.dictionary().is_some() => format!("'{}'", c.render_value(v).replace('\'', "''")),
                _ => format_number(v),
            };
            let name = format!("{}.{}", p.table, p.column);
            match &p.region {
                Region::Empty => conds.push(format!("{name} IN ()")),
                Region::Values(vs) => conds.push(format!(
                    "{name} IN ({})",
                    vs.iter().map(|v| lit(*v)).collect::<Vec<_>>().join(", ")
                )),
                Region::Interval {
                    lo,
                    lo_inclusive,
                    hi,
                    hi_inclusive,
                } => {
                    if lo == hi {
                        conds.push(format!("{name} = {}", lit(*lo)));
                        continue;
                    }
                    if lo.is_finite() {
                        let op = if *lo_inclusive { ">=" } else { ">" };
                        conds.push(format!("{name} {op} {}", lit(*lo)));
                    }
                    if hi.is_finite() {
                        let op = if *hi_inclusive { "<=" } else { "<" };
                        conds.push(format!("{name} {op} {}", lit(*hi)));
                    }
                }
            }
        }
        let mut sql = format!("SELECT COUNT(*) FROM {}", self.tables.join(", "));
        if !conds.is_empty() {
            sql.push_str(" WHERE ");
            sql.push_str(&conds.join(" AND "));
        }
        sql.push(';');
        sql
    }
}

fn format_number(v: f64) -> String {
    format!("{v}")
}

/// All connected table subsets of the query's join tree, each with its
/// induced edges and predicates, ordered by size and then by table tuple.
pub fn enumerate_subplans(query: &Query, _catalog: &Catalog) -> SubPlanSpace {
    let adj = query.adjacency();
    let n = query.tables.len();
    let mut keys: Vec<SubPlanKey> = (1u32..(1u32 << n))
        .filter(|&m| is_connected(m, &adj))
        .map(|m| query.mask_key(m))
        .collect();
    keys.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    SubPlanSpace {
        parent: query.id.clone(),
        entries: keys.iter().map(|k| query.subplan(k)).collect(),
    }
}

/// Whether the tables in `mask` form a connected subgraph.
pub fn is_connected(mask: u32, adj: &[u32]) -> bool {
    if mask == 0 {
        return false;
    }
    let start = mask.trailing_zeros() as usize;
    let mut seen = 1u32 << start;
    let mut frontier = seen;
    while frontier != 0 {
        let i = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let next = adj[i] & mask & !seen;
        seen |= next;
        frontier |= next;
    }
    seen == mask
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, QueryError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(text[start..i].to_string()),
                pos: start,
            });
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let v: f64 = text[start..i].parse().map_err(|_| QueryError::Syntax {
                pos: start,
                message: format!("malformed number `{}`", &text[start..i]),
            })?;
            out.push(Token {
                tok: Tok::Number(v),
                pos: start,
            });
        } else if c == b'\'' {
            i += 1;
            let mut s = String::new();
            loop {
                match text[i..].find('\'') {
                    None => {
                        return Err(QueryError::Syntax {
                            pos: start,
                            message: "unterminated string literal".into(),
                        })
                    }
                    Some(off) => {
                        s.push_str(&text[i..i + off]);
                        i += off + 1;
                        if bytes.get(i) == Some(&b'\'') {
                            s.push('\'');
                            i += 1;
                        } else {
                            break;
                        }
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                pos: start,
            });
        } else {
            let two = text.get(i..i + 2).unwrap_or("");
            let sym: &'static str = match two {
                "<=" => "<=",
                ">=" => ">=",
                "<>" => "<>",
                "!=" => "!=",
                _ => match c {
                    b',' => ",",
                    b'.' => ".",
                    b'(' => "(",
                    b')' => ")",
                    b'*' => "*",
                    b'=' => "=",
                    b'<' => "<",
                    b'>' => ">",
                    b';' => ";",
                    b'-' => "-",
                    b'+' => "+",
                    _ => {
                        return Err(QueryError::Syntax {
                            pos: i,
                            message: format!("unexpected character `{}`", text[i..].chars().next().unwrap()),
                        })
                    }
                },
            };
            i += sym.len();
            out.push(Token {
                tok: Tok::Sym(sym),
                pos: start,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Operand {
    Column { col: ColumnRef, pos: usize },
    Number(f64, usize),
    Str(String, usize),
}

impl Operand {
    fn pos(&self) -> usize {
        match self {
            Operand::Column { pos, .. } | Operand::Number(_, pos) | Operand::Str(_, pos) => *pos,
        }
    }
}

struct Parser<'a> {
    toks: Vec<Token>,
    at: usize,
    end: usize,
    catalog: &'a Catalog,
    /// alias -> table
    aliases: BTreeMap<String, String>,
}

fn flip(op: &str) -> &'static str {
    match op {
        "<" => ">",
        "<=" => ">=",
        ">" => "<",
        ">=" => "<=",
        _ => "=",
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.pos)
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        Err(QueryError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.is_kw(kw) {
            self.at += 1;
            Ok(())
        } else {
            self.syntax(format!("expected {kw}"))
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.syntax(format!("expected `{s}`"))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(x)) if *x == s) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<(String, usize), QueryError> {
        let pos = self.pos();
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.at += 1;
                Ok((s, pos))
            }
            _ => self.syntax("expected identifier"),
        }
    }

    fn resolve_column(
        &self,
        qualifier: Option<(String, usize)>,
        column: String,
        pos: usize,
    ) -> Result<ColumnRef, QueryError> {
        match qualifier {
            Some((alias, apos)) => {
                let table = self.aliases.get(&alias).ok_or_else(|| QueryError::UnknownTable {
                    name: alias.clone(),
                    pos: apos,
                })?;
                if self.catalog.column(table, &column).is_err() {
                    return Err(QueryError::UnknownColumn {
                        table: table.clone(),
                        column,
                        pos,
                    });
                }
                Ok(ColumnRef::new(table.clone(), column))
            }
            None => {
                let hits: BTreeSet<&String> = self
                    .aliases
                    .values()
                    .filter(|t| self.catalog.column(t, &column).is_ok())
                    .collect();
                match hits.len() {
                    1 => Ok(ColumnRef::new(hits.into_iter().next().unwrap().clone(), column)),
                    0 => Err(QueryError::UnknownColumn {
                        table: String::new(),
                        column,
                        pos,
                    }),
                    _ => Err(QueryError::AmbiguousColumn { column, pos }),
                }
            }
        }
    }

    fn operand(&mut self) -> Result<Operand, QueryError> {
        let pos = self.pos();
        match self.peek().cloned() {
            Some(Tok::Number(v)) => {
                self.at += 1;
                Ok(Operand::Number(v, pos))
            }
            Some(Tok::Sym("-")) | Some(Tok::Sym("+")) => {
                let neg = self.peek() == Some(&Tok::Sym("-"));
                self.at += 1;
                match self.peek() {
                    Some(Tok::Number(v)) => {
                        let v = if neg { -*v } else { *v };
                        self.at += 1;
                        Ok(Operand::Number(v, pos))
                    }
                    _ => self.syntax("expected number after sign"),
                }
            }
            Some(Tok::Str(s)) => {
                self.at += 1;
                Ok(Operand::Str(s, pos))
            }
            Some(Tok::Ident(_)) => {
                let (first, fpos) = self.ident()?;
                if self.eat_sym(".") {
                    let (col, cpos) = self.ident()?;
                    let col = self.resolve_column(Some((first, fpos)), col, cpos)?;
                    Ok(Operand::Column { col, pos })
                } else {
                    let col = self.resolve_column(None, first, fpos)?;
                    Ok(Operand::Column { col, pos })
                }
            }
            _ => self.syntax("expected column or literal"),
        }
    }

    /// Converts a literal to a column value. Strings on dictionary columns
    /// map to their code; for bounds a missing string maps between codes.
    fn literal(&self, col: &ColumnRef, lit: &Operand, as_bound: bool) -> Result<Option<f64>, QueryError> {
        let column = self.catalog.column_ref(col).expect("resolved column");
        let mismatch = || QueryError::LiteralMismatch {
            column: col.to_string(),
            pos: lit.pos(),
        };
        match (lit, column.dictionary()) {
            (Operand::Number(v, _), None) => {
                if column.kind() == ColumnKind::Categorical && !as_bound && v.fract() != 0.0 {
                    Ok(None)
                } else {
                    Ok(Some(*v))
                }
            }
            (Operand::Str(s, _), Some(dict)) => match dict.binary_search_by(|d| d.as_str().cmp(s)) {
                Ok(i) => Ok(Some(i as f64)),
                Err(ins) if as_bound => Ok(Some(ins as f64 - 0.5)),
                Err(_) => Ok(None),
            },
            _ => Err(mismatch()),
        }
    }

    fn condition(&mut self, edges: &mut Vec<JoinEdge>, preds: &mut Vec<Predicate>) -> Result<(), QueryError> {
        let lhs = self.operand()?;
        if self.is_kw("IN") {
            self.at += 1;
            let Operand::Column { col, .. } = &lhs else {
                return Err(QueryError::Syntax {
                    pos: lhs.pos(),
                    message: "IN requires a column on the left".into(),
                });
            };
            self.sym("(")?;
            let mut vals = Vec::new();
            if !self.eat_sym(")") {
                loop {
                    let lit = self.operand()?;
                    if matches!(lit, Operand::Column { .. }) {
                        return self.syntax("IN list holds literals only");
                    }
                    if let Some(v) = self.literal(col, &lit, false)? {
                        vals.push(v);
                    }
                    if self.eat_sym(")") {
                        break;
                    }
                    self.sym(",")?;
                }
            }
            preds.push(Predicate {
                table: col.table.clone(),
                column: col.column.clone(),
                region: Region::values(vals),
            });
            return Ok(());
        }
        if self.is_kw("BETWEEN") {
            self.at += 1;
            let Operand::Column { col, .. } = &lhs else {
                return Err(QueryError::Syntax {
                    pos: lhs.pos(),
                    message: "BETWEEN requires a column on the left".into(),
                });
            };
            let lo = self.operand()?;
            self.kw("AND")?;
            let hi = self.operand()?;
            let (Some(lo), Some(hi)) = (self.literal(col, &lo, true)?, self.literal(col, &hi, true)?) else {
                unreachable!("bounds always convert")
            };
            preds.push(Predicate {
                table: col.table.clone(),
                column: col.column.clone(),
                region: Region::closed(lo, hi),
            });
            return Ok(());
        }
        let op_pos = self.pos();
        let op = match self.peek() {
            Some(Tok::Sym(s)) if ["=", "<", "<=", ">", ">="].contains(s) => *s,
            Some(Tok::Sym("<>")) | Some(Tok::Sym("!=")) => {
                return self.syntax("inequality predicates are not supported");
            }
            _ => return self.syntax("expected comparison operator"),
        };
        self.at += 1;
        let rhs = self.operand()?;
        match (lhs, rhs) {
            (Operand::Column { col: a, pos }, Operand::Column { col: b, .. }) => {
                if op != "=" || a.table == b.table {
                    return Err(QueryError::NonEquiJoin { pos });
                }
                let edge = self
                    .catalog
                    .join_graph()
                    .find(&a, &b)
                    .ok_or_else(|| QueryError::UnknownJoin {
                        edge: format!("{a} = {b}"),
                        pos,
                    })?;
                edges.push(edge.clone());
            }
            (Operand::Column { col, .. }, lit) => self.comparison(col, op, lit, preds)?,
            (lit, Operand::Column { col, .. }) => self.comparison(col, flip(op), lit, preds)?,
            _ => {
                return Err(QueryError::Syntax {
                    pos: op_pos,
                    message: "comparison between two literals".into(),
                })
            }
        }
        Ok(())
    }

    fn comparison(&self, col: ColumnRef, op: &str, lit: Operand, preds: &mut Vec<Predicate>) -> Result<(), QueryError> {
        let meta = self.catalog.column_ref(&col).expect("resolved column").meta().clone();
        let min = meta.min.unwrap_or(f64::NEG_INFINITY);
        let max = meta.max.unwrap_or(f64::INFINITY);
        let region = if op == "=" {
            match self.literal(&col, &lit, false)? {
                Some(v) => Region::point(v),
                None => Region::Empty,
            }
        } else {
            let v = self.literal(&col, &lit, true)?.expect("bounds always convert");
            let interval = |lo, lo_inclusive, hi, hi_inclusive| {
                Region::Interval {
                    lo,
                    lo_inclusive,
                    hi,
                    hi_inclusive,
                }
                .normalized()
            };
            match op {
                "<" => interval(min, true, v, false),
                "<=" => interval(min, true, v, true),
                ">" => interval(v, false, max, true),
                _ => interval(v, true, max, true),
            }
        };
        preds.push(Predicate {
            table: col.table,
            column: col.column,
            region,
        });
        Ok(())
    }

    fn query(&mut self) -> Result<Query, QueryError> {
        self.kw("SELECT")?;
        self.kw("COUNT")?;
        self.sym("(")?;
        self.sym("*")?;
        self.sym(")")?;
        self.kw("FROM")?;
        let mut tables: Vec<String> = Vec::new();
        loop {
            let (name, pos) = self.ident()?;
            if self.catalog.table(&name).is_err() {
                return Err(QueryError::UnknownTable { name, pos });
            }
            if tables.contains(&name) {
                return Err(QueryError::DuplicateTable { name, pos });
            }
            let mut alias = name.clone();
            if self.is_kw("AS") {
                self.at += 1;
                alias = self.ident()?.0;
            } else if let Some(Tok::Ident(s)) = self.peek() {
                if !s.eq_ignore_ascii_case("WHERE") {
                    alias = s.clone();
                    self.at += 1;
                }
            }
            if self.aliases.insert(alias.clone(), name.clone()).is_some() {
                return Err(QueryError::DuplicateTable { name: alias, pos });
            }
            // the bare table name always resolves too
            self.aliases.entry(name.clone()).or_insert_with(|| name.clone());
            tables.push(name);
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut edges = Vec::new();
        let mut preds = Vec::new();
        if self.is_kw("WHERE") {
            self.at += 1;
            loop {
                self.condition(&mut edges, &mut preds)?;
                if self.is_kw("AND") {
                    self.at += 1;
                    continue;
                }
                if self.is_kw("OR") {
                    return self.syntax("disjunctions are not supported");
                }
                break;
            }
        }
        self.eat_sym(";");
        if self.at < self.toks.len() {
            return self.syntax("unexpected trailing input");
        }
        Query::new("q", tables, edges, preds)
    }
}

/// Parses `SELECT COUNT(*) FROM t1 [alias], ... [WHERE c1 AND c2 ...]`.
/// The returned query has id `q`; see [`Query::with_id`].
pub fn parse_query(text: &str, catalog: &Catalog) -> Result<Query, QueryError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
        catalog,
        aliases: BTreeMap::new(),
    };
    p.query()
}

#[derive(Debug, Error)]
#[error("workload line {line}: {source}")]
pub struct WorkloadError {
    pub line: usize,
    #[source]
    pub source: QueryError,
}

/// Parses a workload file: one statement per line, optionally preceded by a
/// `-- name:<id>` comment. Unnamed statements get `q<n>` (1-based).
pub fn parse_workload(text: &str, catalog: &Catalog) -> Result<Vec<Query>, WorkloadError> {
    let mut out: Vec<Query> = Vec::new();
    let mut pending: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix("--") {
            if let Some(name) = comment.trim().strip_prefix("name:") {
                pending = Some(name.trim().to_string());
            }
            continue;
        }
        let id = pending.take().unwrap_or_else(|| format!("q{}", out.len() + 1));
        let q = parse_query(line, catalog).map_err(|source| WorkloadError { line: idx + 1, source })?;
        if out.iter().any(|o| o.id == id) {
            return Err(WorkloadError {
                line: idx + 1,
                source: QueryError::Syntax {
                    pos: 0,
                    message: format!("duplicate query name `{id}`"),
                },
            });
        }
        out.push(q.with_id(id));
    }
    Ok(out)
}

/// Inverse of [`parse_workload`].
pub fn format_workload(queries: &[Query], catalog: &Catalog) -> String {
    let mut s = String::new();
    for q in queries {
        s.push_str(&format!("-- name:{}\n{}\n", q.id, q.to_sql(catalog)));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Column, KeyRole, TableData};

    fn catalog() -> Catalog {
        let a = TableData::new(
            "a",
            vec![
                Column::from_values("id", ColumnKind::Categorical, vec![1.0, 2.0, 3.0, 4.0]),
                Column::from_values("x", ColumnKind::Continuous, vec![0.0, 2.5, 7.0, 10.0]),
            ],
        )
        .unwrap();
        let b = TableData::new(
            "b",
            vec![
                Column::from_values("aid", ColumnKind::Categorical, vec![1.0, 1.0, 2.0]),
                Column::from_values("y", ColumnKind::Categorical, vec![5.0, 6.0, 7.0]),
            ],
        )
        .unwrap();
        let c = TableData::new(
            "c",
            vec![Column::from_values("aid", ColumnKind::Categorical, vec![3.0])],
        )
        .unwrap();
        Catalog::new(
            vec![a, b, c],
            vec![
                JoinEdge::new(ColumnRef::new("a", "id"), ColumnRef::new("b", "aid"), KeyRole::PkFk),
                JoinEdge::new(ColumnRef::new("a", "id"), ColumnRef::new("c", "aid"), KeyRole::PkFk),
                JoinEdge::new(ColumnRef::new("b", "aid"), ColumnRef::new("c", "aid"), KeyRole::FkFk),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_join_and_upper_bound() {
        let cat = catalog();
        let q = parse_query("SELECT COUNT(*) FROM a, b WHERE a.id = b.aid AND a.x <= 5", &cat).unwrap();
        assert_eq!(q.tables, vec!["a", "b"]);
        assert_eq!(q.join_edges.len(), 1);
        assert_eq!(q.predicates.len(), 1);
        assert_eq!(q.predicates[0].region, Region::closed(0.0, 5.0));
    }

    #[test]
    fn overlapping_bounds_intersect() {
        let cat = catalog();
        let q = parse_query("select count(*) from a where a.x > 3 and a.x > 5", &cat).unwrap();
        assert_eq!(
            q.predicates[0].region,
            Region::Interval {
                lo: 5.0,
                lo_inclusive: false,
                hi: 10.0,
                hi_inclusive: true
            }
        );
    }

    #[test]
    fn rejections() {
        let cat = catalog();
        assert_eq!(
            parse_query("SELECT COUNT(*) FROM a, b", &cat),
            Err(QueryError::DisconnectedJoinGraph)
        );
        assert_eq!(
            parse_query(
                "SELECT COUNT(*) FROM a, b, c WHERE a.id = b.aid AND a.id = c.aid AND b.aid = c.aid",
                &cat
            ),
            Err(QueryError::CyclicJoinGraph)
        );
        assert!(matches!(
            parse_query("SELECT COUNT(*) FROM a, b WHERE a.id < b.aid", &cat),
            Err(QueryError::NonEquiJoin { .. })
        ));
        assert!(matches!(
            parse_query("SELECT COUNT(*) FROM a WHERE a.x = 1 OR a.x = 2", &cat),
            Err(QueryError::Syntax { .. })
        ));
        assert_eq!(
            parse_query("SELECT COUNT(*) FROM zz", &cat),
            Err(QueryError::UnknownTable {
                name: "zz".into(),
                pos: 21
            })
        );
        assert!(matches!(
            parse_query("SELECT COUNT(*) FROM a WHERE a.nope = 1", &cat),
            Err(QueryError::UnknownColumn { .. })
        ));
        assert!(matches!(
            parse_query("SELECT COUNT(*) FROM a, b WHERE a.x = b.y", &cat),
            Err(QueryError::UnknownJoin { .. })
        ));
        assert!(matches!(
            parse_query("SELECT COUNT(*) FROM a WHERE", &cat),
            Err(QueryError::Syntax { .. })
        ));
    }

    #[test]
    fn aliases_in_and_between() {
        let cat = catalog();
        let q = parse_query(
            "SELECT COUNT(*) FROM b AS bb, a t WHERE t.id = bb.aid AND bb.y IN (7, 5, 5) AND t.x BETWEEN 1 AND 8 AND 3 < t.x",
            &cat,
        )
        .unwrap();
        assert_eq!(q.tables, vec!["a", "b"]);
        let x = q.predicates.iter().find(|p| p.column == "x").unwrap();
        assert_eq!(
            x.region,
            Region::Interval {
                lo: 3.0,
                lo_inclusive: false,
                hi: 8.0,
                hi_inclusive: true
            }
        );
        let y = q.predicates.iter().find(|p| p.column == "y").unwrap();
        assert_eq!(y.region, Region::Values(vec![5.0, 7.0]));
    }

    #[test]
    fn contradictory_predicates_are_empty() {
        let cat = catalog();
        let q = parse_query("SELECT COUNT(*) FROM a WHERE a.x > 5 AND a.x < 2", &cat).unwrap();
        assert_eq!(q.predicates[0].region, Region::Empty);
        let again = parse_query(&q.to_sql(&cat), &cat).unwrap();
        assert_eq!(again, q);
    }

    #[test]
    fn pretty_print_round_trips() {
        let cat = catalog();
        for sql in [
            "SELECT COUNT(*) FROM a, b WHERE a.id = b.aid AND a.x <= 5 AND b.y IN (5, 7)",
            "SELECT COUNT(*) FROM a WHERE a.x >= 2.5 AND a.x < 7",
            "SELECT COUNT(*) FROM a WHERE a.x = 7",
            "SELECT COUNT(*) FROM c, a WHERE c.aid = a.id",
        ] {
            let q = parse_query(sql, &cat).unwrap();
            let again = parse_query(&q.to_sql(&cat), &cat).unwrap();
            assert_eq!(q, again, "{sql}");
        }
    }

    #[test]
    fn triangle_and_chain_subplans() {
        let cat = catalog();
        // a-b-c chain through a
        let q = parse_query("SELECT COUNT(*) FROM a, b, c WHERE a.id = b.aid AND a.id = c.aid", &cat).unwrap();
        let space = enumerate_subplans(&q, &cat);
        let keys: Vec<String> = space.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, vec!["a", "b", "c", "a|b", "a|c", "a|b|c"]);
        let ab = &space.entries[3];
        assert_eq!(ab.join_edges.len(), 1);
    }

    #[test]
    fn workload_names() {
        let cat = catalog();
        let text =
            "-- name:first\nSELECT COUNT(*) FROM a;\n\n-- plain comment\nSELECT COUNT(*) FROM b WHERE b.y = 5;\n";
        let w = parse_workload(text, &cat).unwrap();
        assert_eq!(w[0].id, "first");
        assert_eq!(w[1].id, "q2");
        let again = parse_workload(&format_workload(&w, &cat), &cat).unwrap();
        assert_eq!(w, again);
    }
}
