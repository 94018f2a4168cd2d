//! Schemas, join graphs and in-memory columnar table data.
//!
//! Every column is stored as a dense `f64` array plus an optional validity
//! mask. Categorical columns hold integer codes: integer-valued columns keep
//! their value as the code, anything else is dictionary-encoded. Columns that
//! are linked by a join edge share one dictionary so their codes stay
//! comparable.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema line {line}: {message}")]
    SchemaSyntax { line: usize, message: String },
    #[error("no data file for table `{table}` (expected {path})")]
    MissingTableFile { table: String, path: PathBuf },
    #[error("table `{table}` column `{column}` row {row}: value {value:?} does not match the declared kind")]
    ColumnTypeMismatch {
        table: String,
        column: String,
        row: usize,
        value: String,
    },
    #[error("duplicate table name `{0}`")]
    DuplicateTableName(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown column `{table}.{column}`")]
    UnknownColumn { table: String, column: String },
    #[error("duplicate join edge {0}")]
    DuplicateEdge(String),
    #[error("join edge {0} links a continuous column to a dictionary-encoded one")]
    IncompatibleJoinColumns(String),
    #[error("column `{column}` of table `{table}` has {actual} values, expected {expected}")]
    LengthMismatch {
        table: String,
        column: String,
        expected: usize,
        actual: usize,
    },
    #[error("categorical column `{table}.{column}` holds non-integer value {value}")]
    NonIntegerCode { table: String, column: String, value: f64 },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = CatalogError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Continuous => "continuous",
        })
    }
}

/// Base statistics of one column. `min`/`max` are `None` when the column has
/// no non-null values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub domain_size: u64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub null_count: u64,
    /// Every non-null value is an integer.
    pub integral: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyRole {
    PkFk,
    FkFk,
}

impl fmt::Display for KeyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyRole::PkFk => "pkfk",
            KeyRole::FkFk => "fkfk",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// An equi-join edge. Constructed through [`JoinEdge::new`], which orders the
/// two endpoints so that equal edges compare equal regardless of direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JoinEdge {
    pub left: ColumnRef,
    pub right: ColumnRef,
    pub role: KeyRole,
}

impl JoinEdge {
    pub fn new(a: ColumnRef, b: ColumnRef, role: KeyRole) -> Self {
        if a <= b {
            JoinEdge {
                left: a,
                right: b,
                role,
            }
        } else {
            JoinEdge {
                left: b,
                right: a,
                role,
            }
        }
    }

    pub fn touches(&self, table: &str) -> bool {
        self.left.table == table || self.right.table == table
    }

    /// The endpoint on `table`, if any.
    pub fn side(&self, table: &str) -> Option<&ColumnRef> {
        if self.left.table == table {
            Some(&self.left)
        } else if self.right.table == table {
            Some(&self.right)
        } else {
            None
        }
    }

    /// The endpoint opposite to `table`.
    pub fn other(&self, table: &str) -> Option<&ColumnRef> {
        if self.left.table == table {
            Some(&self.right)
        } else if self.right.table == table {
            Some(&self.left)
        } else {
            None
        }
    }

    fn same_columns(&self, other: &JoinEdge) -> bool {
        self.left == other.left && self.right == other.right
    }
}

impl fmt::Display for JoinEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.left, self.right)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JoinGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<JoinEdge>,
}

impl JoinGraph {
    pub fn edges_between<'a>(&'a self, a: &'a str, b: &'a str) -> impl Iterator<Item = &'a JoinEdge> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.touches(a) && e.touches(b) && a != b)
    }

    /// Finds the catalog edge joining the two columns, in either direction.
    pub fn find(&self, a: &ColumnRef, b: &ColumnRef) -> Option<&JoinEdge> {
        self.edges
            .iter()
            .find(|e| (e.left == *a && e.right == *b) || (e.left == *b && e.right == *a))
    }

    pub fn is_join_column(&self, col: &ColumnRef) -> bool {
        self.edges.iter().any(|e| e.left == *col || e.right == *col)
    }
}

/// Canonical bit pattern of a key value, used for hashing join keys.
#[inline]
pub fn key_bits(v: f64) -> u64 {
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    meta: ColumnMeta,
    values: Vec<f64>,
    validity: Option<Vec<bool>>,
    dictionary: Option<Arc<Vec<String>>>,
}

impl Column {
    /// Builds a numeric column; `None` entries are nulls. Categorical columns
    /// must hold integer codes.
    pub fn from_options(name: impl Into<String>, kind: ColumnKind, data: Vec<Option<f64>>) -> Self {
        let has_null = data.iter().any(Option::is_none);
        let validity = has_null.then(|| data.iter().map(Option::is_some).collect());
        let values = data.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::assemble(name.into(), kind, values, validity, None)
    }

    pub fn from_values(name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Self {
        Self::assemble(name.into(), kind, values, None, None)
    }

    fn assemble(
        name: String,
        kind: ColumnKind,
        values: Vec<f64>,
        validity: Option<Vec<bool>>,
        dictionary: Option<Arc<Vec<String>>>,
    ) -> Self {
        let mut present: Vec<f64> = match &validity {
            Some(mask) => values
                .iter()
                .zip(mask)
                .filter(|(_, ok)| **ok)
                .map(|(v, _)| *v)
                .collect(),
            None => values.clone(),
        };
        present.sort_by(f64::total_cmp);
        let null_count = (values.len() - present.len()) as u64;
        let mut domain_size = 0u64;
        let mut prev: Option<u64> = None;
        for v in &present {
            let bits = key_bits(*v);
            if prev != Some(bits) {
                domain_size += 1;
                prev = Some(bits);
            }
        }
        let meta = ColumnMeta {
            name,
            kind,
            domain_size,
            min: present.first().copied(),
            max: present.last().copied(),
            null_count,
            integral: present.iter().all(|v| v.fract() == 0.0),
        };
        Column {
            meta,
            values,
            validity,
            dictionary,
        }
    }

    pub fn meta(&self) -> &ColumnMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.meta.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize) -> Option<f64> {
        match &self.validity {
            Some(mask) if !mask[row] => None,
            _ => Some(self.values[row]),
        }
    }

    /// Raw value slot; meaningless for null rows.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    pub fn dictionary(&self) -> Option<&[String]> {
        self.dictionary.as_deref().map(Vec::as_slice)
    }

    /// Code of a dictionary string, if the column is dictionary-encoded and
    /// the string occurs in the dictionary.
    pub fn code_of(&self, s: &str) -> Option<f64> {
        let dict = self.dictionary.as_ref()?;
        dict.binary_search_by(|d| d.as_str().cmp(s)).ok().map(|i| i as f64)
    }

    pub fn null_fraction(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.meta.null_count as f64 / self.values.len() as f64
        }
    }

    /// Sorted non-null values.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = (0..self.len()).filter_map(|r| self.get(r)).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// `(value, frequency)` pairs over non-null rows, ascending by value.
    pub fn value_frequencies(&self) -> Vec<(f64, u64)> {
        let mut out: Vec<(f64, u64)> = Vec::new();
        for v in self.sorted_values() {
            match out.last_mut() {
                Some((last, n)) if key_bits(*last) == key_bits(v) => *n += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Text form of one cell, as written back to CSV.
    pub fn render(&self, row: usize) -> String {
        match self.get(row) {
            None => String::new(),
            Some(v) => self.render_value(v),
        }
    }

    pub fn render_value(&self, v: f64) -> String {
        if let Some(dict) = &self.dictionary {
            if let Some(s) = dict.get(v as usize) {
                return s.clone();
            }
        }
        if self.meta.kind == ColumnKind::Categorical {
            format!("{}", v as i64)
        } else {
            format!("{v}")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    name: String,
    columns: Vec<Column>,
    rows: usize,
}

impl TableData {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        let rows = columns.first().map_or(0, Column::len);
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name().to_string()) {
                return Err(CatalogError::DuplicateColumn {
                    table: name,
                    column: c.name().to_string(),
                });
            }
            if c.len() != rows {
                return Err(CatalogError::LengthMismatch {
                    table: name,
                    column: c.name().to_string(),
                    expected: rows,
                    actual: c.len(),
                });
            }
            if c.kind() == ColumnKind::Categorical && c.dictionary.is_none() {
                if let Some(bad) = (0..rows).filter_map(|r| c.get(r)).find(|v| v.fract() != 0.0) {
                    return Err(CatalogError::NonIntegerCode {
                        table: name,
                        column: c.name().to_string(),
                        value: bad,
                    });
                }
            }
        }
        Ok(TableData { name, columns, rows })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }
}

/// Tables plus their join graph. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct Catalog {
    tables: BTreeMap<String, TableData>,
    join_graph: JoinGraph,
    fingerprint: String,
}

impl Catalog {
    pub fn new(tables: Vec<TableData>, edges: Vec<JoinEdge>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in tables {
            let name = t.name.clone();
            if map.insert(name.clone(), t).is_some() {
                return Err(CatalogError::DuplicateTableName(name));
            }
        }
        let mut kept: Vec<JoinEdge> = Vec::new();
        for e in edges {
            for side in [&e.left, &e.right] {
                let t = map
                    .get(&side.table)
                    .ok_or_else(|| CatalogError::UnknownTable(side.table.clone()))?;
                if t.column(&side.column).is_none() {
                    return Err(CatalogError::UnknownColumn {
                        table: side.table.clone(),
                        column: side.column.clone(),
                    });
                }
            }
            if kept.iter().any(|k| k.same_columns(&e)) {
                return Err(CatalogError::DuplicateEdge(e.to_string()));
            }
            kept.push(e);
        }
        let join_graph = JoinGraph {
            nodes: map.keys().cloned().collect(),
            edges: kept,
        };
        let fingerprint = fingerprint(&map, &join_graph);
        Ok(Catalog {
            tables: map,
            join_graph,
            fingerprint,
        })
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableData> {
        self.tables.values()
    }

    pub fn table(&self, name: &str) -> Result<&TableData> {
        self.tables
            .get(name)
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn column(&self, table: &str, column: &str) -> Result<&Column> {
        self.table(table)?
            .column(column)
            .ok_or_else(|| CatalogError::UnknownColumn {
                table: table.to_string(),
                column: column.to_string(),
            })
    }

    pub fn column_ref(&self, col: &ColumnRef) -> Result<&Column> {
        self.column(&col.table, &col.column)
    }

    pub fn join_graph(&self) -> &JoinGraph {
        &self.join_graph
    }

    /// Hex SHA-256 over schema, data and dictionaries.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Exact number of distinct non-null values.
    pub fn column_distinct_count(&self, table: &str, column: &str) -> Result<u64> {
        Ok(self.column(table, column)?.meta.domain_size)
    }

    /// Renders the schema in the declarative text format accepted by
    /// [`load_catalog`].
    pub fn schema_text(&self) -> String {
        let mut out = String::new();
        for t in self.tables.values() {
            out.push_str(&format!("table {}\n", t.name));
            for c in &t.columns {
                out.push_str(&format!("  column {} {}\n", c.name(), c.kind()));
            }
            out.push('\n');
        }
        for e in &self.join_graph.edges {
            out.push_str(&format!("join {} = {} {}\n", e.left, e.right, e.role));
        }
        out
    }

    /// Writes `schema.txt` and one `<table>.csv` per table into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|source| CatalogError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let schema_path = dir.join("schema.txt");
        fs::write(&schema_path, self.schema_text()).map_err(|source| CatalogError::Io {
            path: schema_path,
            source,
        })?;
        for t in self.tables.values() {
            let path = dir.join(format!("{}.csv", t.name));
            let csv_err = |source| CatalogError::Csv {
                path: path.clone(),
                source,
            };
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(t.columns.iter().map(Column::name)).map_err(csv_err)?;
            for r in 0..t.rows {
                w.write_record(t.columns.iter().map(|c| c.render(r))).map_err(csv_err)?;
            }
            w.flush().map_err(|source| CatalogError::Io {
                path: path.clone(),
                source,
            })?;
        }
        Ok(())
    }
}

fn fingerprint(tables: &BTreeMap<String, TableData>, graph: &JoinGraph) -> String {
    let mut h = Sha256::new();
    for t in tables.values() {
        h.update(b"T");
        h.update(t.name.as_bytes());
        h.update((t.rows as u64).to_le_bytes());
        for c in &t.columns {
            h.update(b"C");
            h.update(c.name().as_bytes());
            h.update([c.kind() as u8]);
            for r in 0..c.len() {
                match c.get(r) {
                    Some(v) => {
                        h.update([1u8]);
                        h.update(key_bits(v).to_le_bytes());
                    }
                    None => h.update([0u8]),
                }
            }
            if let Some(dict) = &c.dictionary {
                for s in dict.iter() {
                    h.update(s.as_bytes());
                    h.update([0xff]);
                }
            }
        }
    }
    for e in &graph.edges {
        h.update(e.to_string().as_bytes());
        h.update(e.role.to_string().as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<(String, ColumnKind)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaDef {
    pub tables: Vec<TableDef>,
    pub joins: Vec<JoinEdge>,
}

fn parse_column_ref(s: &str, line: usize) -> Result<ColumnRef> {
    match s.split_once('.') {
        Some((t, c)) if !t.is_empty() && !c.is_empty() && !c.contains('.') => Ok(ColumnRef::new(t, c)),
        _ => Err(CatalogError::SchemaSyntax {
            line,
            message: format!("expected <table>.<column>, found `{s}`"),
        }),
    }
}

/// Parses the declarative schema format:
///
/// ```text
/// # comment
/// table users
///   column id categorical
///   column age continuous
/// join users.id = posts.owner pkfk
/// ```
pub fn parse_schema(text: &str) -> Result<SchemaDef> {
    let mut tables: Vec<TableDef> = Vec::new();
    let mut joins = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let syntax = |message: String| CatalogError::SchemaSyntax { line: line_no, message };
        match toks[0] {
            "table" => {
                if toks.len() != 2 {
                    return Err(syntax("expected `table <name>`".into()));
                }
                let name = toks[1].to_string();
                if tables.iter().any(|t| t.name == name) {
                    return Err(CatalogError::DuplicateTableName(name));
                }
                tables.push(TableDef {
                    name,
                    columns: Vec::new(),
                });
            }
            "column" => {
                if toks.len() != 3 {
                    return Err(syntax("expected `column <name> <categorical|continuous>`".into()));
                }
                let kind = match toks[2] {
                    "categorical" => ColumnKind::Categorical,
                    "continuous" => ColumnKind::Continuous,
                    other => return Err(syntax(format!("unknown column kind `{other}`"))),
                };
                let table = tables
                    .last_mut()
                    .ok_or_else(|| syntax("`column` outside of a `table` block".into()))?;
                if table.columns.iter().any(|(c, _)| c == toks[1]) {
                    return Err(CatalogError::DuplicateColumn {
                        table: table.name.clone(),
                        column: toks[1].to_string(),
                    });
                }
                table.columns.push((toks[1].to_string(), kind));
            }
            "join" => {
                if !(toks.len() == 4 || toks.len() == 5) || toks[2] != "=" {
                    return Err(syntax("expected `join <t1>.<c1> = <t2>.<c2> [pkfk|fkfk]`".into()));
                }
                let a = parse_column_ref(toks[1], line_no)?;
                let b = parse_column_ref(toks[3], line_no)?;
                let role = match toks.get(4).copied() {
                    None | Some("pkfk") => KeyRole::PkFk,
                    Some("fkfk") => KeyRole::FkFk,
                    Some(other) => return Err(syntax(format!("unknown key role `{other}`"))),
                };
                joins.push(JoinEdge::new(a, b, role));
            }
            other => return Err(syntax(format!("unknown directive `{other}`"))),
        }
    }
    for t in &tables {
        if t.columns.is_empty() {
            return Err(CatalogError::SchemaSyntax {
                line: 0,
                message: format!("table `{}` declares no columns", t.name),
            });
        }
    }
    Ok(SchemaDef { tables, joins })
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = x;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Loads a catalog from a schema file and a directory holding one
/// `<table>.csv` per declared table.
///
/// Header names select the declared columns; extra CSV columns are ignored.
/// Empty fields are nulls. Row numbers in errors are zero-based data rows.
pub fn load_catalog(schema_file: &Path, data_dir: &Path) -> Result<Catalog> {
    let text = fs::read_to_string(schema_file).map_err(|source| CatalogError::Io {
        path: schema_file.to_path_buf(),
        source,
    })?;
    let schema = parse_schema(&text)?;

    // raw cells per (table, column)
    let mut raw: Vec<Vec<Vec<Option<String>>>> = Vec::new();
    for t in &schema.tables {
        let path = data_dir.join(format!("{}.csv", t.name));
        if !path.is_file() {
            return Err(CatalogError::MissingTableFile {
                table: t.name.clone(),
                path,
            });
        }
        raw.push(read_csv_columns(&path, t)?);
    }

    // flat column ids, for dictionary sharing across join edges
    let mut ids: HashMap<ColumnRef, usize> = HashMap::new();
    let mut flat: Vec<(usize, usize)> = Vec::new();
    for (ti, t) in schema.tables.iter().enumerate() {
        for (ci, (c, _)) in t.columns.iter().enumerate() {
            ids.insert(ColumnRef::new(&t.name, c), flat.len());
            flat.push((ti, ci));
        }
    }
    let mut uf = UnionFind((0..flat.len()).collect());
    for e in &schema.joins {
        for side in [&e.left, &e.right] {
            if !ids.contains_key(side) {
                return Err(if schema.tables.iter().any(|t| t.name == side.table) {
                    CatalogError::UnknownColumn {
                        table: side.table.clone(),
                        column: side.column.clone(),
                    }
                } else {
                    CatalogError::UnknownTable(side.table.clone())
                });
            }
        }
        uf.union(ids[&e.left], ids[&e.right]);
    }

    // per class: does every categorical member hold integers?
    let kind_of = |id: usize| {
        let (ti, ci) = flat[id];
        schema.tables[ti].columns[ci].1
    };
    let mut class_integral: HashMap<usize, bool> = HashMap::new();
    let mut class_strings: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for (id, &(ti, ci)) in flat.iter().enumerate() {
        if kind_of(id) != ColumnKind::Categorical {
            continue;
        }
        let root = uf.find(id);
        let entry = class_integral.entry(root).or_insert(true);
        let strings = class_strings.entry(root).or_default();
        for cell in raw[ti][ci].iter().flatten() {
            if cell.parse::<i64>().is_err() {
                *entry = false;
            }
            strings.insert(cell.clone());
        }
    }
    let mut dictionaries: HashMap<usize, Arc<Vec<String>>> = HashMap::new();
    for (root, integral) in &class_integral {
        if !integral {
            let dict: Vec<String> = class_strings.remove(root).unwrap_or_default().into_iter().collect();
            dictionaries.insert(*root, Arc::new(dict));
        }
    }
    for e in &schema.joins {
        let root = uf.find(ids[&e.left]);
        let mixed = [&e.left, &e.right]
            .iter()
            .any(|s| kind_of(ids[*s]) == ColumnKind::Continuous);
        if mixed && dictionaries.contains_key(&root) {
            return Err(CatalogError::IncompatibleJoinColumns(e.to_string()));
        }
    }

    let mut tables = Vec::new();
    for (ti, t) in schema.tables.iter().enumerate() {
        let mut columns = Vec::new();
        for (ci, (cname, kind)) in t.columns.iter().enumerate() {
            let cells = &raw[ti][ci];
            let id = ids[&ColumnRef::new(&t.name, cname)];
            let dict = dictionaries.get(&uf.find(id)).cloned();
            let mut values = Vec::with_capacity(cells.len());
            let mut validity = Vec::with_capacity(cells.len());
            for (row, cell) in cells.iter().enumerate() {
                let Some(s) = cell else {
                    values.push(0.0);
                    validity.push(false);
                    continue;
                };
                let mismatch = || CatalogError::ColumnTypeMismatch {
                    table: t.name.clone(),
                    column: cname.clone(),
                    row,
                    value: s.clone(),
                };
                let v = match (kind, &dict) {
                    (ColumnKind::Categorical, Some(d)) => d.binary_search(s).map_err(|_| mismatch())? as f64,
                    (ColumnKind::Categorical, None) => s.parse::<i64>().map_err(|_| mismatch())? as f64,
                    (ColumnKind::Continuous, _) => match s.trim().parse::<f64>() {
                        Ok(v) if v.is_finite() => v,
                        _ => return Err(mismatch()),
                    },
                };
                values.push(v);
                validity.push(true);
            }
            let validity = validity.iter().any(|ok| !ok).then_some(validity);
            columns.push(Column::assemble(cname.clone(), *kind, values, validity, dict));
        }
        tables.push(TableData::new(&t.name, columns)?);
    }
    Catalog::new(tables, schema.joins)
}

fn read_csv_columns(path: &Path, def: &TableDef) -> Result<Vec<Vec<Option<String>>>> {
    let csv_err = |source| CatalogError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let mut positions = Vec::new();
    for (c, _) in &def.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == c)
            .ok_or_else(|| CatalogError::UnknownColumn {
                table: def.name.clone(),
                column: c.clone(),
            })?;
        positions.push(pos);
    }
    let mut out: Vec<Vec<Option<String>>> = vec![Vec::new(); def.columns.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        for (slot, &pos) in out.iter_mut().zip(&positions) {
            let cell = rec.get(pos).unwrap_or("");
            slot.push((!cell.is_empty()).then(|| cell.to_string()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_small_table() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "schema.txt",
            "table a\n column x categorical\n column y categorical\n",
        );
        write(dir.path(), "a.csv", "x,y\n1,5\n1,6\n2,5\n");
        let cat = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap();
        let t = cat.table("a").unwrap();
        assert_eq!(t.rows(), 3);
        assert_eq!(t.column("x").unwrap().meta().domain_size, 2);
        assert_eq!(t.column("y").unwrap().meta().domain_size, 2);
        assert_eq!(cat.column_distinct_count("a", "x").unwrap(), 2);
    }

    #[test]
    fn header_only_csv_has_undefined_bounds() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.txt", "table a\n column x continuous\n");
        write(dir.path(), "a.csv", "x\n");
        let cat = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap();
        let meta = cat.column("a", "x").unwrap().meta();
        assert_eq!(cat.table("a").unwrap().rows(), 0);
        assert_eq!(meta.min, None);
        assert_eq!(meta.max, None);
        assert_eq!(meta.domain_size, 0);
    }

    #[test]
    fn reports_type_mismatch_with_row() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.txt", "table a\n column x continuous\n");
        write(dir.path(), "a.csv", "x\n1.5\nabc\n");
        let err = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap_err();
        match err {
            CatalogError::ColumnTypeMismatch { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "x");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_file_and_duplicate_table() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "schema.txt", "table a\n column x continuous\n");
        assert!(matches!(
            load_catalog(&dir.path().join("schema.txt"), dir.path()),
            Err(CatalogError::MissingTableFile { .. })
        ));
        assert!(matches!(
            parse_schema("table a\ncolumn x continuous\ntable a\ncolumn y continuous\n"),
            Err(CatalogError::DuplicateTableName(_))
        ));
    }

    #[test]
    fn string_keys_share_dictionary_across_join() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "schema.txt",
            "# two tables\ntable a\n column k categorical\ntable b\n column k categorical\n column v continuous\njoin a.k = b.k fkfk\n",
        );
        write(dir.path(), "a.csv", "k\nzeta\nalpha\n");
        write(dir.path(), "b.csv", "k,v\nalpha,1\n,2\nmid,3\n");
        let cat = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap();
        let a = cat.column("a", "k").unwrap();
        let b = cat.column("b", "k").unwrap();
        assert_eq!(a.dictionary(), b.dictionary());
        assert_eq!(a.get(1), b.get(0));
        assert_eq!(b.get(1), None);
        assert_eq!(b.meta().null_count, 1);
        assert_eq!(cat.join_graph().edges[0].role, KeyRole::FkFk);
    }

    #[test]
    fn distinct_counts() {
        let col = |data: Vec<Option<f64>>| {
            let t = TableData::new("t", vec![Column::from_options("c", ColumnKind::Categorical, data)]).unwrap();
            Catalog::new(vec![t], vec![])
                .unwrap()
                .column_distinct_count("t", "c")
                .unwrap()
        };
        assert_eq!(col(vec![Some(1.0), Some(1.0), Some(2.0), Some(3.0)]), 3);
        assert_eq!(col(vec![None, None]), 0);
        let uniform: Vec<Option<f64>> = (0..1000).map(|i| Some((i % 100 + 1) as f64)).collect();
        let brute: BTreeSet<i64> = uniform.iter().map(|v| v.unwrap() as i64).collect();
        assert_eq!(col(uniform), brute.len() as u64);
        assert!(matches!(
            Catalog::new(vec![], vec![]).unwrap().column_distinct_count("t", "c"),
            Err(CatalogError::UnknownTable(_))
        ));
    }

    #[test]
    fn frequencies_sum_to_non_null_rows() {
        let c = Column::from_options(
            "c",
            ColumnKind::Categorical,
            vec![Some(3.0), None, Some(3.0), Some(1.0), None],
        );
        let total: u64 = c.value_frequencies().iter().map(|(_, n)| n).sum();
        assert_eq!(total, 5 - c.meta().null_count);
    }

    #[test]
    fn write_and_reload_is_identical() {
        let a = TableData::new(
            "a",
            vec![
                Column::from_values("id", ColumnKind::Categorical, vec![1.0, 2.0, 3.0]),
                Column::from_options("v", ColumnKind::Continuous, vec![Some(0.25), None, Some(-3.5)]),
            ],
        )
        .unwrap();
        let b = TableData::new(
            "b",
            vec![Column::from_values("aid", ColumnKind::Categorical, vec![1.0, 1.0, 3.0])],
        )
        .unwrap();
        let cat = Catalog::new(
            vec![a, b],
            vec![JoinEdge::new(
                ColumnRef::new("a", "id"),
                ColumnRef::new("b", "aid"),
                KeyRole::PkFk,
            )],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        cat.write_to_dir(dir.path()).unwrap();
        let again = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap();
        let third = load_catalog(&dir.path().join("schema.txt"), dir.path()).unwrap();
        assert_eq!(again.fingerprint(), cat.fingerprint());
        assert_eq!(again.fingerprint(), third.fingerprint());
    }

    #[test]
    fn rejects_edges_to_unknown_columns() {
        let t = TableData::new("a", vec![Column::from_values("x", ColumnKind::Continuous, vec![1.0])]).unwrap();
        let err = Catalog::new(
            vec![t],
            vec![JoinEdge::new(
                ColumnRef::new("a", "x"),
                ColumnRef::new("a", "nope"),
                KeyRole::FkFk,
            )],
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::UnknownColumn { .. }));
    }
}
