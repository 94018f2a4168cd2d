//! Exact counting executor and the true-cardinality cache.
//!
//! Counts are computed without materializing join results: each base table
//! is filtered, then tables are joined along the query's join tree with hash
//! partitions keyed on the join columns. The running intermediate keeps one
//! group per distinct combination of the columns still needed by later joins,
//! together with its multiplicity.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{key_bits, Catalog, CatalogError, ColumnRef};
use crate::filter::TableFilter;
use crate::queryir::{SubPlanKey, SubPlanQuery, SubPlanSpace};

/// Default cap on materialized intermediate groups.
pub const DEFAULT_INTERMEDIATE_CAP: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("sub-plan {subplan} of {query} exceeds the resource limit: {reason}")]
    ResourceLimit {
        query: String,
        subplan: String,
        reason: String,
    },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountLimits {
    pub max_intermediate: u64,
}

impl Default for CountLimits {
    fn default() -> Self {
        CountLimits {
            max_intermediate: DEFAULT_INTERMEDIATE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "method")]
pub enum Provenance {
    True,
    Estimated(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::True => f.write_str("true"),
            Provenance::Estimated(m) => write!(f, "estimated({m})"),
        }
    }
}

/// Cardinality per sub-plan of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityMap {
    pub parent: String,
    pub provenance: Provenance,
    pub values: BTreeMap<SubPlanKey, f64>,
}

impl CardinalityMap {
    pub fn new(parent: impl Into<String>, provenance: Provenance) -> Self {
        CardinalityMap {
            parent: parent.into(),
            provenance,
            values: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: SubPlanKey, value: f64) {
        self.values.insert(key, value);
    }

    pub fn get(&self, key: &SubPlanKey) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Whether every entry of `space` has a value.
    pub fn covers(&self, space: &SubPlanSpace) -> bool {
        space.keys().all(|k| self.values.contains_key(k))
    }
}

fn limit_err(sp: &SubPlanQuery, reason: impl Into<String>) -> OracleError {
    OracleError::ResourceLimit {
        query: sp.parent.clone(),
        subplan: sp.key.to_string(),
        reason: reason.into(),
    }
}

/// Exact `COUNT(*)` of a sub-plan under the default limits.
pub fn execute_count(subplan: &SubPlanQuery, catalog: &Catalog) -> Result<u64, OracleError> {
    execute_count_with(subplan, catalog, CountLimits::default())
}

pub fn execute_count_with(subplan: &SubPlanQuery, catalog: &Catalog, limits: CountLimits) -> Result<u64, OracleError> {
    let tables = subplan.tables();
    let filters: Vec<TableFilter> = tables
        .iter()
        .map(|t| TableFilter::new(catalog, t, &subplan.predicates))
        .collect::<Result<_, _>>()?;
    if tables.len() == 1 {
        return Ok(filters[0].count() as u64);
    }
    let rows: Vec<Vec<usize>> = filters.iter().map(TableFilter::rows).collect();
    let idx = |t: &str| tables.iter().position(|x| x == t).expect("edge inside sub-plan");

    // greedy smallest-first along the join tree
    let start = (0..tables.len()).min_by_key(|&i| (rows[i].len(), i)).unwrap();
    let mut joined = vec![false; tables.len()];
    joined[start] = true;
    let frontier_of = |joined: &[bool]| -> Vec<ColumnRef> {
        let mut cols: Vec<ColumnRef> = Vec::new();
        for e in &subplan.join_edges {
            let (l, r) = (idx(&e.left.table), idx(&e.right.table));
            let c = match (joined[l], joined[r]) {
                (true, false) => &e.left,
                (false, true) => &e.right,
                _ => continue,
            };
            if !cols.contains(c) {
                cols.push(c.clone());
            }
        }
        cols.sort();
        cols
    };

    let mut frontier = frontier_of(&joined);
    let mut state: HashMap<Vec<u64>, u64> = HashMap::new();
    {
        let cols: Vec<_> = frontier
            .iter()
            .map(|c| catalog.column_ref(c))
            .collect::<Result<_, _>>()?;
        'rows: for &r in &rows[start] {
            let mut key = Vec::with_capacity(cols.len());
            for c in &cols {
                match c.get(r) {
                    Some(v) => key.push(key_bits(v)),
                    None => continue 'rows,
                }
            }
            *state.entry(key).or_insert(0) += 1;
        }
    }

    for _ in 1..tables.len() {
        // next table: adjacent to the joined set, fewest filtered rows
        let mut best: Option<(usize, usize, &crate::catalog::JoinEdge)> = None;
        for e in &subplan.join_edges {
            let (l, r) = (idx(&e.left.table), idx(&e.right.table));
            let cand = match (joined[l], joined[r]) {
                (true, false) => r,
                (false, true) => l,
                _ => continue,
            };
            let better = match best {
                None => true,
                Some((b, _, _)) => (rows[cand].len(), cand) < (rows[b].len(), b),
            };
            if better {
                best = Some((cand, rows[cand].len(), e));
            }
        }
        let (t, _, edge) = best.ok_or_else(|| limit_err(subplan, "join tree is disconnected"))?;
        let t_name = &tables[t];
        let (s_col, t_col) = if &edge.left.table == t_name {
            (&edge.right, &edge.left)
        } else {
            (&edge.left, &edge.right)
        };
        joined[t] = true;
        let next_frontier = frontier_of(&joined);

        // build side: t rows grouped by join key and by t's surviving columns
        let t_key_col = catalog.column_ref(t_col)?;
        let t_proj: Vec<&ColumnRef> = next_frontier.iter().filter(|c| &c.table == t_name).collect();
        let t_proj_cols: Vec<_> = t_proj.iter().map(|c| catalog.column_ref(c)).collect::<Result<_, _>>()?;
        let mut build: HashMap<u64, HashMap<Vec<u64>, u64>> = HashMap::new();
        'build: for &r in &rows[t] {
            let Some(k) = t_key_col.get(r) else { continue };
            let mut proj = Vec::with_capacity(t_proj_cols.len());
            for c in &t_proj_cols {
                match c.get(r) {
                    Some(v) => proj.push(key_bits(v)),
                    None => continue 'build,
                }
            }
            *build.entry(key_bits(k)).or_default().entry(proj).or_insert(0) += 1;
        }

        // where each column of the next frontier comes from
        enum Src {
            Old(usize),
            New(usize),
        }
        let sources: Vec<Src> = next_frontier
            .iter()
            .map(|c| {
                if &c.table == t_name {
                    Src::New(t_proj.iter().position(|p| *p == c).unwrap())
                } else {
                    Src::Old(frontier.iter().position(|p| p == c).expect("frontier column survives"))
                }
            })
            .collect();
        let probe_pos = frontier
            .iter()
            .position(|c| c == s_col)
            .expect("join column on frontier");

        let mut next: HashMap<Vec<u64>, u64> = HashMap::new();
        for (vals, cnt) in &state {
            let Some(matches) = build.get(&vals[probe_pos]) else {
                continue;
            };
            for (proj, c2) in matches {
                let key: Vec<u64> = sources
                    .iter()
                    .map(|s| match s {
                        Src::Old(i) => vals[*i],
                        Src::New(i) => proj[*i],
                    })
                    .collect();
                let add = cnt
                    .checked_mul(*c2)
                    .ok_or_else(|| limit_err(subplan, "count overflows 64 bits"))?;
                let slot = next.entry(key).or_insert(0);
                *slot = slot
                    .checked_add(add)
                    .ok_or_else(|| limit_err(subplan, "count overflows 64 bits"))?;
            }
            if next.len() as u64 > limits.max_intermediate {
                return Err(limit_err(
                    subplan,
                    format!("more than {} intermediate groups", limits.max_intermediate),
                ));
            }
        }
        state = next;
        frontier = next_frontier;
    }

    state.values().try_fold(0u64, |acc, c| {
        acc.checked_add(*c)
            .ok_or_else(|| limit_err(subplan, "count overflows 64 bits"))
    })
}

/// True cardinality of every entry of `space`, computed in parallel.
pub fn true_cardinalities(space: &SubPlanSpace, catalog: &Catalog) -> Result<CardinalityMap, OracleError> {
    let counts: Vec<(SubPlanKey, u64)> = space
        .entries
        .par_iter()
        .map(|sp| execute_count(sp, catalog).map(|c| (sp.key.clone(), c)))
        .collect::<Result<_, _>>()?;
    let mut map = CardinalityMap::new(&space.parent, Provenance::True);
    for (k, c) in counts {
        map.insert(k, c as f64);
    }
    Ok(map)
}

/// On-disk cache of true cardinalities, valid for one catalog fingerprint.
///
/// File layout: a `# catalog:<fingerprint>` line, then CSV with header
/// `query_id,subplan_key,cardinality`, rows sorted by query id and key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrueCardCache {
    pub fingerprint: String,
    pub entries: BTreeMap<(String, SubPlanKey), u64>,
}

impl TrueCardCache {
    pub fn new(fingerprint: impl Into<String>) -> Self {
        TrueCardCache {
            fingerprint: fingerprint.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Loads the cache at `path`. A missing file, or one written for another
    /// catalog, yields an empty cache.
    pub fn load(path: &Path, fingerprint: &str) -> Result<Self, OracleError> {
        let mut cache = TrueCardCache::new(fingerprint);
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => {
                return Err(OracleError::Cache {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })
            }
        };
        let bad = |message: String| OracleError::Cache {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.splitn(2, '\n');
        let first = lines.next().unwrap_or("");
        match first.trim().strip_prefix("# catalog:") {
            Some(fp) if fp.trim() == fingerprint => {}
            Some(_) => return Ok(cache),
            None => return Err(bad("missing `# catalog:` header line".into())),
        }
        let body = lines.next().unwrap_or("");
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", rec.len())));
            }
            let card: u64 = rec[2]
                .parse()
                .map_err(|_| bad(format!("bad cardinality `{}`", &rec[2])))?;
            cache
                .entries
                .insert((rec[0].to_string(), SubPlanKey::parse(&rec[1])), card);
        }
        Ok(cache)
    }

    /// Writes the cache through a temporary file and an atomic rename.
    pub fn save(&self, path: &Path) -> Result<(), OracleError> {
        let io = |e: std::io::Error| OracleError::Cache {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(io)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        writeln!(tmp, "# catalog:{}", self.fingerprint).map_err(io)?;
        {
            let mut w = csv::Writer::from_writer(&mut tmp);
            let csv_err = |e: csv::Error| OracleError::Cache {
                path: path.to_path_buf(),
                message: e.to_string(),
            };
            w.write_record(["query_id", "subplan_key", "cardinality"])
                .map_err(csv_err)?;
            for ((q, k), c) in &self.entries {
                w.write_record([q.as_str(), &k.to_string(), &c.to_string()])
                    .map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    pub fn lookup(&self, space: &SubPlanSpace) -> Option<CardinalityMap> {
        let mut map = CardinalityMap::new(&space.parent, Provenance::True);
        for k in space.keys() {
            let c = self.entries.get(&(space.parent.clone(), k.clone()))?;
            map.insert(k.clone(), *c as f64);
        }
        Some(map)
    }

    pub fn store(&mut self, map: &CardinalityMap) {
        for (k, v) in &map.values {
            self.entries.insert((map.parent.clone(), k.clone()), *v as u64);
        }
    }

    pub fn query_ids(&self) -> HashSet<&str> {
        self.entries.keys().map(|(q, _)| q.as_str()).collect()
    }
}

/// True cardinalities for `space`, served from `cache` when complete and
/// computed (then recorded in `cache`) otherwise. The flag reports a hit.
pub fn true_cardinalities_cached(
    space: &SubPlanSpace,
    catalog: &Catalog,
    cache: &mut TrueCardCache,
) -> Result<(CardinalityMap, bool), OracleError> {
    if cache.fingerprint == catalog.fingerprint() {
        if let Some(map) = cache.lookup(space) {
            return Ok((map, true));
        }
    } else {
        *cache = TrueCardCache::new(catalog.fingerprint());
    }
    let map = true_cardinalities(space, catalog)?;
    cache.store(&map);
    Ok((map, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Column, ColumnKind, JoinEdge, KeyRole, TableData};
    use crate::queryir::{enumerate_subplans, parse_query};

    fn catalog() -> Catalog {
        let a = TableData::new(
            "a",
            vec![
                Column::from_values("id", ColumnKind::Categorical, vec![1.0, 2.0, 3.0]),
                Column::from_values("x", ColumnKind::Continuous, vec![1.0, 2.0, 3.0]),
            ],
        )
        .unwrap();
        let b = TableData::new(
            "b",
            vec![Column::from_options(
                "aid",
                ColumnKind::Categorical,
                vec![Some(1.0), Some(1.0), Some(2.0), None],
            )],
        )
        .unwrap();
        let c = TableData::new(
            "c",
            vec![Column::from_values("aid", ColumnKind::Categorical, vec![7.0, 8.0])],
        )
        .unwrap();
        Catalog::new(
            vec![a, b, c],
            vec![
                JoinEdge::new(ColumnRef::new("a", "id"), ColumnRef::new("b", "aid"), KeyRole::PkFk),
                JoinEdge::new(ColumnRef::new("a", "id"), ColumnRef::new("c", "aid"), KeyRole::PkFk),
            ],
        )
        .unwrap()
    }

    fn count(sql: &str) -> u64 {
        let cat = catalog();
        let q = parse_query(sql, &cat).unwrap();
        execute_count(&q.as_subplan(), &cat).unwrap()
    }

    #[test]
    fn basic_counts() {
        assert_eq!(count("SELECT COUNT(*) FROM a WHERE a.x >= 0"), 3);
        assert_eq!(count("SELECT COUNT(*) FROM a, b WHERE a.id = b.aid"), 3);
        assert_eq!(count("SELECT COUNT(*) FROM a, b WHERE a.id = b.aid AND a.x >= 2"), 1);
        // disjoint keys
        assert_eq!(count("SELECT COUNT(*) FROM a, c WHERE a.id = c.aid"), 0);
    }

    #[test]
    fn resource_limit_on_tiny_cap() {
        let cat = catalog();
        let q = parse_query("SELECT COUNT(*) FROM a, b WHERE a.id = b.aid", &cat).unwrap();
        let err = execute_count_with(&q.as_subplan(), &cat, CountLimits { max_intermediate: 0 }).unwrap_err();
        assert!(matches!(err, OracleError::ResourceLimit { .. }));
    }

    #[test]
    fn cache_round_trip_and_fingerprint_guard() {
        let cat = catalog();
        let q = parse_query("SELECT COUNT(*) FROM a, b, c WHERE a.id = b.aid AND a.id = c.aid", &cat).unwrap();
        let space = enumerate_subplans(&q, &cat);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cards.csv");
        let mut cache = TrueCardCache::load(&path, cat.fingerprint()).unwrap();
        let (first, hit) = true_cardinalities_cached(&space, &cat, &mut cache).unwrap();
        assert!(!hit);
        assert_eq!(first.len(), space.len());
        cache.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let mut again = TrueCardCache::load(&path, cat.fingerprint()).unwrap();
        let (second, hit) = true_cardinalities_cached(&space, &cat, &mut again).unwrap();
        assert!(hit);
        assert_eq!(first, second);
        again.save(&path).unwrap();
        assert_eq!(bytes, fs::read(&path).unwrap());
        let other = TrueCardCache::load(&path, "different").unwrap();
        assert!(other.entries.is_empty());
    }
}
