//! Two-phase workload generation: join templates, then filter predicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ColumnRef, JoinEdge};
use crate::oracle::{execute_count, OracleError};
use crate::queryir::{Predicate, Query, QueryError, Region};

/// Upper bound on distinct subtrees explored during template enumeration.
const MAX_SUBTREES: usize = 200_000;
const MAX_ATTEMPTS: usize = 50;

#[derive(Debug, Error)]
pub enum WorkloadGenError {
    #[error("max_tables must be at least 2, got {0}")]
    TooFewTables(usize),
    #[error("per_template must be in [1, 4], got {0}")]
    PerTemplate(usize),
    #[error("selectivity range must lie in (0, 1] with lo <= hi, got [{0}, {1}]")]
    SelectivityRange(f64, f64),
    #[error("template {template}: no query with a non-empty result after {attempts} attempts")]
    GenerationExhausted { template: String, attempts: usize },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Chain,
    Star,
    Mixed,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Chain => "chain",
            Shape::Star => "star",
            Shape::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinTemplate {
    pub id: String,
    pub tables: Vec<String>,
    pub edges: Vec<JoinEdge>,
    pub shape: Shape,
}

/// Chain when no table has more than two neighbors, star when one table
/// touches all others, mixed otherwise.
pub fn classify(tables: &[String], edges: &[JoinEdge]) -> Shape {
    let degree = |t: &String| edges.iter().filter(|e| e.touches(t)).count();
    let max = tables.iter().map(degree).max().unwrap_or(0);
    if max <= 2 {
        Shape::Chain
    } else if max + 1 == tables.len() {
        Shape::Star
    } else {
        Shape::Mixed
    }
}

/// All subtrees of the catalog join graph with 2..=`max_tables` tables, as
/// sorted edge-index sets.
fn subtrees(catalog: &Catalog, max_tables: usize) -> BTreeSet<Vec<usize>> {
    let edges = &catalog.join_graph().edges;
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut frontier: Vec<Vec<usize>> = (0..edges.len()).map(|i| vec![i]).collect();
    seen.extend(frontier.iter().cloned());
    while let Some(tree) = frontier.pop() {
        if tree.len() + 1 >= max_tables || seen.len() >= MAX_SUBTREES {
            continue;
        }
        let nodes: BTreeSet<&str> = tree
            .iter()
            .flat_map(|&i| [edges[i].left.table.as_str(), edges[i].right.table.as_str()])
            .collect();
        for (i, e) in edges.iter().enumerate() {
            let l = nodes.contains(e.left.table.as_str());
            let r = nodes.contains(e.right.table.as_str());
            if l != r {
                let mut next = tree.clone();
                next.push(i);
                next.sort_unstable();
                if seen.insert(next.clone()) {
                    frontier.push(next);
                }
            }
        }
    }
    seen
}

/// Enumerates join templates, shuffles them by `seed` and keeps `limit`,
/// putting one chain, one star and one mixed template first when available.
pub fn enumerate_templates(
    catalog: &Catalog,
    max_tables: usize,
    limit: usize,
    seed: u64,
) -> Result<Vec<JoinTemplate>, WorkloadGenError> {
    if max_tables < 2 {
        return Err(WorkloadGenError::TooFewTables(max_tables));
    }
    let edges = &catalog.join_graph().edges;
    let mut all: Vec<JoinTemplate> = subtrees(catalog, max_tables)
        .into_iter()
        .map(|idx| {
            let tree: Vec<JoinEdge> = idx.iter().map(|&i| edges[i].clone()).collect();
            let tables: Vec<String> = tree
                .iter()
                .flat_map(|e| [e.left.table.clone(), e.right.table.clone()])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            JoinTemplate {
                id: String::new(),
                shape: classify(&tables, &tree),
                tables,
                edges: tree,
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    all.shuffle(&mut rng);
    let mut chosen = Vec::with_capacity(limit.min(all.len()));
    for shape in [Shape::Chain, Shape::Star, Shape::Mixed] {
        if let Some(i) = all.iter().position(|t| t.shape == shape) {
            chosen.push(all.remove(i));
        }
    }
    chosen.extend(all);
    chosen.truncate(limit);
    for (i, t) in chosen.iter_mut().enumerate() {
        t.id = format!("t{}", i + 1);
    }
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedQuery {
    pub query: Query,
    pub template: String,
    pub shape: Shape,
    pub true_cardinality: u64,
}

/// Region covering a random window of `selectivity` of the column's sorted
/// non-null values.
fn quantile_window(sorted: &[f64], selectivity: f64, rng: &mut ChaCha8Rng) -> Region {
    let n = sorted.len();
    let width = ((selectivity * n as f64).round() as usize).clamp(1, n);
    let start = rng.gen_range(0..=n - width);
    Region::closed(sorted[start], sorted[start + width - 1])
}

/// Instantiates `per_template` queries per template with predicates on
/// non-key columns. Every query is checked to have a non-empty result.
pub fn generate_queries(
    templates: &[JoinTemplate],
    catalog: &Catalog,
    per_template: usize,
    selectivity: (f64, f64),
    seed: u64,
) -> Result<Vec<GeneratedQuery>, WorkloadGenError> {
    if !(1..=4).contains(&per_template) {
        return Err(WorkloadGenError::PerTemplate(per_template));
    }
    let (lo, hi) = selectivity;
    if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
        return Err(WorkloadGenError::SelectivityRange(lo, hi));
    }
    let graph = catalog.join_graph();
    let mut candidates: BTreeMap<String, Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for t in catalog.tables() {
        let cols = t
            .columns()
            .iter()
            .filter(|c| !graph.is_join_column(&ColumnRef::new(t.name(), c.name())))
            .filter(|c| c.meta().domain_size > 1 && (c.meta().domain_size as usize) < t.rows())
            .map(|c| (c.name().to_string(), c.sorted_values()))
            .collect();
        candidates.insert(t.name().to_string(), cols);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for template in templates {
        for k in 0..per_template {
            let id = format!("{}_{}", template.id, k + 1);
            let mut found = None;
            for _ in 0..MAX_ATTEMPTS {
                let mut predicates = Vec::new();
                for t in &template.tables {
                    let cols = &candidates[t];
                    let count = rng.gen_range(0..=cols.len().min(2));
                    for (name, sorted) in cols.choose_multiple(&mut rng, count) {
                        let s = rng.gen_range(lo..=hi);
                        if s >= 1.0 {
                            continue;
                        }
                        predicates.push(Predicate {
                            table: t.clone(),
                            column: name.clone(),
                            region: quantile_window(sorted, s, &mut rng),
                        });
                    }
                }
                let query = Query::new(id.clone(), template.tables.clone(), template.edges.clone(), predicates)?;
                match execute_count(&query.as_subplan(), catalog) {
                    Ok(c) if c >= 1 => {
                        found = Some((query, c));
                        break;
                    }
                    Ok(_) | Err(OracleError::ResourceLimit { .. }) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            let (query, true_cardinality) = found.ok_or_else(|| WorkloadGenError::GenerationExhausted {
                template: template.id.clone(),
                attempts: MAX_ATTEMPTS,
            })?;
            out.push(GeneratedQuery {
                query,
                template: template.id.clone(),
                shape: template.shape,
                true_cardinality,
            });
        }
    }
    Ok(out)
}

/// Manifest CSV: one row per generated query.
pub fn manifest_csv(queries: &[GeneratedQuery]) -> String {
    let mut s = String::from("query_id,template_id,shape,true_cardinality\n");
    for q in queries {
        s.push_str(&format!(
            "{},{},{},{}\n",
            q.query.id, q.template, q.shape, q.true_cardinality
        ));
    }
    s
}
