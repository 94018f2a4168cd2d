//! Max-degree upper bound on join size.
//!
//! Degrees are exact key multiplicities over the filtered rows, recomputed
//! per sub-plan with one scan of each table. The whole filtered table is a
//! single partition.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::EstimateError;
use crate::catalog::{key_bits, Catalog, ColumnRef};
use crate::filter::TableFilter;
use crate::queryir::SubPlanQuery;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegreeBoundModel {}

/// One adjacency of the sub-plan join tree: `(neighbor, my column, its column)`.
type Adjacent = (usize, ColumnRef, ColumnRef);

impl DegreeBoundModel {
    pub fn build(_catalog: &Catalog) -> DegreeBoundModel {
        DegreeBoundModel {}
    }

    pub fn estimate(&self, catalog: &Catalog, subplan: &SubPlanQuery) -> Result<f64, EstimateError> {
        let tables = subplan.tables();
        let n = tables.len();
        let mut adj: Vec<Vec<Adjacent>> = vec![Vec::new(); n];
        for e in &subplan.join_edges {
            let a = tables.iter().position(|t| *t == e.left.table).unwrap();
            let b = tables.iter().position(|t| *t == e.right.table).unwrap();
            adj[a].push((b, e.left.clone(), e.right.clone()));
            adj[b].push((a, e.right.clone(), e.left.clone()));
        }
        let mut counts = Vec::with_capacity(n);
        let mut degree: HashMap<ColumnRef, f64> = HashMap::new();
        for (i, t) in tables.iter().enumerate() {
            let filter = TableFilter::new(catalog, t, subplan.predicates_on(t))?;
            let rows = filter.rows();
            if rows.is_empty() {
                return Ok(0.0);
            }
            counts.push(rows.len() as f64);
            for (_, mine, _) in &adj[i] {
                if degree.contains_key(mine) {
                    continue;
                }
                let col = catalog.column_ref(mine)?;
                let mut mult: HashMap<u64, u64> = HashMap::new();
                for &r in &rows {
                    if let Some(v) = col.get(r) {
                        *mult.entry(key_bits(v)).or_default() += 1;
                    }
                }
                degree.insert(mine.clone(), mult.values().copied().max().unwrap_or(0) as f64);
            }
        }
        let best = (0..n)
            .map(|start| bound_from(start, &adj, &counts, &degree))
            .fold(f64::INFINITY, f64::min);
        Ok(best)
    }
}

fn bound_from(start: usize, adj: &[Vec<Adjacent>], counts: &[f64], degree: &HashMap<ColumnRef, f64>) -> f64 {
    let n = counts.len();
    let mut in_set = vec![false; n];
    in_set[start] = true;
    let mut bound = counts[start];
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for (t, ucol, tcol) in &adj[u] {
            if in_set[*t] {
                continue;
            }
            let grow = bound * degree[tcol];
            // Joined tuples sharing one value of `ucol`: the rows of `u` with
            // that value times their extensions into the rest of the set.
            let cap = degree[ucol] * extensions(u, usize::MAX, adj, &in_set, degree);
            let bounded = counts[*t] * cap.min(bound);
            bound = grow.min(bounded);
            in_set[*t] = true;
            queue.push_back(*t);
        }
    }
    bound
}

/// Upper bound on the tuples of the set's subtree below `u` that match one
/// row of `u`, not walking back through `from`.
fn extensions(u: usize, from: usize, adj: &[Vec<Adjacent>], in_set: &[bool], degree: &HashMap<ColumnRef, f64>) -> f64 {
    adj[u]
        .iter()
        .filter(|(w, _, _)| *w != from && in_set[*w])
        .map(|(w, _, wcol)| degree[wcol] * extensions(*w, u, adj, in_set, degree))
        .product()
}
