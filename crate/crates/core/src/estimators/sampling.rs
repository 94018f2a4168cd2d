//! Uniform per-table sampling and wander join.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{uniformity_join, EstimateError, EstimatorConfig};
use crate::catalog::{key_bits, Catalog, ColumnRef};
use crate::filter::TableFilter;
use crate::queryir::SubPlanQuery;

/// Derives a per-stream RNG from a seed and a label.
fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in label.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
        h ^= h >> 29;
    }
    ChaCha8Rng::seed_from_u64(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniSampleModel {
    pub sample_size: usize,
}

impl UniSampleModel {
    pub fn build(config: &EstimatorConfig) -> UniSampleModel {
        UniSampleModel {
            sample_size: config.sample_size.max(1),
        }
    }

    /// Filtered row count of `table` scaled up from a fresh sample drawn
    /// without replacement. Tables no larger than the sample are scanned.
    pub fn table_estimate(
        &self,
        catalog: &Catalog,
        subplan: &SubPlanQuery,
        table: &str,
        seed: u64,
    ) -> Result<f64, EstimateError> {
        let filter = TableFilter::new(catalog, table, subplan.predicates_on(table))?;
        let n = filter.table().rows();
        if filter.predicate_count() == 0 {
            return Ok(n as f64);
        }
        if n <= self.sample_size {
            return Ok(filter.count() as f64);
        }
        let mut rng = stream(seed, table);
        let hits = index::sample(&mut rng, n, self.sample_size)
            .into_iter()
            .filter(|&r| filter.matches(r))
            .count();
        Ok(n as f64 * hits as f64 / self.sample_size as f64)
    }

    pub fn estimate(&self, catalog: &Catalog, subplan: &SubPlanQuery, seed: u64) -> Result<f64, EstimateError> {
        let mut filtered = BTreeMap::new();
        for t in subplan.tables() {
            filtered.insert(t.clone(), self.table_estimate(catalog, subplan, t, seed)?);
        }
        let mut distinct = BTreeMap::new();
        for e in &subplan.join_edges {
            for c in [&e.left, &e.right] {
                distinct.insert(c.clone(), catalog.column_distinct_count(&c.table, &c.column)? as f64);
            }
        }
        Ok(uniformity_join(subplan, &filtered, |c| distinct[c]))
    }
}

/// Row ids grouped by join-key value, one index per join column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WanderJoinModel {
    pub walks: usize,
    pub root: Option<String>,
    pub index: BTreeMap<ColumnRef, BTreeMap<u64, Vec<u32>>>,
}

struct Hop {
    parent: usize,
    parent_col: ColumnRef,
    child: usize,
    child_col: ColumnRef,
}

impl WanderJoinModel {
    pub fn build(catalog: &Catalog, config: &EstimatorConfig) -> WanderJoinModel {
        let mut index = BTreeMap::new();
        for e in &catalog.join_graph().edges {
            for c in [&e.left, &e.right] {
                if index.contains_key(c) {
                    continue;
                }
                let col = catalog.column_ref(c).expect("edge columns exist");
                let mut by_key: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
                for r in 0..col.len() {
                    if let Some(v) = col.get(r) {
                        by_key.entry(key_bits(v)).or_default().push(r as u32);
                    }
                }
                index.insert(c.clone(), by_key);
            }
        }
        WanderJoinModel {
            walks: config.walks.max(1),
            root: config.wj_root.clone(),
            index,
        }
    }

    pub fn estimate(&self, catalog: &Catalog, subplan: &SubPlanQuery, seed: u64) -> Result<f64, EstimateError> {
        let tables = subplan.tables();
        let filters = tables
            .iter()
            .map(|t| TableFilter::new(catalog, t, subplan.predicates_on(t)))
            .collect::<Result<Vec<_>, _>>()?;
        let root = match self.root.as_ref().and_then(|r| tables.iter().position(|t| t == r)) {
            Some(i) => i,
            None => {
                let counts: Vec<usize> = filters.iter().map(TableFilter::count).collect();
                (0..tables.len()).min_by_key(|&i| (counts[i], i)).unwrap_or(0)
            }
        };
        let root_rows = filters[root].rows();
        if root_rows.is_empty() {
            return Ok(0.0);
        }
        let hops = self.spanning_order(subplan, root);
        let mut rng = stream(seed, "wander");
        let mut current = vec![0usize; tables.len()];
        let mut total = 0.0;
        for _ in 0..self.walks {
            current[root] = root_rows[rng.gen_range(0..root_rows.len())];
            let mut weight = 1.0;
            for hop in &hops {
                let v = catalog.column_ref(&hop.parent_col)?.get(current[hop.parent]);
                let matches = v.and_then(|v| self.index.get(&hop.child_col)?.get(&key_bits(v)));
                let Some(matches) = matches else {
                    weight = 0.0;
                    break;
                };
                let row = matches[rng.gen_range(0..matches.len())] as usize;
                if !filters[hop.child].matches(row) {
                    weight = 0.0;
                    break;
                }
                weight *= matches.len() as f64;
                current[hop.child] = row;
            }
            total += weight;
        }
        Ok(root_rows.len() as f64 * total / self.walks as f64)
    }

    fn spanning_order(&self, subplan: &SubPlanQuery, root: usize) -> Vec<Hop> {
        let tables = subplan.tables();
        let pos = |t: &str| tables.iter().position(|x| x == t).unwrap();
        let mut seen = vec![false; tables.len()];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        let mut hops = Vec::new();
        while let Some(u) = queue.pop_front() {
            for e in &subplan.join_edges {
                let (Some(uc), Some(wc)) = (e.side(&tables[u]), e.other(&tables[u])) else {
                    continue;
                };
                let w = pos(&wc.table);
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                    hops.push(Hop {
                        parent: u,
                        parent_col: uc.clone(),
                        child: w,
                        child_col: wc.clone(),
                    });
                }
            }
        }
        hops
    }
}
