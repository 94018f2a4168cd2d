//! Tree-structured Bayesian networks per table plus fanout tables for joins.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buckets::{build_buckets, Bucket};
use super::{EstimateError, EstimatorConfig};
use crate::catalog::{key_bits, Catalog, Column, ColumnRef, TableData};
use crate::queryir::{Region, SubPlanQuery};

/// Discretization of one attribute. The last bin always holds nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// One bin per distinct value.
    Exact(Vec<f64>),
    Ranges {
        buckets: Vec<Bucket>,
        integral: bool,
    },
}

impl Binning {
    pub fn new(column: &Column, max_bins: usize) -> Binning {
        let freqs = column.value_frequencies();
        if freqs.len() <= max_bins {
            Binning::Exact(freqs.into_iter().map(|(v, _)| v).collect())
        } else {
            Binning::Ranges {
                buckets: build_buckets(&freqs, max_bins),
                integral: column.meta().integral,
            }
        }
    }

    fn value_bins(&self) -> usize {
        match self {
            Binning::Exact(v) => v.len(),
            Binning::Ranges { buckets, .. } => buckets.len(),
        }
    }

    /// Number of bins including the null bin.
    pub fn bins(&self) -> usize {
        self.value_bins() + 1
    }

    pub fn bin_of(&self, v: Option<f64>) -> usize {
        let Some(v) = v else {
            return self.value_bins();
        };
        match self {
            Binning::Exact(vals) => vals
                .binary_search_by(|x| x.total_cmp(&v))
                .unwrap_or_else(|i| i.min(vals.len() - 1)),
            Binning::Ranges { buckets, .. } => buckets.partition_point(|b| b.hi < v).min(buckets.len() - 1),
        }
    }

    /// Fraction of each bin's mass inside `region`.
    pub fn weights(&self, region: &Region) -> Vec<f64> {
        let mut w: Vec<f64> = match self {
            Binning::Exact(vals) => vals.iter().map(|v| f64::from(u8::from(region.contains(*v)))).collect(),
            Binning::Ranges { buckets, integral } => buckets.iter().map(|b| b.fraction(region, *integral)).collect(),
        };
        w.push(0.0);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableBayesNet {
    pub rows: u64,
    pub columns: Vec<String>,
    pub binning: Vec<Binning>,
    pub parent: Vec<Option<usize>>,
    /// Breadth-first order from attribute 0.
    pub order: Vec<usize>,
    /// `cpt[i][parent_bin][bin]`; roots have a single row, the marginal.
    pub cpt: Vec<Vec<Vec<f64>>>,
}

/// Mutual information between two binned attributes.
pub fn mutual_information(a: &[usize], b: &[usize], bins_a: usize, bins_b: usize) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let mut joint = vec![0u64; bins_a * bins_b];
    let mut ma = vec![0u64; bins_a];
    let mut mb = vec![0u64; bins_b];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * bins_b + y] += 1;
        ma[x] += 1;
        mb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..bins_a {
        for y in 0..bins_b {
            let c = joint[x * bins_b + y];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (ma[x] as f64 * mb[y] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Maximum spanning tree by Kruskal. Ties go to the lexicographically
/// smaller `(i, j)` pair.
pub fn max_spanning_tree(n: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((weight(i, j), i, j));
        }
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut x = x;
        while p[x] != r {
            let next = p[x];
            p[x] = r;
            x = next;
        }
        r
    }
    let mut tree = Vec::new();
    for (_, i, j) in edges {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            tree.push((i, j));
        }
    }
    tree
}

impl TableBayesNet {
    pub fn build(table: &TableData, max_bins: usize, exclude: &[String]) -> Result<TableBayesNet, EstimateError> {
        if table.rows() == 0 {
            return Err(EstimateError::InsufficientData(format!(
                "table `{}` has no rows",
                table.name()
            )));
        }
        let cols: Vec<&Column> = table
            .columns()
            .iter()
            .filter(|c| !exclude.iter().any(|x| *x == format!("{}.{}", table.name(), c.name())))
            .collect();
        let binning: Vec<Binning> = cols.iter().map(|c| Binning::new(c, max_bins.max(1))).collect();
        let binned: Vec<Vec<usize>> = cols
            .iter()
            .zip(&binning)
            .map(|(c, b)| (0..table.rows()).map(|r| b.bin_of(c.get(r))).collect())
            .collect();
        let n = cols.len();
        let mut mi = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                mi[i][j] = mutual_information(&binned[i], &binned[j], binning[i].bins(), binning[j].bins());
            }
        }
        let tree = max_spanning_tree(n, |i, j| mi[i][j]);
        let mut adj = vec![Vec::new(); n];
        for &(i, j) in &tree {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut parent = vec![None; n];
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                let mut next = adj[u].clone();
                next.sort_unstable();
                for w in next {
                    if !seen[w] {
                        seen[w] = true;
                        parent[w] = Some(u);
                        queue.push_back(w);
                    }
                }
            }
        }
        let rows = table.rows() as f64;
        let marginal = |i: usize| {
            let mut m = vec![0.0; binning[i].bins()];
            for &b in &binned[i] {
                m[b] += 1.0;
            }
            m.iter_mut().for_each(|x| *x /= rows);
            m
        };
        let cpt = (0..n)
            .map(|i| match parent[i] {
                None => vec![marginal(i)],
                Some(p) => {
                    let (pb, cb) = (binning[p].bins(), binning[i].bins());
                    let mut counts = vec![vec![0.0; cb]; pb];
                    for (&x, &y) in binned[p].iter().zip(&binned[i]) {
                        counts[x][y] += 1.0;
                    }
                    let fallback = marginal(i);
                    counts
                        .into_iter()
                        .map(|row| {
                            let s: f64 = row.iter().sum();
                            if s == 0.0 {
                                fallback.clone()
                            } else {
                                row.into_iter().map(|c| c / s).collect()
                            }
                        })
                        .collect()
                }
            })
            .collect();
        Ok(TableBayesNet {
            rows: table.rows() as u64,
            columns: cols.iter().map(|c| c.name().to_string()).collect(),
            binning,
            parent,
            order,
            cpt,
        })
    }

    /// Tree edges as `(parent, child)` attribute indexes.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (p, c)))
            .collect()
    }

    /// Probability that a row satisfies all `regions` (column name, region),
    /// by summing out the tree from the leaves up.
    pub fn probability<'a>(
        &self,
        table: &str,
        regions: impl IntoIterator<Item = (&'a str, &'a Region)>,
    ) -> Result<f64, EstimateError> {
        let n = self.columns.len();
        let mut weights: Vec<Option<Vec<f64>>> = vec![None; n];
        for (col, region) in regions {
            let i = self
                .columns
                .iter()
                .position(|c| c == col)
                .ok_or_else(|| EstimateError::UnmodeledColumn {
                    table: table.to_string(),
                    column: col.to_string(),
                })?;
            let w = self.binning[i].weights(region);
            weights[i] = Some(match weights[i].take() {
                Some(prev) => prev.iter().zip(&w).map(|(a, b)| a.min(*b)).collect(),
                None => w,
            });
        }
        // belief[i][b]: weight of bin b of i times messages from i's children.
        let mut belief: Vec<Vec<f64>> = (0..n)
            .map(|i| weights[i].clone().unwrap_or_else(|| vec![1.0; self.binning[i].bins()]))
            .collect();
        let mut total = 1.0;
        for &i in self.order.iter().rev() {
            match self.parent[i] {
                Some(p) => {
                    let msg: Vec<f64> = self.cpt[i]
                        .iter()
                        .map(|row| row.iter().zip(&belief[i]).map(|(a, b)| a * b).sum())
                        .collect();
                    for (b, m) in belief[p].iter_mut().zip(msg) {
                        *b *= m;
                    }
                }
                None => {
                    total *= self.cpt[i][0].iter().zip(&belief[i]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        Ok(total.clamp(0.0, 1.0))
    }
}

/// Per-key row counts on both sides of one join direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutTable {
    pub from: ColumnRef,
    pub to: ColumnRef,
    /// `(key, rows of from with key, rows of to with key)`; keys absent on
    /// the `to` side carry a zero.
    pub per_key: Vec<(f64, u64, u64)>,
    /// Rows of `from` with a null key; their fanout is zero.
    pub null_rows: u64,
}

impl FanoutTable {
    pub fn build(catalog: &Catalog, from: &ColumnRef, to: &ColumnRef) -> Result<FanoutTable, EstimateError> {
        let fc = catalog.column_ref(from)?;
        let tc = catalog.column_ref(to)?;
        let mut to_counts: BTreeMap<u64, u64> = BTreeMap::new();
        for (v, n) in tc.value_frequencies() {
            to_counts.insert(key_bits(v), n);
        }
        let per_key = fc
            .value_frequencies()
            .into_iter()
            .map(|(v, n)| (v, n, to_counts.get(&key_bits(v)).copied().unwrap_or(0)))
            .collect();
        Ok(FanoutTable {
            from: from.clone(),
            to: to.clone(),
            per_key,
            null_rows: fc.meta().null_count,
        })
    }

    /// Mean number of `to` matches per `from` row whose key lies in `region`.
    pub fn expected(&self, region: Option<&Region>) -> f64 {
        let (mut rows, mut matches) = (0.0, 0.0);
        for &(k, n, m) in &self.per_key {
            if region.is_none_or(|r| r.contains(k)) {
                rows += n as f64;
                matches += (n * m) as f64;
            }
        }
        if region.is_none() {
            rows += self.null_rows as f64;
        }
        if rows == 0.0 {
            0.0
        } else {
            matches / rows
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChowLiuModel {
    pub tables: BTreeMap<String, TableBayesNet>,
    pub fanouts: BTreeMap<(ColumnRef, ColumnRef), FanoutTable>,
}

impl ChowLiuModel {
    pub fn build(catalog: &Catalog, config: &EstimatorConfig) -> Result<ChowLiuModel, EstimateError> {
        let tables: Vec<&TableData> = catalog.tables().collect();
        let tables = tables
            .par_iter()
            .map(|t| {
                TableBayesNet::build(t, config.chow_liu_bins, &config.chow_liu_exclude)
                    .map(|net| (t.name().to_string(), net))
            })
            .collect::<Result<BTreeMap<_, _>, _>>()?;
        let mut fanouts = BTreeMap::new();
        for e in &catalog.join_graph().edges {
            for (a, b) in [(&e.left, &e.right), (&e.right, &e.left)] {
                fanouts.insert((a.clone(), b.clone()), FanoutTable::build(catalog, a, b)?);
            }
        }
        Ok(ChowLiuModel { tables, fanouts })
    }

    fn table_probability(&self, subplan: &SubPlanQuery, table: &str) -> Result<(f64, f64), EstimateError> {
        let net = self
            .tables
            .get(table)
            .ok_or_else(|| EstimateError::UnmodeledTable(table.to_string()))?;
        let preds: Vec<_> = subplan.predicates_on(table).collect();
        if preds.is_empty() {
            return Ok((net.rows as f64, 1.0));
        }
        let p = net.probability(table, preds.iter().map(|p| (p.column.as_str(), &p.region)))?;
        Ok((net.rows as f64, p))
    }

    /// `|root| P(root)` times, per edge walked away from the root, the mean
    /// fanout into the child and the child's own selectivity.
    pub fn estimate(&self, subplan: &SubPlanQuery) -> Result<f64, EstimateError> {
        let tables = subplan.tables();
        let Some(root) = tables.first() else {
            return Ok(0.0);
        };
        let (rows, p) = self.table_probability(subplan, root)?;
        let mut est = rows * p;
        let mut seen = vec![root.clone()];
        let mut queue = VecDeque::from([root.clone()]);
        while let Some(u) = queue.pop_front() {
            for e in &subplan.join_edges {
                let (Some(uc), Some(wc)) = (e.side(&u), e.other(&u)) else {
                    continue;
                };
                if seen.contains(&wc.table) {
                    continue;
                }
                let fanout = self
                    .fanouts
                    .get(&(uc.clone(), wc.clone()))
                    .ok_or_else(|| EstimateError::UnmodeledTable(wc.table.clone()))?;
                let key_region = subplan
                    .predicates_on(&u)
                    .find(|p| p.column == uc.column)
                    .map(|p| &p.region);
                let (_, pw) = self.table_probability(subplan, &wc.table)?;
                est *= fanout.expected(key_region) * pw;
                seen.push(wc.table.clone());
                queue.push_back(wc.table.clone());
            }
        }
        Ok(est)
    }
}
