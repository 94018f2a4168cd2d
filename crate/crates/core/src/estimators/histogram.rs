//! Per-column MCV lists and equi-depth histograms, combined under attribute
//! independence and join uniformity.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buckets::{build_buckets, Bucket};
use super::{uniformity_join, EstimateError, EstimatorConfig};
use crate::catalog::{Catalog, Column, TableData};
use crate::queryir::{Region, SubPlanQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnHistogram {
    /// `(value, share of non-null rows)`, most frequent first.
    pub mcvs: Vec<(f64, f64)>,
    pub buckets: Vec<Bucket>,
    /// Share of non-null rows covered by `buckets`.
    pub bucket_mass: f64,
    pub non_null_fraction: f64,
    pub integral: bool,
}

impl ColumnHistogram {
    pub fn build(column: &Column, buckets: usize, mcv_count: usize) -> ColumnHistogram {
        let freqs = column.value_frequencies();
        let non_null: u64 = freqs.iter().map(|(_, n)| n).sum();
        let mut by_freq: Vec<(f64, u64)> = freqs.clone();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
        by_freq.truncate(mcv_count);
        let denom = non_null.max(1) as f64;
        let mcvs: Vec<(f64, f64)> = by_freq.iter().map(|&(v, n)| (v, n as f64 / denom)).collect();
        let rest: Vec<(f64, u64)> = freqs
            .into_iter()
            .filter(|(v, _)| !by_freq.iter().any(|(m, _)| m == v))
            .collect();
        let rest_rows: u64 = rest.iter().map(|(_, n)| n).sum();
        ColumnHistogram {
            mcvs,
            buckets: build_buckets(&rest, buckets),
            bucket_mass: rest_rows as f64 / denom,
            non_null_fraction: 1.0 - column.null_fraction(),
            integral: column.meta().integral,
        }
    }

    /// MCV shares plus bucket mass; one for any column with data.
    pub fn total_mass(&self) -> f64 {
        self.mcvs.iter().map(|(_, f)| f).sum::<f64>() + self.bucket_mass
    }

    pub fn selectivity(&self, region: &Region) -> f64 {
        let mcv: f64 = self
            .mcvs
            .iter()
            .filter(|(v, _)| region.contains(*v))
            .map(|(_, f)| f)
            .sum();
        let rows: u64 = self.buckets.iter().map(|b| b.rows).sum();
        let mut hist = 0.0;
        if rows > 0 {
            for b in &self.buckets {
                hist += b.rows as f64 / rows as f64 * b.fraction(region, self.integral);
            }
        }
        let sel = self.non_null_fraction * (mcv + self.bucket_mass * hist);
        sel.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHistograms {
    pub rows: u64,
    pub columns: BTreeMap<String, ColumnHistogram>,
    pub distinct: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramModel {
    pub tables: BTreeMap<String, TableHistograms>,
}

impl HistogramModel {
    pub fn build(catalog: &Catalog, config: &EstimatorConfig) -> HistogramModel {
        let tables: Vec<&TableData> = catalog.tables().collect();
        let tables = tables
            .par_iter()
            .map(|t| {
                let mut columns = BTreeMap::new();
                let mut distinct = BTreeMap::new();
                for c in t.columns() {
                    columns.insert(
                        c.name().to_string(),
                        ColumnHistogram::build(c, config.histogram_buckets, config.mcv_count),
                    );
                    distinct.insert(c.name().to_string(), c.meta().domain_size);
                }
                (
                    t.name().to_string(),
                    TableHistograms {
                        rows: t.rows() as u64,
                        columns,
                        distinct,
                    },
                )
            })
            .collect();
        HistogramModel { tables }
    }

    pub fn estimate(&self, subplan: &SubPlanQuery) -> Result<f64, EstimateError> {
        let mut filtered = BTreeMap::new();
        for t in subplan.tables() {
            let th = self
                .tables
                .get(t)
                .ok_or_else(|| EstimateError::UnmodeledTable(t.clone()))?;
            let mut rows = th.rows as f64;
            for p in subplan.predicates_on(t) {
                let h = th
                    .columns
                    .get(&p.column)
                    .ok_or_else(|| EstimateError::UnmodeledColumn {
                        table: t.clone(),
                        column: p.column.clone(),
                    })?;
                rows *= h.selectivity(&p.region);
            }
            filtered.insert(t.clone(), rows);
        }
        Ok(uniformity_join(subplan, &filtered, |c| {
            self.tables[&c.table].distinct.get(&c.column).copied().unwrap_or(1) as f64
        }))
    }
}
