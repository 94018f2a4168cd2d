//! Row filtering of one table under a conjunction of predicates.

use crate::catalog::{Catalog, CatalogError, Column, TableData};
use crate::queryir::{Predicate, Region};

/// Predicates of one table bound to their columns. Nulls never qualify.
pub struct TableFilter<'a> {
    table: &'a TableData,
    checks: Vec<(&'a Column, &'a Region)>,
}

impl<'a> TableFilter<'a> {
    pub fn new<I>(catalog: &'a Catalog, table: &str, predicates: I) -> Result<Self, CatalogError>
    where
        I: IntoIterator<Item = &'a Predicate>,
    {
        let table = catalog.table(table)?;
        let mut checks = Vec::new();
        for p in predicates {
            if p.table != table.name() {
                continue;
            }
            let col = table.column(&p.column).ok_or_else(|| CatalogError::UnknownColumn {
                table: p.table.clone(),
                column: p.column.clone(),
            })?;
            checks.push((col, &p.region));
        }
        Ok(TableFilter { table, checks })
    }

    pub fn table(&self) -> &'a TableData {
        self.table
    }

    pub fn predicate_count(&self) -> usize {
        self.checks.len()
    }

    #[inline]
    pub fn matches(&self, row: usize) -> bool {
        self.checks
            .iter()
            .all(|(col, region)| col.get(row).is_some_and(|v| region.contains(v)))
    }

    pub fn rows(&self) -> Vec<usize> {
        if self.checks.is_empty() {
            return (0..self.table.rows()).collect();
        }
        (0..self.table.rows()).filter(|&r| self.matches(r)).collect()
    }

    pub fn count(&self) -> usize {
        if self.checks.is_empty() {
            return self.table.rows();
        }
        (0..self.table.rows()).filter(|&r| self.matches(r)).count()
    }
}
