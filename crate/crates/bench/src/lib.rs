//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use cardbench_core::catalog::Catalog;
use cardbench_core::queryir::Query;
use cardbench_core::synth::{stats_like, SynthConfig};
use cardbench_core::workloadgen::{enumerate_templates, generate_queries};

/// Synthetic catalog at `scale` and `n` generated queries of up to
/// `max_tables` tables.
pub fn fixture(scale: f64, max_tables: usize, n: usize) -> (Arc<Catalog>, Vec<Query>) {
    let catalog = stats_like(SynthConfig { seed: 42, scale }).expect("synthetic catalog");
    let templates = enumerate_templates(&catalog, max_tables, n, 3).expect("templates");
    let queries = generate_queries(&templates, &catalog, 1, (0.01, 1.0), 4)
        .expect("queries")
        .into_iter()
        .map(|g| g.query)
        .collect();
    (Arc::new(catalog), queries)
}
