use std::collections::BTreeSet;

use cardbench_core::synth::{stats_like, SynthConfig};
use cardbench_core::workloadgen::{enumerate_templates, generate_queries, Shape};

#[test]
fn seventy_templates_with_every_shape() {
    let cat = stats_like(SynthConfig::default()).unwrap();
    let ts = enumerate_templates(&cat, 8, 70, 1).unwrap();
    assert_eq!(ts.len(), 70);
    let shapes: BTreeSet<Shape> = ts.iter().map(|t| t.shape).collect();
    assert_eq!(shapes.len(), 3);
    let distinct: BTreeSet<_> = ts.iter().map(|t| (t.tables.clone(), t.edges.clone())).collect();
    assert_eq!(distinct.len(), 70);
    assert!(ts
        .iter()
        .all(|t| t.tables.len() >= 2 && t.edges.len() + 1 == t.tables.len()));
}

#[test]
fn generated_cardinalities_span_four_orders() {
    let cat = stats_like(SynthConfig::default()).unwrap();
    let ts = enumerate_templates(&cat, 5, 50, 2).unwrap();
    let qs = generate_queries(&ts, &cat, 2, (0.05, 1.0), 2).unwrap();
    assert_eq!(qs.len(), 100);
    let lo = qs.iter().map(|q| q.true_cardinality).min().unwrap() as f64;
    let hi = qs.iter().map(|q| q.true_cardinality).max().unwrap() as f64;
    assert!(lo >= 1.0);
    assert!((hi / lo).log10() >= 4.0, "range {lo}..{hi}");
}
