//! Benchmark report: per-query rows, per-method aggregates, and renderings.

use std::fmt::Write as _;

use anyhow::Result;
use cardbench_core::metrics::{percentile, MetricError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPlanRow {
    pub key: String,
    /// Raw estimator output.
    pub raw: f64,
    /// Value handed to the planner, floored at one row.
    pub estimate: f64,
    pub truth: f64,
    pub q_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    pub subplans: Vec<SubPlanRow>,
    pub median_q_error: f64,
    pub p_error: f64,
    pub root_operator: String,
    pub plan: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub id: String,
    pub tables: usize,
    pub methods: Vec<MethodRun>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
}

impl Percentiles {
    pub fn of(values: &[f64]) -> Result<Percentiles, MetricError> {
        Ok(Percentiles {
            p50: percentile(values, 50.0)?,
            p90: percentile(values, 90.0)?,
            p99: percentile(values, 99.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// Over every sub-plan of every query.
    pub q_error: Percentiles,
    /// Over queries.
    pub p_error: Percentiles,
    pub model_bytes: u64,
}

/// Deterministic part of a benchmark run. Wall-clock figures live in
/// [`Timings`] so that reports compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub catalog: String,
    pub seed: u64,
    pub methods: Vec<MethodSummary>,
    pub queries: Vec<QueryReport>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    pub build_seconds: f64,
    /// Mean over queries of the summed estimate latency.
    pub mean_estimate_ms: f64,
    pub per_query_ms: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub methods: Vec<MethodTiming>,
}

/// Aggregates for each method, recomputed from the per-query rows.
pub fn summarize(queries: &[QueryReport], methods: &[(String, u64)]) -> Result<Vec<MethodSummary>, MetricError> {
    methods
        .iter()
        .map(|(m, bytes)| {
            let runs: Vec<&MethodRun> = queries
                .iter()
                .flat_map(|q| q.methods.iter().filter(|r| &r.method == m))
                .collect();
            let q: Vec<f64> = runs.iter().flat_map(|r| r.subplans.iter().map(|s| s.q_error)).collect();
            let p: Vec<f64> = runs.iter().map(|r| r.p_error).collect();
            Ok(MethodSummary {
                method: m.clone(),
                q_error: Percentiles::of(&q)?,
                p_error: Percentiles::of(&p)?,
                model_bytes: *bytes,
            })
        })
        .collect()
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per (query, method).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "query_id",
            "method",
            "subplans",
            "median_q_error",
            "max_q_error",
            "p_error",
            "root_operator",
        ])?;
        for q in &self.queries {
            for r in &q.methods {
                let max_q = r.subplans.iter().map(|s| s.q_error).fold(1.0, f64::max);
                w.write_record([
                    q.id.clone(),
                    r.method.clone(),
                    r.subplans.len().to_string(),
                    r.median_q_error.to_string(),
                    max_q.to_string(),
                    r.p_error.to_string(),
                    r.root_operator.clone(),
                ])?;
            }
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }

    /// Aligned percentile table, joined with timings when available.
    pub fn table(&self, timings: Option<&Timings>) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<11} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8} {:>11} {:>9} {:>10}",
            "method", "q50", "q90", "q99", "p50", "p90", "p99", "bytes", "build_s", "est_ms/q"
        );
        for m in &self.methods {
            let t = timings.and_then(|t| t.methods.iter().find(|x| x.method == m.method));
            let (build, lat) = t.map_or((f64::NAN, f64::NAN), |t| (t.build_seconds, t.mean_estimate_ms));
            let _ = writeln!(
                out,
                "{:<11} {:>9.2} {:>9.2} {:>9.2} {:>8.3} {:>8.3} {:>8.3} {:>11} {:>9.3} {:>10.3}",
                m.method,
                m.q_error.p50,
                m.q_error.p90,
                m.q_error.p99,
                m.p_error.p50,
                m.p_error.p90,
                m.p_error.p99,
                m.model_bytes,
                build,
                lat
            );
        }
        out
    }
}
