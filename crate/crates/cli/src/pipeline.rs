//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use cardbench_core::catalog::{load_catalog, Catalog};
use cardbench_core::estimators::{self, floor_estimate, CardinalityEstimator, Estimator, Method};
use cardbench_core::metrics::{p_error, percentile, q_error};
use cardbench_core::oracle::{execute_count, true_cardinalities_cached, CardinalityMap, Provenance, TrueCardCache};
use cardbench_core::planner::{cost_plan, explain, first_divergence, optimize};
use cardbench_core::queryir::{enumerate_subplans, format_workload, parse_query, parse_workload, Query};
use cardbench_core::synth::{stats_like, SynthConfig};
use cardbench_core::workloadgen::{enumerate_templates, generate_queries, manifest_csv};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{derive_seed, RunConfig};
use crate::report::{summarize, BenchmarkReport, MethodRun, MethodTiming, QueryReport, SubPlanRow, Timings};

/// A checked property failed; maps to exit code 2.
#[derive(Debug, Error)]
#[error("{} invariant violation(s):\n{}", .0.len(), .0.join("\n"))]
pub struct InvariantViolation(pub Vec<String>);

/// Bad input of any kind; maps to exit code 3.
#[derive(Debug, Error)]
#[error("{0:#}")]
pub struct InputError(pub anyhow::Error);

fn input<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| InputError(e).into())
}

pub fn load_inputs(schema: &Path, data_dir: &Path, workload: Option<&Path>) -> Result<(Arc<Catalog>, Vec<Query>)> {
    let catalog = input(load_catalog(schema, data_dir).context("loading catalog"))?;
    let queries = match workload {
        Some(w) => {
            let text = input(std::fs::read_to_string(w).with_context(|| format!("reading {}", w.display())))?;
            input(parse_workload(&text, &catalog).with_context(|| format!("parsing {}", w.display())))?
        }
        None => Vec::new(),
    };
    Ok((Arc::new(catalog), queries))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrueCardStats {
    pub queries: usize,
    pub computed: usize,
    pub reused: usize,
    pub rows: usize,
}

/// Fills the cache at `out` with every sub-plan of every query, keeping
/// entries that are already present. With `verify`, every cached row is
/// recounted.
pub fn cmd_truecards(
    catalog: &Catalog,
    queries: &[Query],
    out: &Path,
    verify: bool,
    workers: usize,
) -> Result<TrueCardStats> {
    let mut cache = TrueCardCache::load(out, catalog.fingerprint())?;
    let pool = pool(workers)?;
    let mut stats = TrueCardStats {
        queries: queries.len(),
        computed: 0,
        reused: 0,
        rows: 0,
    };
    let mut dirty = !out.exists();
    for q in queries {
        let space = enumerate_subplans(q, catalog);
        let (_, hit) = pool
            .install(|| true_cardinalities_cached(&space, catalog, &mut cache))
            .with_context(|| format!("query {}", q.id))?;
        if hit {
            stats.reused += 1;
        } else {
            stats.computed += 1;
            dirty = true;
            cache.save(out)?;
        }
    }
    if dirty {
        cache.save(out)?;
    }
    if verify {
        let mut bad = Vec::new();
        for q in queries {
            let space = enumerate_subplans(q, catalog);
            let map = cache
                .lookup(&space)
                .ok_or_else(|| anyhow!("query {} missing from cache", q.id))?;
            let fresh: Vec<u64> = pool.install(|| {
                space
                    .entries
                    .par_iter()
                    .map(|sp| execute_count(sp, catalog))
                    .collect::<Result<_, _>>()
            })?;
            for (sp, c) in space.entries.iter().zip(fresh) {
                let cached = map.get(&sp.key).unwrap_or(f64::NAN);
                if cached != c as f64 {
                    bad.push(format!("{} {}: cached {cached}, counted {c}", q.id, sp.key));
                }
            }
        }
        if !bad.is_empty() {
            return Err(InvariantViolation(bad).into());
        }
    }
    stats.rows = cache.entries.len();
    Ok(stats)
}

fn truth_maps(
    catalog: &Catalog,
    queries: &[Query],
    cache_path: Option<&Path>,
    pool: &rayon::ThreadPool,
) -> Result<Vec<CardinalityMap>> {
    let mut cache = match cache_path {
        Some(p) => TrueCardCache::load(p, catalog.fingerprint())?,
        None => TrueCardCache::new(catalog.fingerprint()),
    };
    let mut maps = Vec::with_capacity(queries.len());
    for q in queries {
        let space = enumerate_subplans(q, catalog);
        let (map, _) = pool
            .install(|| true_cardinalities_cached(&space, catalog, &mut cache))
            .with_context(|| format!("true cardinalities of query {}", q.id))?;
        maps.push(map);
    }
    Ok(maps)
}

/// Estimates every sub-plan, plans, and scores each query under each
/// method. Invariant failures are collected in the report.
pub fn cmd_bench(
    catalog: Arc<Catalog>,
    queries: &[Query],
    methods: &[Method],
    cfg: &RunConfig,
    cache: Option<&Path>,
) -> Result<(BenchmarkReport, Timings)> {
    if methods.is_empty() {
        bail!(InputError(anyhow!("no methods selected")));
    }
    let pool = pool(cfg.workers)?;
    let truths = truth_maps(&catalog, queries, cache, &pool)?;
    let mut built: Vec<Estimator> = Vec::with_capacity(methods.len());
    for &m in methods {
        let est = pool
            .install(|| estimators::build(m, catalog.clone(), &cfg.estimators))
            .with_context(|| format!("building {m}"))?;
        built.push(est);
    }
    let results: Vec<(QueryReport, Vec<f64>, Vec<String>)> = pool.install(|| {
        queries
            .par_iter()
            .zip(&truths)
            .map(|(q, truth)| run_query(&catalog, q, truth, &built, cfg))
            .collect::<Result<_>>()
    })?;
    let mut reports = Vec::with_capacity(results.len());
    let mut latencies: Vec<Vec<(String, f64)>> = vec![Vec::new(); built.len()];
    let mut violations = Vec::new();
    for (r, lat, v) in results {
        for (i, ms) in lat.into_iter().enumerate() {
            latencies[i].push((r.id.clone(), ms));
        }
        violations.extend(v);
        reports.push(r);
    }
    let sizes: Vec<(String, u64)> = built
        .iter()
        .map(|e| (e.method().to_string(), e.build_stats().model_bytes))
        .collect();
    let summary = if reports.is_empty() {
        Vec::new()
    } else {
        summarize(&reports, &sizes)?
    };
    let timings = Timings {
        methods: built
            .iter()
            .zip(latencies)
            .map(|(e, per_query)| MethodTiming {
                method: e.method().to_string(),
                build_seconds: e.build_stats().build_seconds,
                mean_estimate_ms: if per_query.is_empty() {
                    0.0
                } else {
                    per_query.iter().map(|x| x.1).sum::<f64>() / per_query.len() as f64
                },
                per_query_ms: per_query,
            })
            .collect(),
    };
    Ok((
        BenchmarkReport {
            catalog: catalog.fingerprint().to_string(),
            seed: cfg.seed,
            methods: summary,
            queries: reports,
            violations,
        },
        timings,
    ))
}

fn run_query(
    catalog: &Catalog,
    q: &Query,
    truth: &CardinalityMap,
    built: &[Estimator],
    cfg: &RunConfig,
) -> Result<(QueryReport, Vec<f64>, Vec<String>)> {
    let space = enumerate_subplans(q, catalog);
    let mut runs = Vec::with_capacity(built.len());
    let mut latency = Vec::with_capacity(built.len());
    let mut violations = Vec::new();
    for est in built {
        let method = est.method();
        let mut map = CardinalityMap::new(&q.id, Provenance::Estimated(method.to_string()));
        let mut rows = Vec::with_capacity(space.len());
        let mut ms = 0.0;
        for sp in &space.entries {
            let key = sp.key.to_string();
            let t = truth.get(&sp.key).expect("truth covers the space");
            let start = Instant::now();
            let raw = if method == Method::TrueCard {
                t
            } else {
                let seed = derive_seed(cfg.seed, &q.id, method.name(), &key);
                est.estimate(sp, seed)
                    .with_context(|| format!("query {} method {method} sub-plan {key}", q.id))?
            };
            ms += start.elapsed().as_secs_f64() * 1e3;
            let e = floor_estimate(raw);
            let qe = q_error(e, t).value;
            if method == Method::PessBound && raw < t {
                violations.push(format!("{} {key}: pess_bound {raw} below true {t}", q.id));
            }
            if method == Method::TrueCard && qe != 1.0 {
                violations.push(format!("{} {key}: true q-error {qe}", q.id));
            }
            map.insert(sp.key.clone(), e);
            rows.push(SubPlanRow {
                key,
                raw,
                estimate: e,
                truth: t,
                q_error: qe,
            });
        }
        let pe = p_error(q, &map, truth, &cfg.cost).with_context(|| format!("query {} method {method}", q.id))?;
        if pe < 1.0 - 1e-12 {
            violations.push(format!("{} {method}: p-error {pe} below 1", q.id));
        }
        if method == Method::TrueCard && pe != 1.0 {
            violations.push(format!("{} true: p-error {pe}", q.id));
        }
        let plan = optimize(q, &map, &cfg.cost)?;
        let qs: Vec<f64> = rows.iter().map(|r| r.q_error).collect();
        runs.push(MethodRun {
            method: method.to_string(),
            median_q_error: percentile(&qs, 50.0)?,
            p_error: pe,
            root_operator: plan.root_operator(),
            plan: explain(&plan, &map, &cfg.cost)?,
            subplans: rows,
        });
        latency.push(ms);
    }
    Ok((
        QueryReport {
            id: q.id.clone(),
            tables: q.tables.len(),
            methods: runs,
        },
        latency,
        violations,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    pub text: String,
    pub estimated_root: String,
    pub true_root: String,
    pub p_error: f64,
    pub divergence: Option<String>,
}

/// Plans `query` under `method`'s estimates and under true cardinalities.
/// `scale_root` multiplies the estimate of the full query before planning.
pub fn cmd_explain(
    catalog: Arc<Catalog>,
    sql: &str,
    method: Method,
    cfg: &RunConfig,
    scale_root: Option<f64>,
) -> Result<ExplainOutput> {
    let q = input(parse_query(sql, &catalog).map_err(anyhow::Error::from))?;
    let space = enumerate_subplans(&q, &catalog);
    let truth = cardbench_core::oracle::true_cardinalities(&space, &catalog)?;
    let est = estimators::build(method, catalog.clone(), &cfg.estimators)?;
    let mut map = CardinalityMap::new(&q.id, Provenance::Estimated(method.to_string()));
    for sp in &space.entries {
        let raw = if method == Method::TrueCard {
            truth.get(&sp.key).unwrap()
        } else {
            est.estimate(sp, derive_seed(cfg.seed, &q.id, method.name(), &sp.key.to_string()))?
        };
        map.insert(sp.key.clone(), raw);
    }
    if let Some(f) = scale_root {
        let root = q.full_key();
        let v = map.get(&root).unwrap();
        map.insert(root, v * f);
    }
    for v in map.values.values_mut() {
        *v = floor_estimate(*v);
    }
    let est_plan = optimize(&q, &map, &cfg.cost)?;
    let true_plan = optimize(&q, &truth, &cfg.cost)?;
    let pe = p_error(&q, &map, &truth, &cfg.cost)?;
    let divergence = first_divergence(&est_plan, &true_plan);
    let mut text = String::new();
    let label = match scale_root {
        Some(f) => format!("{method}, root x{f}"),
        None => method.to_string(),
    };
    writeln!(text, "-- plan under {label} estimates")?;
    text.push_str(&explain(&est_plan, &map, &cfg.cost)?);
    writeln!(text, "-- plan under true cardinalities")?;
    text.push_str(&explain(&true_plan, &truth, &cfg.cost)?);
    writeln!(
        text,
        "true cost of estimated plan: {:.3}",
        cost_plan(&est_plan, &truth, &cfg.cost)?
    )?;
    writeln!(
        text,
        "true cost of optimal plan:   {:.3}",
        cost_plan(&true_plan, &truth, &cfg.cost)?
    )?;
    writeln!(text, "p-error: {pe:.6}")?;
    writeln!(text, "first divergence: {}", divergence.as_deref().unwrap_or("none"))?;
    Ok(ExplainOutput {
        text,
        estimated_root: est_plan.root_operator(),
        true_root: true_plan.root_operator(),
        p_error: pe,
        divergence,
    })
}

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub max_tables: usize,
    pub templates: usize,
    pub per_template: usize,
    pub selectivity: (f64, f64),
    pub seed: u64,
}

/// Returns the workload file text and its manifest CSV.
pub fn cmd_gen(catalog: &Catalog, opts: &GenOptions) -> Result<(String, String)> {
    let templates =
        enumerate_templates(catalog, opts.max_tables, opts.templates, opts.seed).map_err(|e| InputError(e.into()))?;
    let generated = generate_queries(
        &templates,
        catalog,
        opts.per_template,
        opts.selectivity,
        opts.seed.wrapping_add(1),
    )?;
    let queries: Vec<Query> = generated.iter().map(|g| g.query.clone()).collect();
    Ok((format_workload(&queries, catalog), manifest_csv(&generated)))
}

/// Writes the synthetic catalog (schema plus one CSV per table) to `dir`.
pub fn cmd_synth(dir: &Path, seed: u64, scale: f64) -> Result<String> {
    let catalog = stats_like(SynthConfig { seed, scale })?;
    catalog.write_to_dir(dir)?;
    Ok(catalog.fingerprint().to_string())
}

/// Per-table and per-column statistics.
pub fn cmd_inspect(catalog: &Catalog) -> String {
    let mut out = format!("catalog {}\n", catalog.fingerprint());
    for t in catalog.tables() {
        let _ = writeln!(out, "table {} rows={}", t.name(), t.rows());
        for c in t.columns() {
            let m = c.meta();
            let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| c.render_value(v));
            let _ = writeln!(
                out,
                "  {:<20} {:<11} distinct={:<6} nulls={:<6} min={} max={}",
                m.name,
                format!("{:?}", m.kind).to_lowercase(),
                m.domain_size,
                m.null_count,
                fmt(m.min),
                fmt(m.max)
            );
        }
    }
    for e in &catalog.join_graph().edges {
        let _ = writeln!(out, "join {e} {}", e.role);
    }
    out
}
