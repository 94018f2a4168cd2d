use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use cardbench_cli::pipeline::{cmd_bench, cmd_explain, cmd_gen, cmd_truecards, GenOptions, InvariantViolation};
use cardbench_cli::report::summarize;
use cardbench_cli::RunConfig;
use cardbench_core::estimators::Method;
use cardbench_core::queryir::parse_workload;
use cardbench_core::synth::{stats_like, SynthConfig};
use cardbench_core::Catalog;

fn small() -> (Arc<Catalog>, Vec<cardbench_core::Query>) {
    let cat = stats_like(SynthConfig { seed: 3, scale: 0.1 }).unwrap();
    let opts = GenOptions {
        max_tables: 4,
        templates: 6,
        per_template: 1,
        selectivity: (0.05, 1.0),
        seed: 11,
    };
    let (text, manifest) = cmd_gen(&cat, &opts).unwrap();
    assert_eq!(manifest.lines().count(), 7);
    let queries = parse_workload(&text, &cat).unwrap();
    (Arc::new(cat), queries)
}

#[test]
fn report_aggregates_match_rows() {
    let (cat, queries) = small();
    let cfg = RunConfig {
        workers: 2,
        ..RunConfig::default()
    };
    let methods = [Method::TrueCard, Method::IndepHist, Method::PessBound];
    let (report, timings) = cmd_bench(cat, &queries, &methods, &cfg, None).unwrap();
    assert!(report.violations.is_empty(), "{:?}", report.violations);
    let sizes: Vec<(String, u64)> = report
        .methods
        .iter()
        .map(|m| (m.method.clone(), m.model_bytes))
        .collect();
    assert_eq!(summarize(&report.queries, &sizes).unwrap(), report.methods);
    assert_eq!(timings.methods.len(), 3);
    let csv = report.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1 + queries.len() * methods.len());
    let back: cardbench_cli::BenchmarkReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn truecards_resume_and_verify() {
    let (cat, queries) = small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tc.csv");
    let first = cmd_truecards(&cat, &queries[..3], &path, false, 1).unwrap();
    assert_eq!((first.computed, first.reused), (3, 0));
    let all = cmd_truecards(&cat, &queries, &path, false, 1).unwrap();
    assert_eq!((all.computed, all.reused), (queries.len() - 3, 3));
    let before = std::fs::read(&path).unwrap();
    let again = cmd_truecards(&cat, &queries, &path, true, 2).unwrap();
    assert_eq!(again.computed, 0);
    assert_eq!(std::fs::read(&path).unwrap(), before);

    // Corrupt one count; verification must flag it.
    let text = String::from_utf8(before).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.last_mut().unwrap();
    let (head, count) = last.rsplit_once(',').unwrap();
    *last = format!("{head},{}", count.parse::<u64>().unwrap() + 1);
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = cmd_truecards(&cat, &queries, &path, true, 1).unwrap_err();
    assert!(err.downcast_ref::<InvariantViolation>().is_some());
}

#[test]
fn explain_reports_both_plans() {
    let (cat, queries) = small();
    let sql = queries[0].to_sql(&cat);
    let out = cmd_explain(cat, &sql, Method::TrueCard, &RunConfig::default(), None).unwrap();
    assert_eq!(out.p_error, 1.0);
    assert_eq!(out.divergence, None);
    assert!(out.text.contains("first divergence: none"));
}

fn cardbench(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cardbench"))
        .args(args)
        .current_dir(dir)
        .env_remove("CARDBENCH_SEED")
        .env_remove("CARDBENCH_WORKERS")
        .output()
        .unwrap()
}

#[test]
fn binary_end_to_end_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = cardbench(&["synth", "--out", "cat", "--scale", "0.05"], d);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let cat = ["--schema", "cat/schema.txt", "--data", "cat"];
    let gen = [
        &cat[..],
        &[
            "--out",
            "w.sql",
            "--templates",
            "4",
            "--per-template",
            "1",
            "--max-tables",
            "3",
        ],
    ]
    .concat();
    assert!(cardbench(&[&["gen"], &gen[..]].concat(), d).status.success());
    assert!(d.join("w.manifest.csv").exists());
    let bench = [
        &["bench"],
        &cat[..],
        &["--workload", "w.sql", "--methods", "true,uni_sample", "--out", "out"],
    ]
    .concat();
    let run = cardbench(&bench, d);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("uni_sample"));
    for f in ["report.json", "report.csv", "timings.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    let inspect = cardbench(&[&["inspect"], &cat[..]].concat(), d);
    assert!(String::from_utf8_lossy(&inspect.stdout).contains("table users"));

    std::fs::write(d.join("bad.sql"), "SELECT COUNT(*) FROM nope;\n").unwrap();
    let bad = [&["bench"], &cat[..], &["--workload", "bad.sql"]].concat();
    assert_eq!(cardbench(&bad, d).status.code(), Some(3));
    let missing = cardbench(&["inspect", "--schema", "none.txt", "--data", "."], d);
    assert_eq!(missing.status.code(), Some(3));
}
