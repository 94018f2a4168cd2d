//! `cardbench` command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use cardbench_cli::pipeline::{self, GenOptions, InputError, InvariantViolation};
use cardbench_cli::RunConfig;
use cardbench_core::estimators::Method;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cardbench", version, about = "Cardinality estimation benchmark")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct CatalogArgs {
    /// Schema file.
    #[arg(long)]
    schema: PathBuf,
    /// Directory holding one `<table>.csv` per table.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the synthetic STATS-like catalog.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
    },
    /// Generate a workload file and manifest from the join graph.
    Gen {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        max_tables: usize,
        #[arg(long, default_value_t = 70)]
        templates: usize,
        #[arg(long, default_value_t = 2)]
        per_template: usize,
        #[arg(long, default_value_t = 0.001)]
        min_selectivity: f64,
        #[arg(long, default_value_t = 1.0)]
        max_selectivity: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute (or resume) the true-cardinality cache.
    Truecards {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Recount every cached row.
        #[arg(long)]
        verify: bool,
    },
    /// Run estimators over a workload and write reports.
    Bench {
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long)]
        workload: PathBuf,
        /// Comma-separated methods; defaults to all.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<Method>,
        /// True-cardinality cache to read and extend.
        #[arg(long)]
        truecards: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare the plan chosen under one method with the optimal plan.
    Explain {
        #[command(flatten)]
        catalog: CatalogArgs,
        /// Query text.
        #[arg(long)]
        query: String,
        #[arg(long, default_value = "true")]
        method: Method,
        /// Multiply the full-query estimate by this factor.
        #[arg(long)]
        scale_root: Option<f64>,
    },
    /// Print table and column statistics.
    Inspect {
        #[command(flatten)]
        catalog: CatalogArgs,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref()).map_err(InputError)?;
    match cli.cmd {
        Cmd::Synth { out, seed, scale } => {
            let fp = pipeline::cmd_synth(&out, seed, scale)?;
            println!("wrote {} (catalog {fp})", out.display());
        }
        Cmd::Gen {
            catalog,
            out,
            manifest,
            max_tables,
            templates,
            per_template,
            min_selectivity,
            max_selectivity,
            seed,
        } => {
            let (cat, _) = pipeline::load_inputs(&catalog.schema, &catalog.data, None)?;
            let opts = GenOptions {
                max_tables,
                templates,
                per_template,
                selectivity: (min_selectivity, max_selectivity),
                seed: seed.unwrap_or(cfg.seed),
            };
            let (workload, manifest_text) = pipeline::cmd_gen(&cat, &opts)?;
            write(&out, &workload)?;
            let manifest = manifest.unwrap_or_else(|| out.with_extension("manifest.csv"));
            write(&manifest, &manifest_text)?;
            println!(
                "wrote {} queries to {}",
                manifest_text.lines().count() - 1,
                out.display()
            );
        }
        Cmd::Truecards {
            catalog,
            workload,
            out,
            verify,
        } => {
            let (cat, queries) = pipeline::load_inputs(&catalog.schema, &catalog.data, Some(&workload))?;
            let s = pipeline::cmd_truecards(&cat, &queries, &out, verify, cfg.workers)?;
            println!(
                "{} queries: {} computed, {} cached; {} rows in {}",
                s.queries,
                s.computed,
                s.reused,
                s.rows,
                out.display()
            );
        }
        Cmd::Bench {
            catalog,
            workload,
            methods,
            truecards,
            out,
        } => {
            let (cat, queries) = pipeline::load_inputs(&catalog.schema, &catalog.data, Some(&workload))?;
            let methods = if methods.is_empty() {
                let mut all = vec![Method::TrueCard];
                all.extend(Method::ESTIMATORS);
                all
            } else {
                methods
            };
            let (report, timings) = pipeline::cmd_bench(cat, &queries, &methods, &cfg, truecards.as_deref())?;
            write(&out.join("report.json"), &report.to_json())?;
            write(&out.join("report.csv"), &report.to_csv()?)?;
            write(
                &out.join("timings.json"),
                &(serde_json::to_string_pretty(&timings)? + "\n"),
            )?;
            print!("{}", report.table(Some(&timings)));
            if !report.violations.is_empty() {
                return Err(InvariantViolation(report.violations).into());
            }
        }
        Cmd::Explain {
            catalog,
            query,
            method,
            scale_root,
        } => {
            let (cat, _) = pipeline::load_inputs(&catalog.schema, &catalog.data, None)?;
            let out = pipeline::cmd_explain(cat, &query, method, &cfg, scale_root)?;
            print!("{}", out.text);
        }
        Cmd::Inspect { catalog } => {
            let (cat, _) = pipeline::load_inputs(&catalog.schema, &catalog.data, None)?;
            print!("{}", pipeline::cmd_inspect(&cat));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InvariantViolation>().is_some() {
                ExitCode::from(2)
            } else if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
