//! `nl2sql360` command line: load benchmarks, compute schema stats, slice
//! scenarios, run adapters, aggregate reports, score variance, and search
//! the design space.
//!
//! Exit codes: 0 on success, 1 on domain errors, 2 on usage errors.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nl2sql360_core::benchmark::{
    group_variants, load_benchmark_with, schema_stats, Benchmark, BenchmarkFormat, LoadOptions,
};
use nl2sql360_core::exec::{run_system, ExecutionConfig, RunLog, SystemAdapter};
use nl2sql360_core::filter::{builtin_scenario, builtin_scenarios, filter, ScenarioSpec, Subset};
use nl2sql360_core::metrics::{PriceTable, QvtIndicator, VesAggregator};
use nl2sql360_core::report::{aggregate, render, render_heatmap, MetricConfig, RenderFormat};
use nl2sql360_core::search::{
    default_space, enumerate_space, evolve, FitnessFn, GaParams, SearchSpace, TableFitness,
    TargetMetric, TestbedFitness,
};
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Parser)]
#[command(
    name = "nl2sql360",
    version,
    about = "Multi-angle NL2SQL evaluation testbed"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct BenchmarkArgs {
    /// Benchmark root directory (question file, tables.json, database/).
    #[arg(long)]
    benchmark: PathBuf,
    /// Question-file layout: spider_json or bird_json.
    #[arg(long, default_value = "spider_json")]
    format: BenchmarkFormat,
    /// Question file relative to the root (default dev.json).
    #[arg(long)]
    questions: Option<PathBuf>,
    /// Domain-label CSV (db_id, domain).
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Maximum tolerated fraction of unparseable gold SQL.
    #[arg(long, default_value_t = 0.01)]
    reject_threshold: f64,
}

impl BenchmarkArgs {
    fn load(&self) -> Result<Benchmark> {
        let opts = LoadOptions {
            questions_file: self.questions.clone(),
            reject_threshold: self.reject_threshold,
            domain_map_file: self.domains.clone(),
        };
        load_benchmark_with(&self.benchmark, self.format, opts)
            .with_context(|| format!("loading benchmark at {}", self.benchmark.display()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a benchmark; optionally write it as JSON.
    Load {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
        /// Write the serialized benchmark here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print schema statistics (tables/DB, columns/DB, ...).
    Stat {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
    },
    /// Evaluate a scenario spec and print the subset.
    Filter {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
        /// Builtin scenario name or path to a spec JSON file.
        #[arg(long)]
        subset: String,
        /// Write the subset (sample ids) as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a system adapter over a subset and write a run log.
    Run {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
        /// `pred:<file>` or `cmd:<argv...>` (whitespace-separated).
        #[arg(long)]
        adapter: String,
        /// Builtin scenario name or spec file; omitted = whole benchmark.
        #[arg(long)]
        subset: Option<String>,
        /// System name for logs and reports (default: derived from adapter).
        #[arg(long)]
        system: Option<String>,
        /// Per-query execution budget, seconds.
        #[arg(long, default_value_t = 30.0)]
        timeout: f64,
        /// Timing repetitions per query (median is recorded).
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Correctness-check worker threads.
        #[arg(long, default_value_t = 4)]
        workers: usize,
        /// Token log: JSON map sample_id -> {tokens_in, tokens_out}.
        #[arg(long)]
        token_log: Option<PathBuf>,
        /// Resume/append log path (default: under $NL2SQL360_HOME/runs).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run identifier; re-running with the same id resumes.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Aggregate run logs into a per-slice report.
    Report {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
        /// Run-log files to aggregate.
        #[arg(long, num_args = 1.., required = true)]
        logs: Vec<PathBuf>,
        /// `builtin`, `none`, or a JSON file of name -> spec.
        #[arg(long, default_value = "builtin")]
        scenarios: String,
        /// Price table JSON (model label -> per-token prices).
        #[arg(long)]
        price_table: Option<PathBuf>,
        /// VES aggregator: `sqrt` or `plain`.
        #[arg(long, default_value = "sqrt")]
        ves: String,
        /// Output format: `md`, `csv`, or `json`.
        #[arg(long = "render", default_value = "md")]
        render_format: RenderFormat,
        /// Instead of the table, write a systems x slices matrix of this
        /// metric (`ex`, `em`, `ves`, `qvt`) as CSV.
        #[arg(long)]
        heatmap: Option<String>,
        /// Write output here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute query-variance testing for one run log.
    Qvt {
        #[command(flatten)]
        benchmark: BenchmarkArgs,
        #[arg(long)]
        log: PathBuf,
        /// Indicator: `exec` (result equality) or `em` (exact match).
        #[arg(long, default_value = "exec")]
        indicator: String,
    },
    /// Genetic architecture search over the design space.
    Aas {
        /// Space definition JSON; omitted = built-in default space.
        #[arg(long)]
        space: Option<PathBuf>,
        /// `table:<csv>` (genome key, score) or `preds:<dir>` of per-genome
        /// prediction files (requires --benchmark).
        #[arg(long)]
        fitness: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        population: usize,
        #[arg(long, default_value_t = 20)]
        generations: usize,
        #[arg(long, default_value_t = 0.5)]
        swap: f64,
        #[arg(long, default_value_t = 0.2)]
        mutation: f64,
        #[arg(long, default_value_t = 1)]
        elitism: usize,
        /// Target metric for `preds:` fitness: `ex`, `em`, or `ves`.
        #[arg(long, default_value = "ex")]
        metric: TargetMetric,
        /// Benchmark root for `preds:` fitness.
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value = "spider_json")]
        format: BenchmarkFormat,
        /// Subset for `preds:` fitness (builtin name or spec file).
        #[arg(long)]
        subset: Option<String>,
        /// Write the full search trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Enumerate valid genomes instead of searching.
        #[arg(long, default_value_t = false)]
        enumerate: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn home_dir() -> PathBuf {
    std::env::var_os("NL2SQL360_HOME")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("nl2sql360_home"))
}

fn resolve_subset(benchmark: &Benchmark, selector: Option<&str>) -> Result<(String, Subset)> {
    let profiles = benchmark.profiles();
    match selector {
        None => Ok(("all".to_string(), Subset::all(benchmark))),
        Some(name_or_path) => {
            let (name, spec) = if let Some(spec) = builtin_scenario(name_or_path) {
                (name_or_path.to_string(), spec)
            } else {
                let path = Path::new(name_or_path);
                if !path.exists() {
                    bail!(
                        "'{name_or_path}' is neither a builtin scenario ({}) nor a spec file",
                        builtin_scenarios()
                            .iter()
                            .map(|(n, _)| *n)
                            .collect::<Vec<_>>()
                            .join(", ")
                    );
                }
                let text = std::fs::read_to_string(path)?;
                let spec = ScenarioSpec::from_json(&text)
                    .map_err(|e| anyhow!("parsing scenario spec {name_or_path}: {e}"))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".to_string());
                (name, spec)
            };
            let subset = filter(benchmark, &spec, &profiles)?;
            Ok((name, subset))
        }
    }
}

fn parse_adapter(
    spec: &str,
    system: Option<String>,
    timeout: f64,
    token_log: Option<PathBuf>,
) -> Result<SystemAdapter> {
    let mut adapter = if let Some(path) = spec.strip_prefix("pred:") {
        let name = system.unwrap_or_else(|| {
            Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "predictions".to_string())
        });
        SystemAdapter::prediction_file(name, path)
    } else if let Some(command) = spec.strip_prefix("cmd:") {
        let argv: Vec<String> = command.split_whitespace().map(String::from).collect();
        if argv.is_empty() {
            bail!("cmd: adapter needs a command line");
        }
        let name = system.unwrap_or_else(|| {
            Path::new(&argv[0])
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "command".to_string())
        });
        SystemAdapter::external_command(name, argv, Duration::from_secs_f64(timeout))
    } else {
        bail!("adapter must be 'pred:<file>' or 'cmd:<argv...>', got '{spec}'");
    };
    adapter.token_log = token_log;
    Ok(adapter)
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).ok();
            }
            std::fs::write(path, bytes)?;
            println!("wrote {}", path.display());
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Load { benchmark, out } => {
            let b = benchmark.load()?;
            println!(
                "benchmark '{}': {} samples, {} schemas, {} databases, {} rejects",
                b.name,
                b.samples.len(),
                b.schemas.len(),
                b.database_files.len(),
                b.rejects.len()
            );
            for reject in &b.rejects {
                println!("  reject {}: {}", reject.sample_id, reject.error);
            }
            if let Some(path) = out {
                write_or_print(Some(&path), &serde_json::to_vec_pretty(&b)?)?;
            }
            Ok(())
        }
        Command::Stat { benchmark } => {
            let b = benchmark.load()?;
            let stats = schema_stats(&b);
            println!("{:<18} {:>6} {:>6} {:>6}", "metric", "min", "max", "avg");
            for (name, t) in [
                ("tables/DB", stats.tables_per_db),
                ("columns/DB", stats.columns_per_db),
                ("columns/table", stats.columns_per_table),
                ("PKs/DB", stats.pks_per_db),
                ("FKs/DB", stats.fks_per_db),
            ] {
                println!("{:<18} {:>6} {:>6} {:>6.1}", name, t.min, t.max, t.mean);
            }
            Ok(())
        }
        Command::Filter {
            benchmark,
            subset,
            out,
        } => {
            let b = benchmark.load()?;
            let (name, subset) = resolve_subset(&b, Some(&subset))?;
            println!(
                "subset '{}': {} of {} samples",
                name,
                subset.size(),
                b.samples.len()
            );
            if let Some(path) = out {
                write_or_print(Some(&path), &serde_json::to_vec_pretty(&subset)?)?;
            } else {
                for id in &subset.sample_ids {
                    println!("{id}");
                }
            }
            Ok(())
        }
        Command::Run {
            benchmark,
            adapter,
            subset,
            system,
            timeout,
            repeats,
            workers,
            token_log,
            out,
            run_id,
        } => {
            let b = benchmark.load()?;
            let adapter = parse_adapter(&adapter, system, timeout, token_log)?;
            let (subset_name, subset) = resolve_subset(&b, subset.as_deref())?;
            let config = ExecutionConfig {
                timeout_secs: timeout,
                timing_repeats: repeats,
                parallel_workers: workers,
                ..ExecutionConfig::default()
            };
            let run_id =
                run_id.unwrap_or_else(|| format!("{}-{}", adapter.system_name, subset_name));
            let log_path =
                out.unwrap_or_else(|| home_dir().join("runs").join(format!("{run_id}.jsonl")));
            if let Some(parent) = log_path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let log = run_system(&adapter, &b, &subset, &config, &run_id, Some(&log_path))?;
            let correct = log.outcomes.iter().filter(|o| o.exec_correct).count();
            println!(
                "run '{}': {}/{} exec-correct over subset '{}' ({} gold failures)",
                run_id,
                correct,
                log.outcomes.len(),
                subset_name,
                log.gold_failures.len()
            );
            println!("log: {}", log_path.display());
            Ok(())
        }
        Command::Report {
            benchmark,
            logs,
            scenarios,
            price_table,
            ves,
            render_format,
            heatmap,
            out,
        } => {
            let b = benchmark.load()?;
            let run_logs: Vec<RunLog> = logs
                .iter()
                .map(|p| RunLog::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<_>>()?;
            let scenario_list: Vec<(String, ScenarioSpec)> = match scenarios.as_str() {
                "builtin" => builtin_scenarios()
                    .into_iter()
                    .map(|(n, s)| (n.to_string(), s))
                    .collect(),
                "none" => Vec::new(),
                path => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading scenarios file {path}"))?;
                    let map: std::collections::BTreeMap<String, ScenarioSpec> =
                        serde_json::from_str(&text)?;
                    map.into_iter().collect()
                }
            };
            let prices = match &price_table {
                Some(path) => Some(PriceTable::from_json_file(path)?),
                None => None,
            };
            let ves_aggregator = match ves.as_str() {
                "sqrt" => VesAggregator::SqrtRatio,
                "plain" => VesAggregator::PlainRatio,
                other => bail!("unknown VES aggregator '{other}' (use sqrt or plain)"),
            };
            let config = MetricConfig::new(ves_aggregator, QvtIndicator::ExecCorrect);
            let report = aggregate(&run_logs, &b, &scenario_list, prices.as_ref(), config)?;
            let bytes = match heatmap {
                Some(metric) => render_heatmap(&report, &metric),
                None => render(&report, render_format),
            };
            write_or_print(out.as_deref(), &bytes)
        }
        Command::Qvt {
            benchmark,
            log,
            indicator,
        } => {
            let b = benchmark.load()?;
            let run_log = RunLog::load(&log)?;
            let groups = group_variants(&b);
            let eligible = groups.iter().filter(|g| g.qvt_eligible()).count();
            let indicator = match indicator.as_str() {
                "exec" => QvtIndicator::ExecCorrect,
                "em" => QvtIndicator::ExactMatch,
                other => bail!("unknown QVT indicator '{other}' (use exec or em)"),
            };
            println!("{} variant groups, {} with m >= 2", groups.len(), eligible);
            match nl2sql360_core::metrics::compute_qvt(&groups, &run_log.outcome_map(), indicator) {
                Ok(qvt) => println!("QVT = {qvt:.4}"),
                Err(err) => println!("QVT absent: {err}"),
            }
            Ok(())
        }
        Command::Aas {
            space,
            fitness,
            seed,
            population,
            generations,
            swap,
            mutation,
            elitism,
            metric,
            benchmark,
            format,
            subset,
            trace,
            enumerate,
        } => {
            let space = match space {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading space file {}", path.display()))?;
                    SearchSpace::from_json(&text).map_err(|e| anyhow!(e))?
                }
                None => default_space(),
            };
            if enumerate {
                for genome in enumerate_space(&space) {
                    println!("{}", genome.key(&space));
                }
                return Ok(());
            }
            let mut fitness_fn: Box<dyn FitnessFn> =
                if let Some(path) = fitness.strip_prefix("table:") {
                    Box::new(TableFitness::from_csv_file(Path::new(path)).map_err(|e| anyhow!(e))?)
                } else if let Some(dir) = fitness.strip_prefix("preds:") {
                    let root =
                        benchmark.ok_or_else(|| anyhow!("preds: fitness requires --benchmark"))?;
                    let b = load_benchmark_with(&root, format, LoadOptions::default())?;
                    let (_, subset) = resolve_subset(&b, subset.as_deref())?;
                    Box::new(TestbedFitness {
                        benchmark: b,
                        subset,
                        predictions_dir: PathBuf::from(dir),
                        metric,
                        config: ExecutionConfig::default(),
                        ves_aggregator: VesAggregator::SqrtRatio,
                    })
                } else {
                    bail!("fitness must be 'table:<csv>' or 'preds:<dir>', got '{fitness}'");
                };
            let params = GaParams {
                population_size: population,
                generations,
                swap_probability: swap,
                mutation_probability: mutation,
                elitism_count: elitism,
                rng_seed: seed,
            };
            let result = evolve(&space, &params, fitness_fn.as_mut())?;
            println!("best genome: {}", result.best_genome);
            println!("best fitness: {}", result.best_fitness);
            println!(
                "evaluated {} distinct genomes over {} generations",
                result.evaluations, params.generations
            );
            if let Some(path) = trace {
                write_or_print(Some(&path), &serde_json::to_vec_pretty(&result)?)?;
            }
            Ok(())
        }
    }
}
