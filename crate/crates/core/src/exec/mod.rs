//! Running NL2SQL system adapters over benchmark subsets.
//!
//! An adapter supplies one predicted SQL string per sample, either from a
//! prediction file or by invoking an external command (one JSON object on
//! stdin, one SQL string on stdout). Predictions and gold queries execute
//! read-only against the sample's SQLite database; per-sample verdicts are
//! appended to a JSON-lines run log as they complete.
//!
//! Correctness checks run on a bounded worker pool. Timing runs afterwards
//! on a dedicated serial lane, one query at a time, so scheduler noise
//! stays out of the efficiency numbers.

mod sqlite;

pub use sqlite::{execute_query, time_query, ExecError};

use crate::benchmark::{Benchmark, Sample};
use crate::filter::Subset;
use crate::metrics::{self, fnv64};
use crate::sql::{self, Dialect};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime};

/// Where predictions come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterKind {
    /// JSON map `sample_id -> SQL`, or plain text with one SQL per line in
    /// benchmark order.
    PredictionFile(PathBuf),
    /// Spawn `argv` per sample: one JSON object on stdin (sample_id,
    /// nl_question, db_id, schema), one SQL string on stdout. The database
    /// path is exported as `NL2SQL360_DB_PATH`.
    ExternalCommand {
        argv: Vec<String>,
        timeout_secs: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemAdapter {
    pub kind: AdapterKind,
    pub system_name: String,
    /// Backbone label used for price-table lookups.
    pub backbone: Option<String>,
    /// Optional JSON map `sample_id -> {tokens_in, tokens_out}`.
    pub token_log: Option<PathBuf>,
}

impl SystemAdapter {
    pub fn prediction_file(system_name: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        SystemAdapter {
            kind: AdapterKind::PredictionFile(path.into()),
            system_name: system_name.into(),
            backbone: None,
            token_log: None,
        }
    }

    pub fn external_command(
        system_name: impl Into<String>,
        argv: Vec<String>,
        timeout: Duration,
    ) -> Self {
        SystemAdapter {
            kind: AdapterKind::ExternalCommand {
                argv,
                timeout_secs: timeout.as_secs_f64(),
            },
            system_name: system_name.into(),
            backbone: None,
            token_log: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingAggregator {
    #[default]
    Median,
}

/// Result comparison mode: multiset equality, switching to sequence
/// equality when the gold query has a top-level ORDER BY.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSensitivity {
    #[default]
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionConfig {
    /// Per-query execution budget, seconds.
    pub timeout_secs: f64,
    pub timing_repeats: usize,
    pub timing_aggregator: TimingAggregator,
    pub parallel_workers: usize,
    pub order_sensitive_compare: OrderSensitivity,
}

impl Default for ExecutionConfig {
    fn default() -> Self {
        ExecutionConfig {
            timeout_secs: 30.0,
            timing_repeats: 5,
            timing_aggregator: TimingAggregator::Median,
            parallel_workers: 4,
            order_sensitive_compare: OrderSensitivity::Auto,
        }
    }
}

impl ExecutionConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Per-sample verdict: the persisted unit of evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub sample_id: String,
    pub predicted_sql: String,
    pub pred_parse_ok: bool,
    pub pred_exec_ok: bool,
    /// Result-set match against gold.
    pub exec_correct: bool,
    /// Canonical component match against gold.
    pub exact_match: bool,
    /// Median gold execution time, seconds.
    pub t_gold: Option<f64>,
    /// Median predicted execution time, seconds; present iff the
    /// prediction executed.
    pub t_pred: Option<f64>,
    /// Adapter time spent producing this prediction, seconds.
    pub wall_latency: f64,
    pub tokens_in: Option<u64>,
    pub tokens_out: Option<u64>,
    /// Per-sample adapter protocol failure, when one occurred.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapter_error: Option<String>,
}

/// A gold query that failed to execute: a benchmark defect. The sample is
/// excluded from outcomes and reported here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldFailure {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub system_name: String,
    pub benchmark_name: String,
    pub subset_hash: String,
    pub config: ExecutionConfig,
    pub created_at: u64,
    /// How gold-side failures are handled.
    pub gold_failure_policy: String,
}

/// An executed run: header plus one outcome per subset sample (minus
/// gold failures). Append-only on disk as JSON lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub outcomes: Vec<EvalOutcome>,
    pub gold_failures: Vec<GoldFailure>,
}

impl RunLog {
    pub fn outcome_map(&self) -> BTreeMap<String, EvalOutcome> {
        self.outcomes
            .iter()
            .map(|o| (o.sample_id.clone(), o.clone()))
            .collect()
    }

    pub fn load(path: &Path) -> Result<RunLog, RunError> {
        let file = std::fs::File::open(path).map_err(|e| RunError::Log(e.to_string()))?;
        let reader = std::io::BufReader::new(file);
        let mut header: Option<RunHeader> = None;
        let mut outcomes = Vec::new();
        let mut gold_failures = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| RunError::Log(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = LogLine::parse(&line)
                .map_err(|e| RunError::Log(format!("line {}: {e}", idx + 1)))?;
            match entry {
                LogLine::Header(h) => header = Some(h),
                LogLine::Outcome(o) => outcomes.push(o),
                LogLine::GoldFailure(g) => gold_failures.push(g),
            }
        }
        Ok(RunLog {
            header: header.ok_or_else(|| RunError::Log("missing header line".into()))?,
            outcomes,
            gold_failures,
        })
    }
}

// Each line is a bare JSON object: the header (carries run_id), one
// EvalOutcome per evaluated sample (carries predicted_sql), or a gold
// failure record.
enum LogLine {
    Header(RunHeader),
    Outcome(EvalOutcome),
    GoldFailure(GoldFailure),
}

impl LogLine {
    fn to_json(&self) -> serde_json::Result<String> {
        match self {
            LogLine::Header(h) => serde_json::to_string(h),
            LogLine::Outcome(o) => serde_json::to_string(o),
            LogLine::GoldFailure(g) => serde_json::to_string(g),
        }
    }

    fn parse(line: &str) -> Result<LogLine, String> {
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let object = value.as_object().ok_or("expected a JSON object")?;
        if object.contains_key("run_id") {
            serde_json::from_value(value.clone())
                .map(LogLine::Header)
                .map_err(|e| e.to_string())
        } else if object.contains_key("predicted_sql") {
            serde_json::from_value(value.clone())
                .map(LogLine::Outcome)
                .map_err(|e| e.to_string())
        } else {
            serde_json::from_value(value.clone())
                .map(LogLine::GoldFailure)
                .map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("database file missing for db '{0}'")]
    DatabaseMissing(String),
    #[error("subset references unknown sample '{0}'")]
    UnknownSample(String),
    #[error("prediction file problem: {0}")]
    PredictionFile(String),
    #[error("token log problem: {0}")]
    TokenLog(String),
    #[error("run log problem: {0}")]
    Log(String),
    #[error("existing log belongs to run '{existing}', not '{requested}'")]
    RunIdMismatch { existing: String, requested: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TokenCounts {
    pub tokens_in: u64,
    pub tokens_out: u64,
}

enum PredictionSource {
    Map(BTreeMap<String, String>),
    Command {
        argv: Vec<String>,
        timeout: Duration,
    },
}

fn load_predictions(
    path: &Path,
    benchmark: &Benchmark,
) -> Result<BTreeMap<String, String>, RunError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| RunError::PredictionFile(e.to_string()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        serde_json::from_str(&text).map_err(|e| RunError::PredictionFile(e.to_string()))
    } else {
        // One SQL per line, in benchmark order.
        let mut map = BTreeMap::new();
        for (line, sample) in text.lines().zip(benchmark.samples.iter()) {
            map.insert(sample.sample_id.clone(), line.trim().to_string());
        }
        Ok(map)
    }
}

fn load_token_log(path: &Path) -> Result<BTreeMap<String, TokenCounts>, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::TokenLog(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| RunError::TokenLog(e.to_string()))
}

fn subset_hash(subset: &Subset) -> String {
    let spec = subset
        .spec
        .as_ref()
        .map(|s| serde_json::to_string(s).unwrap_or_default())
        .unwrap_or_else(|| "all".to_string());
    let joined = format!("{spec}|{}", subset.sample_ids.join(","));
    format!("{:016x}", fnv64(joined.as_bytes()))
}

struct Prepared<'a> {
    index: usize,
    sample: &'a Sample,
    db_path: PathBuf,
}

enum SampleVerdict {
    Outcome {
        outcome: EvalOutcome,
        // Correctness-pass durations, fallbacks if dedicated timing fails.
        gold_duration: f64,
        pred_duration: Option<f64>,
    },
    GoldFailed(GoldFailure),
}

/// Run one adapter over a subset. Every subset sample yields either an
/// outcome or a reported gold failure; single-sample adapter or execution
/// failures never abort the run. The log at `log_path` is appended
/// incrementally; re-running with the same `run_id` skips already-logged
/// samples.
pub fn run_system(
    adapter: &SystemAdapter,
    benchmark: &Benchmark,
    subset: &Subset,
    config: &ExecutionConfig,
    run_id: &str,
    log_path: Option<&Path>,
) -> Result<RunLog, RunError> {
    let samples: Vec<&Sample> = subset
        .sample_ids
        .iter()
        .map(|id| {
            benchmark
                .sample(id)
                .ok_or_else(|| RunError::UnknownSample(id.clone()))
        })
        .collect::<Result<_, _>>()?;

    // Pre-flight: every database must exist before any work starts.
    let mut db_paths: BTreeMap<&str, PathBuf> = BTreeMap::new();
    for sample in &samples {
        if !db_paths.contains_key(sample.db_id.as_str()) {
            let path = benchmark
                .database_path(&sample.db_id)
                .ok_or_else(|| RunError::DatabaseMissing(sample.db_id.clone()))?;
            if !path.exists() {
                return Err(RunError::DatabaseMissing(sample.db_id.clone()));
            }
            db_paths.insert(sample.db_id.as_str(), path.to_path_buf());
        }
    }

    let source = match &adapter.kind {
        AdapterKind::PredictionFile(path) => {
            PredictionSource::Map(load_predictions(path, benchmark)?)
        }
        AdapterKind::ExternalCommand { argv, timeout_secs } => PredictionSource::Command {
            argv: argv.clone(),
            timeout: Duration::from_secs_f64(*timeout_secs),
        },
    };
    let tokens = match &adapter.token_log {
        Some(path) => Some(load_token_log(path)?),
        None => None,
    };

    // Resume: collect already-logged sample ids and the original header.
    let mut existing_outcomes: Vec<EvalOutcome> = Vec::new();
    let mut existing_failures: Vec<GoldFailure> = Vec::new();
    let mut created_at: Option<u64> = None;
    let mut fresh_log = true;
    if let Some(path) = log_path {
        if path.exists() {
            let prior = RunLog::load(path)?;
            if prior.header.run_id != run_id {
                return Err(RunError::RunIdMismatch {
                    existing: prior.header.run_id,
                    requested: run_id.to_string(),
                });
            }
            created_at = Some(prior.header.created_at);
            existing_outcomes = prior.outcomes;
            existing_failures = prior.gold_failures;
            fresh_log = false;
        }
    }
    let done: std::collections::BTreeSet<&str> = existing_outcomes
        .iter()
        .map(|o| o.sample_id.as_str())
        .chain(existing_failures.iter().map(|g| g.sample_id.as_str()))
        .collect();

    let pending: Vec<Prepared> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !done.contains(s.sample_id.as_str()))
        .map(|(index, sample)| Prepared {
            index,
            sample,
            db_path: db_paths[sample.db_id.as_str()].clone(),
        })
        .collect();

    // Correctness pass: bounded worker pool, one connection per worker.
    let timeout = config.timeout();
    let queue = Mutex::new(pending.into_iter());
    let (tx, rx) = mpsc::channel::<(usize, SampleVerdict)>();
    let workers = config.parallel_workers.max(1);
    let mut results: BTreeMap<usize, SampleVerdict> = BTreeMap::new();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            let source = &source;
            let tokens = &tokens;
            scope.spawn(move || loop {
                let Some(work) = queue.lock().expect("queue lock").next() else {
                    break;
                };
                let verdict = evaluate_sample(&work, source, tokens, benchmark, timeout);
                if tx.send((work.index, verdict)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        while let Ok((index, verdict)) = rx.recv() {
            results.insert(index, verdict);
        }
    });

    let header = RunHeader {
        run_id: run_id.to_string(),
        system_name: adapter.system_name.clone(),
        benchmark_name: benchmark.name.clone(),
        subset_hash: subset_hash(subset),
        config: config.clone(),
        created_at: created_at.unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
        gold_failure_policy: "failing gold queries are benchmark defects; samples excluded and \
                              reported as gold_failure lines"
            .to_string(),
    };

    let mut writer: Option<std::io::BufWriter<std::fs::File>> = match log_path {
        Some(path) => {
            let file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| RunError::Log(e.to_string()))?;
            Some(std::io::BufWriter::new(file))
        }
        None => None,
    };
    if fresh_log {
        write_line(&mut writer, &LogLine::Header(header.clone()))?;
    }

    // Timing lane: strictly serial, in subset order, flushing each line.
    let mut outcomes = existing_outcomes;
    let mut gold_failures = existing_failures;
    for (_, verdict) in results {
        match verdict {
            SampleVerdict::GoldFailed(failure) => {
                write_line(&mut writer, &LogLine::GoldFailure(failure.clone()))?;
                gold_failures.push(failure);
            }
            SampleVerdict::Outcome {
                mut outcome,
                gold_duration,
                pred_duration,
            } => {
                let sample = benchmark.sample(&outcome.sample_id).expect("sample exists");
                let db = &db_paths[sample.db_id.as_str()];
                let t_gold = time_query(db, &sample.gold_sql, config.timing_repeats, timeout)
                    .unwrap_or(gold_duration)
                    .max(1e-9);
                outcome.t_gold = Some(t_gold);
                if outcome.pred_exec_ok {
                    let t_pred =
                        time_query(db, &outcome.predicted_sql, config.timing_repeats, timeout)
                            .ok()
                            .or(pred_duration)
                            .unwrap_or(gold_duration)
                            .max(1e-9);
                    outcome.t_pred = Some(t_pred);
                }
                write_line(&mut writer, &LogLine::Outcome(outcome.clone()))?;
                outcomes.push(outcome);
            }
        }
    }

    // Keep subset order for merged (resumed + new) entries.
    let position: BTreeMap<&str, usize> = subset
        .sample_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    outcomes.sort_by_key(|o| {
        position
            .get(o.sample_id.as_str())
            .copied()
            .unwrap_or(usize::MAX)
    });
    gold_failures.sort_by_key(|g| {
        position
            .get(g.sample_id.as_str())
            .copied()
            .unwrap_or(usize::MAX)
    });

    Ok(RunLog {
        header,
        outcomes,
        gold_failures,
    })
}

fn write_line(
    writer: &mut Option<std::io::BufWriter<std::fs::File>>,
    line: &LogLine,
) -> Result<(), RunError> {
    if let Some(w) = writer {
        let text = line.to_json().map_err(|e| RunError::Log(e.to_string()))?;
        writeln!(w, "{text}").map_err(|e| RunError::Log(e.to_string()))?;
        w.flush().map_err(|e| RunError::Log(e.to_string()))?;
    }
    Ok(())
}

fn evaluate_sample(
    work: &Prepared<'_>,
    source: &PredictionSource,
    tokens: &Option<BTreeMap<String, TokenCounts>>,
    benchmark: &Benchmark,
    timeout: Duration,
) -> SampleVerdict {
    let sample = work.sample;

    let gold_start = Instant::now();
    let gold_table = match execute_query(&work.db_path, &sample.gold_sql, timeout) {
        Ok(table) => table,
        Err(err) => {
            return SampleVerdict::GoldFailed(GoldFailure {
                sample_id: sample.sample_id.clone(),
                error: err.to_string(),
            })
        }
    };
    let gold_duration = gold_start.elapsed().as_secs_f64().max(1e-9);

    let (predicted_sql, wall_latency, adapter_error) = match source {
        PredictionSource::Map(map) => match map.get(&sample.sample_id) {
            Some(sql) => (sql.clone(), 0.0, None),
            None => (
                String::new(),
                0.0,
                Some(format!(
                    "no prediction for sample '{}' in prediction file",
                    sample.sample_id
                )),
            ),
        },
        PredictionSource::Command { argv, timeout } => {
            match invoke_adapter(argv, sample, benchmark, &work.db_path, *timeout) {
                Ok((sql, secs)) => (sql, secs, None),
                Err((message, secs)) => (String::new(), secs, Some(message)),
            }
        }
    };

    let pred_parse_ok =
        !predicted_sql.is_empty() && sql::parse_sql(&predicted_sql, Dialect::Sqlite).is_ok();
    let order_sensitive = sql::parse_sql(&sample.gold_sql, Dialect::Sqlite)
        .map(|ast| ast.has_top_level_order_by())
        .unwrap_or(false);

    let mut pred_exec_ok = false;
    let mut exec_correct = false;
    let mut pred_duration = None;
    if !predicted_sql.is_empty() {
        let pred_start = Instant::now();
        if let Ok(pred_table) = execute_query(&work.db_path, &predicted_sql, timeout) {
            pred_exec_ok = true;
            pred_duration = Some(pred_start.elapsed().as_secs_f64().max(1e-9));
            exec_correct = metrics::compare_results(&gold_table, &pred_table, order_sensitive);
        }
    }

    let exact_match = metrics::exact_match(&sample.gold_sql, &predicted_sql);
    let token_counts = tokens
        .as_ref()
        .and_then(|map| map.get(&sample.sample_id).copied());

    SampleVerdict::Outcome {
        outcome: EvalOutcome {
            sample_id: sample.sample_id.clone(),
            predicted_sql,
            pred_parse_ok,
            pred_exec_ok,
            exec_correct,
            exact_match,
            t_gold: None,
            t_pred: None,
            wall_latency,
            tokens_in: token_counts.map(|t| t.tokens_in),
            tokens_out: token_counts.map(|t| t.tokens_out),
            adapter_error,
        },
        gold_duration,
        pred_duration,
    }
}

// One JSON object on stdin, one SQL string on stdout, wall-clock timeout.
fn invoke_adapter(
    argv: &[String],
    sample: &Sample,
    benchmark: &Benchmark,
    db_path: &Path,
    timeout: Duration,
) -> Result<(String, f64), (String, f64)> {
    use std::process::{Command, Stdio};

    if argv.is_empty() {
        return Err(("adapter argv is empty".into(), 0.0));
    }
    let request = serde_json::json!({
        "sample_id": sample.sample_id,
        "nl_question": sample.nl_question,
        "db_id": sample.db_id,
        "schema": benchmark.schemas.get(&sample.db_id),
    });
    let start = Instant::now();
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .env("NL2SQL360_DB_PATH", db_path)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| (format!("adapter spawn failed: {e}"), 0.0))?;

    if let Some(mut stdin) = child.stdin.take() {
        let _ = writeln!(stdin, "{request}");
    }
    let mut stdout = child.stdout.take().expect("stdout piped");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        use std::io::Read;
        let _ = stdout.read_to_string(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                let elapsed = start.elapsed().as_secs_f64();
                let output = reader.join().unwrap_or_default();
                if !status.success() {
                    return Err((format!("adapter exited with {status}"), elapsed));
                }
                return Ok((output.trim().to_string(), elapsed));
            }
            Ok(None) => {
                if Instant::now() > deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    // Not joined: a surviving grandchild may hold the pipe
                    // open; the reader thread ends when the pipe closes.
                    drop(reader);
                    return Err((
                        format!("adapter timed out after {:.1}s", timeout.as_secs_f64()),
                        start.elapsed().as_secs_f64(),
                    ));
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(e) => {
                let elapsed = start.elapsed().as_secs_f64();
                return Err((format!("adapter wait failed: {e}"), elapsed));
            }
        }
    }
}
