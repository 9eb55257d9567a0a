//! End-to-end pipeline tests on the fixture benchmark: load, run an
//! adapter, persist logs, aggregate reports.

use nl2sql360_core::benchmark::{load_benchmark, Benchmark, BenchmarkFormat};
use nl2sql360_core::exec::{run_system, ExecutionConfig, RunLog, SystemAdapter};
use nl2sql360_core::filter::{builtin_scenarios, Subset};
use nl2sql360_core::fixtures;
use nl2sql360_core::metrics::{QvtIndicator, VesAggregator};
use nl2sql360_core::report::{aggregate, render, MetricConfig, RenderFormat, ReportError};
use std::collections::BTreeMap;
use std::path::Path;

fn quick_config() -> ExecutionConfig {
    ExecutionConfig {
        timeout_secs: 10.0,
        timing_repeats: 2,
        parallel_workers: 4,
        ..ExecutionConfig::default()
    }
}

fn fixture() -> (tempfile::TempDir, Benchmark) {
    let dir = tempfile::tempdir().unwrap();
    fixtures::write_mini_benchmark(dir.path()).unwrap();
    let b = load_benchmark(dir.path(), BenchmarkFormat::SpiderJson).unwrap();
    (dir, b)
}

fn identity_adapter(dir: &Path, benchmark: &Benchmark) -> SystemAdapter {
    let pred_path = dir.join("identity_predictions.json");
    fixtures::write_identity_predictions(&pred_path, benchmark).unwrap();
    SystemAdapter::prediction_file("identity", pred_path)
}

#[test]
fn identity_predictions_are_all_correct() {
    let (dir, benchmark) = fixture();
    let adapter = identity_adapter(dir.path(), &benchmark);
    let subset = Subset::all(&benchmark);
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-1",
        None,
    )
    .unwrap();
    assert_eq!(log.outcomes.len(), 20);
    assert!(log.gold_failures.is_empty());
    for outcome in &log.outcomes {
        assert!(outcome.pred_parse_ok, "{}", outcome.sample_id);
        assert!(outcome.pred_exec_ok, "{}", outcome.sample_id);
        assert!(outcome.exec_correct, "{}", outcome.sample_id);
        assert!(outcome.exact_match, "{}", outcome.sample_id);
        assert!(outcome.t_gold.unwrap() > 0.0);
        assert!(outcome.t_pred.unwrap() > 0.0);
    }
}

#[test]
fn single_bad_prediction_is_isolated() {
    let (dir, benchmark) = fixture();
    // Gold predictions, except sample s00000 gets unparseable SQL.
    let mut map: BTreeMap<String, String> = benchmark
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_sql.clone()))
        .collect();
    map.insert("s00000".into(), "SELECT".into());
    let pred_path = dir.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_string(&map).unwrap()).unwrap();
    let adapter = SystemAdapter::prediction_file("one-bad", pred_path);

    let subset = Subset::all(&benchmark);
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-2",
        None,
    )
    .unwrap();
    assert_eq!(log.outcomes.len(), 20);
    let bad = &log.outcomes[0];
    assert_eq!(bad.sample_id, "s00000");
    assert!(!bad.pred_parse_ok);
    assert!(!bad.exec_correct);
    assert!(bad.t_pred.is_none());
    assert_eq!(log.outcomes.iter().filter(|o| o.exec_correct).count(), 19);
}

#[test]
fn empty_result_is_wrong_but_executes() {
    let (dir, benchmark) = fixture();
    let mut map: BTreeMap<String, String> = benchmark
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_sql.clone()))
        .collect();
    // Gold for s00000 is `SELECT name FROM products` over a non-empty table.
    map.insert("s00000".into(), "SELECT 1 FROM products WHERE 0=1".into());
    let pred_path = dir.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_string(&map).unwrap()).unwrap();
    let adapter = SystemAdapter::prediction_file("empty-result", pred_path);

    let subset = Subset::all(&benchmark);
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-3",
        None,
    )
    .unwrap();
    let outcome = &log.outcomes[0];
    assert!(outcome.pred_exec_ok);
    assert!(!outcome.exec_correct);
}

#[test]
fn order_sensitivity_follows_gold_order_by() {
    let (dir, benchmark) = fixture();
    let mut map: BTreeMap<String, String> = benchmark
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_sql.clone()))
        .collect();
    // s00000 gold has no ORDER BY: any row order matches.
    map.insert(
        "s00000".into(),
        "SELECT name FROM products ORDER BY name DESC".into(),
    );
    // s00012 gold is `... ORDER BY gpa DESC LIMIT 3`: same rows in reverse
    // order must not match.
    map.insert(
        "s00012".into(),
        "SELECT name FROM (SELECT name, gpa FROM students ORDER BY gpa DESC LIMIT 3) \
         ORDER BY gpa ASC"
            .into(),
    );
    let pred_path = dir.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_string(&map).unwrap()).unwrap();
    let adapter = SystemAdapter::prediction_file("ordering", pred_path);

    let subset = Subset::all(&benchmark);
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-4",
        None,
    )
    .unwrap();
    let by_id = log.outcome_map();
    assert!(
        by_id["s00000"].exec_correct,
        "multiset mode tolerates reorder"
    );
    assert!(by_id["s00012"].pred_exec_ok);
    assert!(
        !by_id["s00012"].exec_correct,
        "ordered gold must compare order-sensitively"
    );
}

#[test]
fn databases_stay_untouched() {
    let (dir, benchmark) = fixture();
    let hash_all = || -> Vec<u64> {
        ["shop", "school", "flights"]
            .iter()
            .map(|db| {
                let path = dir
                    .path()
                    .join("database")
                    .join(db)
                    .join(format!("{db}.sqlite"));
                let bytes = std::fs::read(path).unwrap();
                bytes.iter().fold(0xcbf29ce484222325u64, |h, b| {
                    (h ^ u64::from(*b)).wrapping_mul(0x100000001b3)
                })
            })
            .collect()
    };
    let before = hash_all();
    let mut map: BTreeMap<String, String> = benchmark
        .samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_sql.clone()))
        .collect();
    // A write attempt must be rejected without touching the file.
    map.insert("s00000".into(), "DROP TABLE products".into());
    let pred_path = dir.path().join("preds.json");
    std::fs::write(&pred_path, serde_json::to_string(&map).unwrap()).unwrap();
    let adapter = SystemAdapter::prediction_file("writer", pred_path);
    let subset = Subset::all(&benchmark);
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-5",
        None,
    )
    .unwrap();
    assert!(!log.outcomes[0].pred_exec_ok);
    assert_eq!(hash_all(), before);
}

#[test]
fn run_log_round_trips_and_resumes() {
    let (dir, benchmark) = fixture();
    let adapter = identity_adapter(dir.path(), &benchmark);
    let subset = Subset::all(&benchmark);
    let log_path = dir.path().join("run.jsonl");
    let full = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-6",
        Some(&log_path),
    )
    .unwrap();

    let loaded = RunLog::load(&log_path).unwrap();
    assert_eq!(loaded.header.run_id, "run-6");
    assert_eq!(loaded.outcomes.len(), full.outcomes.len());

    // On disk: a header line followed by one EvalOutcome object per line.
    let text = std::fs::read_to_string(&log_path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["run_id"], "run-6");
    let second: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(second["sample_id"], "s00000");
    assert_eq!(text.lines().count(), 21);

    // Truncate to header + first 5 outcomes, then resume.
    let text = std::fs::read_to_string(&log_path).unwrap();
    let prefix: Vec<&str> = text.lines().take(6).collect();
    let preserved = prefix.join("\n") + "\n";
    std::fs::write(&log_path, &preserved).unwrap();

    let resumed = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-6",
        Some(&log_path),
    )
    .unwrap();
    assert_eq!(resumed.outcomes.len(), 20);
    assert_eq!(resumed.header.created_at, full.header.created_at);
    let final_text = std::fs::read_to_string(&log_path).unwrap();
    assert!(
        final_text.starts_with(&preserved),
        "prefix must be untouched"
    );
    let ids: Vec<&str> = resumed
        .outcomes
        .iter()
        .map(|o| o.sample_id.as_str())
        .collect();
    let expected: Vec<&str> = subset.sample_ids.iter().map(String::as_str).collect();
    assert_eq!(ids, expected);

    // A different run id refuses to touch the log.
    let err = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "other-run",
        Some(&log_path),
    )
    .unwrap_err();
    assert!(err.to_string().contains("run-6"));
}

#[test]
fn external_command_adapter_speaks_the_protocol() {
    let (_dir, benchmark) = fixture();
    // An adapter that answers every question with the same query; correct
    // only for samples whose gold is canonically that query.
    let adapter = SystemAdapter::external_command(
        "constant",
        vec![
            "sh".to_string(),
            "-c".to_string(),
            "cat > /dev/null; echo 'SELECT name FROM products'".to_string(),
        ],
        std::time::Duration::from_secs(10),
    );
    let subset = Subset {
        benchmark_name: benchmark.name.clone(),
        spec: None,
        sample_ids: vec!["s00000".into(), "s00007".into()],
    };
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-7",
        None,
    )
    .unwrap();
    let by_id = log.outcome_map();
    assert!(by_id["s00000"].exec_correct);
    assert!(by_id["s00000"].wall_latency > 0.0);
    assert!(!by_id["s00007"].exec_correct, "wrong database/table");
}

#[test]
fn adapter_timeout_is_recorded_not_fatal() {
    let (dir, benchmark) = fixture();
    let adapter = SystemAdapter::external_command(
        "sleeper",
        vec!["sh".to_string(), "-c".to_string(), "sleep 30".to_string()],
        std::time::Duration::from_millis(200),
    );
    let subset = Subset {
        benchmark_name: benchmark.name.clone(),
        spec: None,
        sample_ids: vec!["s00000".into()],
    };
    let log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-8",
        None,
    )
    .unwrap();
    let outcome = &log.outcomes[0];
    assert!(!outcome.pred_exec_ok);
    assert!(outcome
        .adapter_error
        .as_deref()
        .unwrap_or_default()
        .contains("timed out"));
    drop(dir);
}

#[test]
fn report_covers_systems_by_scenarios() {
    let (dir, benchmark) = fixture();
    let identity = identity_adapter(dir.path(), &benchmark);

    // Second system: always answers with sample 0's gold query.
    let mut map = BTreeMap::new();
    for s in &benchmark.samples {
        map.insert(s.sample_id.clone(), "SELECT name FROM products".to_string());
    }
    let const_path = dir.path().join("const.json");
    std::fs::write(&const_path, serde_json::to_string(&map).unwrap()).unwrap();
    let constant = SystemAdapter::prediction_file("constant", const_path);

    let subset = Subset::all(&benchmark);
    let config = quick_config();
    let log_a = run_system(&identity, &benchmark, &subset, &config, "run-a", None).unwrap();
    let log_b = run_system(&constant, &benchmark, &subset, &config, "run-b", None).unwrap();

    let scenarios: Vec<(String, _)> = builtin_scenarios()
        .into_iter()
        .map(|(n, s)| (n.to_string(), s))
        .collect();
    let metric_config = MetricConfig::new(VesAggregator::SqrtRatio, QvtIndicator::ExecCorrect);
    let report = aggregate(&[log_a, log_b], &benchmark, &scenarios, None, metric_config).unwrap();

    // 2 systems x (12 builtin slices + "All").
    assert_eq!(report.rows.len(), 2 * 13);
    let all_row = report
        .rows
        .iter()
        .find(|r| r.system == "identity" && r.slice == "All")
        .unwrap();
    assert_eq!(all_row.n, 20);
    assert_eq!(all_row.metrics.ex, Some(1.0));
    assert_eq!(all_row.metrics.em, Some(1.0));
    assert_eq!(all_row.metrics.qvt, Some(1.0));

    // The "All" EX equals the sample-weighted mean over disjoint hardness
    // slices.
    let slice_sum: f64 = ["easy", "medium", "hard", "extra"]
        .iter()
        .map(|name| {
            let row = report
                .rows
                .iter()
                .find(|r| r.system == "constant" && r.slice == *name)
                .unwrap();
            row.metrics.ex.unwrap_or(0.0) * row.n as f64
        })
        .sum();
    let all_constant = report
        .rows
        .iter()
        .find(|r| r.system == "constant" && r.slice == "All")
        .unwrap();
    let weighted = slice_sum / all_constant.n as f64;
    assert!((all_constant.metrics.ex.unwrap() - weighted).abs() < 1e-12);

    // Rendering is deterministic byte-for-byte.
    for format in [
        RenderFormat::MarkdownTable,
        RenderFormat::Csv,
        RenderFormat::Json,
    ] {
        assert_eq!(render(&report, format), render(&report, format));
    }
}

#[test]
fn line_format_predictions_map_by_benchmark_order() {
    let (dir, benchmark) = fixture();
    // One SQL per line, aligned with benchmark order; first line diverges.
    let mut lines: Vec<String> = benchmark.samples.iter().map(|s| s.gold_sql.clone()).collect();
    lines[0] = "SELECT price FROM products".to_string();
    let pred_path = dir.path().join("preds.txt");
    std::fs::write(&pred_path, lines.join("\n")).unwrap();
    let adapter = SystemAdapter::prediction_file("lines", pred_path);

    let subset = Subset::all(&benchmark);
    let log = run_system(&adapter, &benchmark, &subset, &quick_config(), "run-l", None).unwrap();
    assert_eq!(log.outcomes.iter().filter(|o| o.exec_correct).count(), 19);
    assert!(!log.outcome_map()["s00000"].exec_correct);
}

#[test]
fn token_log_feeds_cost_columns() {
    let (dir, benchmark) = fixture();
    let pred_path = dir.path().join("identity.json");
    fixtures::write_identity_predictions(&pred_path, &benchmark).unwrap();
    let tokens: BTreeMap<String, serde_json::Value> = benchmark
        .samples
        .iter()
        .map(|s| {
            (
                s.sample_id.clone(),
                serde_json::json!({"tokens_in": 800, "tokens_out": 40}),
            )
        })
        .collect();
    let token_path = dir.path().join("tokens.json");
    std::fs::write(&token_path, serde_json::to_string(&tokens).unwrap()).unwrap();

    let mut adapter = SystemAdapter::prediction_file("identity", pred_path);
    adapter.token_log = Some(token_path);
    let subset = Subset::all(&benchmark);
    let log = run_system(&adapter, &benchmark, &subset, &quick_config(), "run-t", None).unwrap();
    assert!(log.outcomes.iter().all(|o| o.tokens_in == Some(800)));

    let prices = nl2sql360_core::metrics::PriceTable(
        [(
            "identity".to_string(),
            nl2sql360_core::metrics::ModelPrice {
                input_per_token: 1e-6,
                output_per_token: 2e-6,
            },
        )]
        .into_iter()
        .collect(),
    );
    let metric_config = MetricConfig::new(VesAggregator::SqrtRatio, QvtIndicator::ExecCorrect);
    let report = aggregate(&[log], &benchmark, &[], Some(&prices), metric_config).unwrap();
    let all = &report.rows[0];
    assert_eq!(all.metrics.avg_tokens, Some(840.0));
    let avg_cost = all.metrics.avg_cost.unwrap();
    assert!((avg_cost - 0.00088).abs() < 1e-12);
    // EX = 1.0 -> ratio = 100 / avg_cost.
    let ratio = all.metrics.ex_per_cost.unwrap();
    assert!((ratio - 100.0 / avg_cost).abs() < 1e-6);
}

#[test]
fn differing_exec_configs_are_rejected() {
    let (dir, benchmark) = fixture();
    let adapter = identity_adapter(dir.path(), &benchmark);
    let subset = Subset::all(&benchmark);
    let log_a = run_system(&adapter, &benchmark, &subset, &quick_config(), "run-c1", None)
        .unwrap();
    let slower = ExecutionConfig {
        timeout_secs: 60.0,
        ..quick_config()
    };
    let log_b = run_system(&adapter, &benchmark, &subset, &slower, "run-c2", None).unwrap();
    let metric_config = MetricConfig::new(VesAggregator::SqrtRatio, QvtIndicator::ExecCorrect);
    match aggregate(&[log_a, log_b], &benchmark, &[], None, metric_config) {
        Err(ReportError::ConfigMismatch { run_id }) => assert_eq!(run_id, "run-c2"),
        other => panic!("expected ConfigMismatch, got {other:?}"),
    }
}

#[test]
fn mixed_benchmark_logs_are_rejected() {
    let (dir, benchmark) = fixture();
    let adapter = identity_adapter(dir.path(), &benchmark);
    let subset = Subset::all(&benchmark);
    let mut log = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-m",
        None,
    )
    .unwrap();
    log.header.benchmark_name = "some-other-benchmark".into();
    let metric_config = MetricConfig::new(VesAggregator::SqrtRatio, QvtIndicator::ExecCorrect);
    match aggregate(&[log], &benchmark, &[], None, metric_config) {
        Err(ReportError::MixedBenchmark { .. }) => {}
        other => panic!("expected MixedBenchmark, got {other:?}"),
    }
}

#[test]
fn missing_database_fails_preflight() {
    let (dir, mut benchmark) = fixture();
    benchmark.database_files.remove("shop");
    let adapter = identity_adapter(dir.path(), &benchmark);
    let subset = Subset::all(&benchmark);
    let err = run_system(
        &adapter,
        &benchmark,
        &subset,
        &quick_config(),
        "run-x",
        None,
    )
    .unwrap_err();
    assert!(err.to_string().contains("shop"));
}
