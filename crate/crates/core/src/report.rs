//! Aggregating run logs into leaderboard-style reports.
//!
//! A report is a grid keyed by (system, scenario slice) whose cells hold
//! the metric values for that log restricted to that slice. Every row
//! carries the run id it was derived from, and the full metric
//! configuration is embedded so tables from different runs are never
//! silently incomparable.

use crate::benchmark::{group_variants, Benchmark, QvtGroup};
use crate::exec::{EvalOutcome, RunLog};
use crate::filter::{self, FilterError, ScenarioSpec, Subset};
use crate::metrics::{
    compute_cost, compute_em, compute_ex, compute_qvt, compute_ves, MetricsError, PriceTable,
    QvtIndicator, VesAggregator,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Metric semantics used for every cell of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricConfig {
    pub ves_aggregator: VesAggregator,
    pub qvt_indicator: QvtIndicator,
    /// Exact match ignores literal values and aliases (Spider convention);
    /// echoed so readers know what EM meant.
    pub em_ignores_values: bool,
}

impl MetricConfig {
    pub fn new(ves_aggregator: VesAggregator, qvt_indicator: QvtIndicator) -> Self {
        MetricConfig {
            ves_aggregator,
            qvt_indicator,
            em_ignores_values: true,
        }
    }
}

/// Metric values for one (system, slice) cell; `None` means not
/// computable for this slice (empty slice, missing timings or prices).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub ex: Option<f64>,
    pub em: Option<f64>,
    pub ves: Option<f64>,
    pub qvt: Option<f64>,
    pub avg_latency: Option<f64>,
    pub avg_tokens: Option<f64>,
    pub avg_cost: Option<f64>,
    pub ex_per_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub system: String,
    pub slice: String,
    pub run_id: String,
    /// Samples in this slice with logged outcomes.
    pub n: usize,
    pub metrics: SliceMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub benchmark_name: String,
    pub config: MetricConfig,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("log '{run_id}' references benchmark '{found}', expected '{expected}'")]
    MixedBenchmark {
        run_id: String,
        found: String,
        expected: String,
    },
    #[error("log '{run_id}' was produced under a different execution config")]
    ConfigMismatch { run_id: String },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Aggregate one or more run logs over the named scenario slices (an "All"
/// slice is always included first). Slices with zero logged samples are
/// present with absent metrics.
pub fn aggregate(
    run_logs: &[RunLog],
    benchmark: &Benchmark,
    scenarios: &[(String, ScenarioSpec)],
    price_table: Option<&PriceTable>,
    config: MetricConfig,
) -> Result<Report, ReportError> {
    for log in run_logs {
        if log.header.benchmark_name != benchmark.name {
            return Err(ReportError::MixedBenchmark {
                run_id: log.header.run_id.clone(),
                found: log.header.benchmark_name.clone(),
                expected: benchmark.name.clone(),
            });
        }
    }
    if let Some(first) = run_logs.first() {
        let reference = serde_json::to_string(&first.header.config).unwrap_or_default();
        for log in &run_logs[1..] {
            let this = serde_json::to_string(&log.header.config).unwrap_or_default();
            if this != reference {
                return Err(ReportError::ConfigMismatch {
                    run_id: log.header.run_id.clone(),
                });
            }
        }
    }

    let profiles = benchmark.profiles();
    let groups = group_variants(benchmark);

    let mut slices: Vec<(String, Subset)> = vec![("All".to_string(), Subset::all(benchmark))];
    for (name, spec) in scenarios {
        slices.push((name.clone(), filter::filter(benchmark, spec, &profiles)?));
    }

    let mut rows = Vec::new();
    for log in run_logs {
        let by_id: BTreeMap<&str, &EvalOutcome> = log
            .outcomes
            .iter()
            .map(|o| (o.sample_id.as_str(), o))
            .collect();
        for (slice_name, subset) in &slices {
            let outcomes: Vec<EvalOutcome> = subset
                .sample_ids
                .iter()
                .filter_map(|id| by_id.get(id.as_str()).map(|o| (*o).clone()))
                .collect();
            let metrics = slice_metrics(&outcomes, subset, &groups, log, price_table, config);
            rows.push(ReportRow {
                system: log.header.system_name.clone(),
                slice: slice_name.clone(),
                run_id: log.header.run_id.clone(),
                n: outcomes.len(),
                metrics,
            });
        }
    }

    Ok(Report {
        benchmark_name: benchmark.name.clone(),
        config,
        rows,
    })
}

fn slice_metrics(
    outcomes: &[EvalOutcome],
    subset: &Subset,
    groups: &[QvtGroup],
    log: &RunLog,
    price_table: Option<&PriceTable>,
    config: MetricConfig,
) -> SliceMetrics {
    if outcomes.is_empty() {
        return SliceMetrics::default();
    }
    let ex = compute_ex(outcomes).ok();
    let em = compute_em(outcomes).ok();
    let ves = compute_ves(outcomes, config.ves_aggregator).ok();
    let avg_latency =
        Some(outcomes.iter().map(|o| o.wall_latency).sum::<f64>() / outcomes.len() as f64);

    // QVT over groups fully contained in this slice and fully logged.
    let slice_ids: BTreeSet<&str> = subset.sample_ids.iter().map(String::as_str).collect();
    let outcome_map: BTreeMap<String, EvalOutcome> = outcomes
        .iter()
        .map(|o| (o.sample_id.clone(), o.clone()))
        .collect();
    let eligible: Vec<QvtGroup> = groups
        .iter()
        .filter(|g| {
            g.variants.iter().all(|v| {
                slice_ids.contains(v.sample_id.as_str()) && outcome_map.contains_key(&v.sample_id)
            })
        })
        .cloned()
        .collect();
    let qvt = compute_qvt(&eligible, &outcome_map, config.qvt_indicator).ok();

    let (avg_tokens, avg_cost, ex_per_cost) = match (price_table, ex) {
        (Some(prices), Some(ex)) => {
            match compute_cost(outcomes, prices, &log.header.system_name, ex) {
                Ok(summary) => (
                    Some(summary.avg_tokens),
                    Some(summary.avg_cost),
                    summary.ex_per_cost,
                ),
                Err(_) => (None, None, None),
            }
        }
        _ => (None, None, None),
    };

    SliceMetrics {
        ex,
        em,
        ves,
        qvt,
        avg_latency,
        avg_tokens,
        avg_cost,
        ex_per_cost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    MarkdownTable,
    Csv,
    Json,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" | "markdown_table" => Ok(RenderFormat::MarkdownTable),
            "csv" => Ok(RenderFormat::Csv),
            "json" => Ok(RenderFormat::Json),
            other => Err(format!("unknown render format: {other}")),
        }
    }
}

const METRIC_COLUMNS: [&str; 9] = [
    "n",
    "ex",
    "em",
    "ves",
    "qvt",
    "avg_latency",
    "avg_tokens",
    "avg_cost",
    "ex_per_cost",
];

fn cell(value: Option<f64>, decimals: usize) -> String {
    match value {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

fn row_cells(row: &ReportRow) -> Vec<String> {
    let m = &row.metrics;
    vec![
        row.n.to_string(),
        cell(m.ex, 4),
        cell(m.em, 4),
        cell(m.ves, 2),
        cell(m.qvt, 4),
        cell(m.avg_latency, 6),
        cell(m.avg_tokens, 1),
        cell(m.avg_cost, 6),
        cell(m.ex_per_cost, 0),
    ]
}

/// Deterministic rendering of a report.
pub fn render(report: &Report, format: RenderFormat) -> Vec<u8> {
    match format {
        RenderFormat::Json => {
            let mut bytes = serde_json::to_vec_pretty(report).expect("report serializes");
            bytes.push(b'\n');
            bytes
        }
        RenderFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["system".to_string(), "slice".to_string()];
            header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
            header.push("run_id".to_string());
            writer.write_record(&header).expect("csv header");
            for row in &report.rows {
                let mut record = vec![row.system.clone(), row.slice.clone()];
                record.extend(row_cells(row));
                record.push(row.run_id.clone());
                writer.write_record(&record).expect("csv row");
            }
            writer.into_inner().expect("csv buffer")
        }
        RenderFormat::MarkdownTable => {
            let mut out = String::new();
            out.push_str("| system | slice |");
            for col in METRIC_COLUMNS {
                out.push_str(&format!(" {col} |"));
            }
            out.push('\n');
            out.push_str("|---|---|");
            for _ in METRIC_COLUMNS {
                out.push_str("---|");
            }
            out.push('\n');
            for row in &report.rows {
                out.push_str(&format!("| {} | {} |", row.system, row.slice));
                for value in row_cells(row) {
                    out.push_str(&format!(" {value} |"));
                }
                out.push('\n');
            }
            out.into_bytes()
        }
    }
}

/// Systems × slices matrix of one metric, as CSV, ready for heatmap tools.
pub fn render_heatmap(report: &Report, metric: &str) -> Vec<u8> {
    let mut slices: Vec<String> = Vec::new();
    let mut systems: Vec<String> = Vec::new();
    for row in &report.rows {
        if !slices.contains(&row.slice) {
            slices.push(row.slice.clone());
        }
        if !systems.contains(&row.system) {
            systems.push(row.system.clone());
        }
    }
    let pick = |m: &SliceMetrics| -> Option<f64> {
        match metric {
            "ex" => m.ex,
            "em" => m.em,
            "ves" => m.ves,
            "qvt" => m.qvt,
            _ => None,
        }
    };
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["system".to_string()];
    header.extend(slices.iter().cloned());
    writer.write_record(&header).expect("csv header");
    for system in &systems {
        let mut record = vec![system.clone()];
        for slice in &slices {
            let value = report
                .rows
                .iter()
                .find(|r| &r.system == system && &r.slice == slice)
                .and_then(|r| pick(&r.metrics));
            record.push(value.map(|v| format!("{v:.4}")).unwrap_or_default());
        }
        writer.write_record(&record).expect("csv row");
    }
    writer.into_inner().expect("csv buffer")
}
