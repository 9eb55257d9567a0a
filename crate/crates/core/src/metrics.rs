//! Evaluation metrics over run logs: execution accuracy, exact match,
//! valid efficiency score, query-variance testing, latency, and cost.

use crate::benchmark::QvtGroup;
use crate::exec::EvalOutcome;
use crate::sql::{self, CanonQuery, Dialect};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

/// Materialized rows from executing one query.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: usize,
    pub rows: Vec<Vec<SqlValue>>,
}

/// One cell. Blobs are stored as a content hash; NULL compares equal to
/// NULL; integers and reals compare numerically.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    BlobHash(u64),
}

/// FNV-1a over bytes; stable across runs and platforms.
pub(crate) fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl SqlValue {
    pub fn blob(bytes: &[u8]) -> SqlValue {
        SqlValue::BlobHash(fnv64(bytes))
    }

    // Numeric values normalize to f64 bits when exactly representable, so
    // 4 and 4.0 land on the same key in both hashing and ordering.
    fn key(&self) -> ValueKey {
        const EXACT: i64 = 1 << 53;
        match self {
            SqlValue::Null => ValueKey::Null,
            SqlValue::Integer(v) => {
                if v.abs() <= EXACT {
                    ValueKey::Num(norm_bits(*v as f64))
                } else {
                    ValueKey::BigInt(*v)
                }
            }
            SqlValue::Real(v) => {
                if v.is_nan() {
                    ValueKey::NotANumber
                } else {
                    ValueKey::Num(norm_bits(*v))
                }
            }
            SqlValue::Text(s) => ValueKey::Text(s.clone()),
            SqlValue::BlobHash(h) => ValueKey::Blob(*h),
        }
    }
}

fn norm_bits(v: f64) -> u64 {
    if v == 0.0 {
        0f64.to_bits()
    } else {
        v.to_bits()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum ValueKey {
    Null,
    Num(u64),
    BigInt(i64),
    Text(String),
    NotANumber,
    Blob(u64),
}

fn row_keys(rows: &[Vec<SqlValue>]) -> Vec<Vec<ValueKey>> {
    rows.iter()
        .map(|row| row.iter().map(SqlValue::key).collect())
        .collect()
}

/// Result-set equality. Column order is significant in both modes; row
/// order only when `order_sensitive`.
pub fn compare_results(gold: &ResultTable, pred: &ResultTable, order_sensitive: bool) -> bool {
    if gold.columns != pred.columns || gold.rows.len() != pred.rows.len() {
        return false;
    }
    let gold_rows = row_keys(&gold.rows);
    let pred_rows = row_keys(&pred.rows);
    if order_sensitive {
        gold_rows == pred_rows
    } else {
        let mut counts: HashMap<&Vec<ValueKey>, i64> = HashMap::new();
        for row in &gold_rows {
            *counts.entry(row).or_insert(0) += 1;
        }
        for row in &pred_rows {
            match counts.get_mut(row) {
                Some(n) => *n -= 1,
                None => return false,
            }
        }
        counts.values().all(|n| *n == 0)
    }
}

/// Spider-convention exact match: canonical component comparison with
/// case-insensitive identifiers and literal values ignored. An unparseable
/// side never matches.
pub fn exact_match(gold_sql: &str, pred_sql: &str) -> bool {
    let gold = match sql::parse_sql(gold_sql, Dialect::Sqlite) {
        Ok(ast) => CanonQuery::of(&ast),
        Err(_) => None,
    };
    let pred = match sql::parse_sql(pred_sql, Dialect::Sqlite) {
        Ok(ast) => CanonQuery::of(&ast),
        Err(_) => None,
    };
    match (gold, pred) {
        (Some(g), Some(p)) => g == p,
        _ => false,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("empty subset: no outcomes to aggregate")]
    EmptySubset,
    #[error("missing timing for exec-correct sample '{0}'")]
    MissingTiming(String),
    #[error("no QVT-eligible groups: every group has zero correct variants")]
    NoEligibleGroups,
    #[error("no outcome recorded for group variant '{0}'")]
    MissingOutcome(String),
    #[error("unknown model label '{0}' in price table")]
    UnknownModelLabel(String),
}

/// Fraction of outcomes whose execution result matched gold.
pub fn compute_ex(outcomes: &[EvalOutcome]) -> Result<f64, MetricsError> {
    mean_of(outcomes, |o| o.exec_correct)
}

/// Fraction of outcomes whose SQL exact-matched gold.
pub fn compute_em(outcomes: &[EvalOutcome]) -> Result<f64, MetricsError> {
    mean_of(outcomes, |o| o.exact_match)
}

fn mean_of(
    outcomes: &[EvalOutcome],
    f: impl Fn(&EvalOutcome) -> bool,
) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    let hits = outcomes.iter().filter(|o| f(o)).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// How a correct sample's gold/predicted time ratio enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VesAggregator {
    /// Square root of the time ratio (the BIRD leaderboard convention).
    #[default]
    SqrtRatio,
    /// The raw time ratio.
    PlainRatio,
}

/// Valid efficiency score, reported ×100: the mean over all outcomes of
/// `1(exec_correct) · g(t_gold / t_pred)`.
pub fn compute_ves(
    outcomes: &[EvalOutcome],
    aggregator: VesAggregator,
) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    let mut sum = 0.0;
    for outcome in outcomes {
        if !outcome.exec_correct {
            continue;
        }
        let (t_gold, t_pred) = match (outcome.t_gold, outcome.t_pred) {
            (Some(g), Some(p)) if g > 0.0 && p > 0.0 => (g, p),
            _ => return Err(MetricsError::MissingTiming(outcome.sample_id.clone())),
        };
        let ratio = t_gold / t_pred;
        sum += match aggregator {
            VesAggregator::SqrtRatio => ratio.sqrt(),
            VesAggregator::PlainRatio => ratio,
        };
    }
    Ok(100.0 * sum / outcomes.len() as f64)
}

/// Which notion of "correct variant" feeds the QVT indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QvtIndicator {
    /// Execution-result equality (default).
    #[default]
    ExecCorrect,
    /// Exact-match equality.
    ExactMatch,
}

/// Query variance testing. A group enters the test set only if at least one
/// of its variants is correct; the score is the mean, over included groups,
/// of the fraction of variants handled correctly. With zero eligible groups
/// the metric is undefined ([`MetricsError::NoEligibleGroups`]), not zero.
pub fn compute_qvt(
    groups: &[QvtGroup],
    outcomes: &BTreeMap<String, EvalOutcome>,
    indicator: QvtIndicator,
) -> Result<f64, MetricsError> {
    let mut included = 0usize;
    let mut sum = 0.0;
    for group in groups {
        let mut correct = 0usize;
        for variant in &group.variants {
            let outcome = outcomes
                .get(&variant.sample_id)
                .ok_or_else(|| MetricsError::MissingOutcome(variant.sample_id.clone()))?;
            let hit = match indicator {
                QvtIndicator::ExecCorrect => outcome.exec_correct,
                QvtIndicator::ExactMatch => outcome.exact_match,
            };
            if hit {
                correct += 1;
            }
        }
        if correct > 0 {
            included += 1;
            sum += correct as f64 / group.m as f64;
        }
    }
    if included == 0 {
        return Err(MetricsError::NoEligibleGroups);
    }
    Ok(sum / included as f64)
}

/// Per-token prices for one model label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_per_token: f64,
    pub output_per_token: f64,
}

/// Model label → token prices, loadable from a JSON config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable(pub BTreeMap<String, ModelPrice>);

impl PriceTable {
    pub fn from_json_file(path: &Path) -> Result<PriceTable, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        let table: PriceTable = serde_json::from_str(&text)?;
        for (label, price) in &table.0 {
            if price.input_per_token < 0.0 || price.output_per_token < 0.0 {
                return Err(std::io::Error::other(format!(
                    "negative price for model '{label}'"
                )));
            }
        }
        Ok(table)
    }

    pub fn get(&self, label: &str) -> Option<ModelPrice> {
        self.0.get(label).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub avg_tokens: f64,
    pub avg_cost: f64,
    /// EX in percent divided by average cost; absent when cost is zero.
    pub ex_per_cost: Option<f64>,
}

/// EX(%) per unit cost. `ex` is a fraction in [0, 1].
pub fn ex_per_cost(ex: f64, avg_cost: f64) -> Option<f64> {
    if avg_cost > 0.0 {
        Some(ex * 100.0 / avg_cost)
    } else {
        None
    }
}

/// Average token usage and dollar cost per query, and cost-effectiveness
/// given the subset's EX. Outcomes without token counts contribute zero
/// tokens.
pub fn compute_cost(
    outcomes: &[EvalOutcome],
    prices: &PriceTable,
    model_label: &str,
    ex: f64,
) -> Result<CostSummary, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptySubset);
    }
    let price = prices
        .get(model_label)
        .ok_or_else(|| MetricsError::UnknownModelLabel(model_label.to_string()))?;
    let mut total_tokens = 0u64;
    let mut total_cost = 0.0;
    for outcome in outcomes {
        let tin = outcome.tokens_in.unwrap_or(0);
        let tout = outcome.tokens_out.unwrap_or(0);
        total_tokens += tin + tout;
        total_cost += tin as f64 * price.input_per_token + tout as f64 * price.output_per_token;
    }
    let n = outcomes.len() as f64;
    let avg_cost = total_cost / n;
    Ok(CostSummary {
        avg_tokens: total_tokens as f64 / n,
        avg_cost,
        ex_per_cost: ex_per_cost(ex, avg_cost),
    })
}
