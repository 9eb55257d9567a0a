//! Fitness backends for the architecture search.
//!
//! Desk-scale searches never call live models: scores come either from a
//! cached genome→score table or from running the testbed over per-genome
//! prediction files.

use super::{Genome, SearchSpace};
use crate::benchmark::Benchmark;
use crate::exec::{run_system, ExecutionConfig, SystemAdapter};
use crate::filter::Subset;
use crate::metrics::{compute_em, compute_ex, compute_ves, VesAggregator};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct FitnessError {
    pub genome_key: String,
    pub message: String,
}

/// Pure scoring contract: deterministic per genome within one search run
/// (the GA memoizes by genome).
pub trait FitnessFn {
    fn evaluate(&mut self, space: &SearchSpace, genome: &Genome) -> Result<f64, FitnessError>;
}

/// Closure adapter, mainly for tests and synthetic landscapes.
pub struct FnFitness<F: FnMut(&SearchSpace, &Genome) -> f64>(pub F);

impl<F: FnMut(&SearchSpace, &Genome) -> f64> FitnessFn for FnFitness<F> {
    fn evaluate(&mut self, space: &SearchSpace, genome: &Genome) -> Result<f64, FitnessError> {
        Ok((self.0)(space, genome))
    }
}

/// Cached fitness table: CSV rows of `genome_key,score`, where the key is
/// the layer options joined by `|`. A header row is skipped if present.
#[derive(Debug, Clone, Default)]
pub struct TableFitness {
    scores: BTreeMap<String, f64>,
}

impl TableFitness {
    pub fn new(scores: BTreeMap<String, f64>) -> Self {
        TableFitness { scores }
    }

    pub fn from_csv_file(path: &Path) -> Result<Self, String> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(|e| e.to_string())?;
        let mut scores = BTreeMap::new();
        for record in reader.records() {
            let record = record.map_err(|e| e.to_string())?;
            let key = record.get(0).unwrap_or("").trim().to_string();
            let Some(score) = record.get(1).and_then(|s| s.trim().parse::<f64>().ok()) else {
                continue; // header or malformed row
            };
            scores.insert(key, score);
        }
        if scores.is_empty() {
            return Err(format!(
                "no usable rows in fitness table {}",
                path.display()
            ));
        }
        Ok(TableFitness { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl FitnessFn for TableFitness {
    fn evaluate(&mut self, space: &SearchSpace, genome: &Genome) -> Result<f64, FitnessError> {
        let key = genome.key(space);
        self.scores.get(&key).copied().ok_or_else(|| FitnessError {
            genome_key: key,
            message: "genome missing from fitness table".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMetric {
    #[default]
    Ex,
    Em,
    Ves,
}

impl std::str::FromStr for TargetMetric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ex" => Ok(TargetMetric::Ex),
            "em" => Ok(TargetMetric::Em),
            "ves" => Ok(TargetMetric::Ves),
            other => Err(format!("unknown target metric: {other}")),
        }
    }
}

/// Evaluate-via-testbed fitness: each genome maps to a prediction file
/// `<dir>/<genome_key>.json`, which runs through the executor and scores
/// on the target metric.
pub struct TestbedFitness {
    pub benchmark: Benchmark,
    pub subset: Subset,
    pub predictions_dir: PathBuf,
    pub metric: TargetMetric,
    pub config: ExecutionConfig,
    pub ves_aggregator: VesAggregator,
}

impl FitnessFn for TestbedFitness {
    fn evaluate(&mut self, space: &SearchSpace, genome: &Genome) -> Result<f64, FitnessError> {
        let key = genome.key(space);
        let fail = |message: String| FitnessError {
            genome_key: key.clone(),
            message,
        };
        let path = self.predictions_dir.join(format!("{key}.json"));
        if !path.exists() {
            return Err(fail(format!("no prediction file at {}", path.display())));
        }
        let adapter = SystemAdapter::prediction_file(key.clone(), path);
        let log = run_system(
            &adapter,
            &self.benchmark,
            &self.subset,
            &self.config,
            &format!("aas-{key}"),
            None,
        )
        .map_err(|e| fail(e.to_string()))?;
        let score = match self.metric {
            TargetMetric::Ex => compute_ex(&log.outcomes),
            TargetMetric::Em => compute_em(&log.outcomes),
            TargetMetric::Ves => compute_ves(&log.outcomes, self.ves_aggregator),
        }
        .map_err(|e| fail(e.to_string()))?;
        Ok(score)
    }
}
