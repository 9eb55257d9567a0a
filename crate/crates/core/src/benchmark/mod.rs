//! Benchmark datasets: samples, schemas, domain labels, variant groups.
//!
//! A [`Benchmark`] is an immutable snapshot of a Spider/BIRD-format dataset
//! directory. Loading validates schemas, parses all gold SQL (quarantining
//! rejects), and leaves a structure that is safe to share across threads.

mod ingest;

pub use ingest::{load_benchmark, load_benchmark_with, IngestError, LoadOptions};

use crate::sql::{self, em_canonical_key, Dialect, SqlProfile};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// The question-file layout to expect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkFormat {
    SpiderJson,
    BirdJson,
}

impl std::str::FromStr for BenchmarkFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spider_json" | "spider" => Ok(BenchmarkFormat::SpiderJson),
            "bird_json" | "bird" => Ok(BenchmarkFormat::BirdJson),
            other => Err(format!("unknown benchmark format: {other}")),
        }
    }
}

/// One (NL question, gold SQL) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub db_id: String,
    pub nl_question: String,
    pub gold_sql: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub type_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

/// Reference to a column as (table index, column name).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: usize,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub primary_keys: Vec<ColumnRef>,
    pub foreign_keys: Vec<(ColumnRef, ColumnRef)>,
}

impl DatabaseSchema {
    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }
}

/// A gold query that failed to parse, kept out of `samples` but reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSample {
    pub sample_id: String,
    pub db_id: String,
    pub gold_sql: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Benchmark {
    pub name: String,
    pub samples: Vec<Sample>,
    pub schemas: BTreeMap<String, DatabaseSchema>,
    pub domain_map: Option<BTreeMap<String, String>>,
    pub database_files: BTreeMap<String, PathBuf>,
    pub rejects: Vec<RejectedSample>,
}

impl Benchmark {
    pub fn sample(&self, sample_id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.sample_id == sample_id)
    }

    /// Gold-SQL profile per sample. Samples are guaranteed parseable after
    /// loading (unparseable gold is quarantined into `rejects`).
    pub fn profiles(&self) -> BTreeMap<String, SqlProfile> {
        self.samples
            .iter()
            .filter_map(|s| {
                sql::parse_sql(&s.gold_sql, Dialect::Sqlite)
                    .ok()
                    .map(|ast| (s.sample_id.clone(), sql::profile(&ast)))
            })
            .collect()
    }

    pub fn database_path(&self, db_id: &str) -> Option<&Path> {
        self.database_files.get(db_id).map(PathBuf::as_path)
    }
}

/// min/max exact, mean rounded half-up to one decimal place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatTriple {
    pub min: u32,
    pub max: u32,
    pub mean: f64,
}

impl StatTriple {
    fn over(values: impl IntoIterator<Item = u32>) -> StatTriple {
        let mut min = u32::MAX;
        let mut max = 0u32;
        let mut sum = 0u64;
        let mut n = 0u64;
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += u64::from(v);
            n += 1;
        }
        if n == 0 {
            return StatTriple {
                min: 0,
                max: 0,
                mean: 0.0,
            };
        }
        // Half-up rounding to one decimal, exact over the rational mean.
        let tenths = {
            let m = 10 * sum;
            let q = m / n;
            if 2 * (m % n) >= n {
                q + 1
            } else {
                q
            }
        };
        StatTriple {
            min,
            max,
            mean: tenths as f64 / 10.0,
        }
    }
}

/// Per-benchmark schema statistics (the dataset comparison table).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemaStats {
    pub tables_per_db: StatTriple,
    pub columns_per_db: StatTriple,
    pub columns_per_table: StatTriple,
    pub pks_per_db: StatTriple,
    pub fks_per_db: StatTriple,
}

pub fn schema_stats(benchmark: &Benchmark) -> SchemaStats {
    let schemas = benchmark.schemas.values();
    SchemaStats {
        tables_per_db: StatTriple::over(schemas.clone().map(|s| s.tables.len() as u32)),
        columns_per_db: StatTriple::over(schemas.clone().map(|s| s.column_count() as u32)),
        columns_per_table: StatTriple::over(
            schemas
                .clone()
                .flat_map(|s| s.tables.iter().map(|t| t.columns.len() as u32)),
        ),
        pks_per_db: StatTriple::over(schemas.clone().map(|s| s.primary_keys.len() as u32)),
        fks_per_db: StatTriple::over(schemas.map(|s| s.foreign_keys.len() as u32)),
    }
}

/// One gold query with its NL phrasings: the unit of query-variance testing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QvtGroup {
    pub group_id: String,
    /// Canonical rendering of the shared gold SQL.
    pub canonical_gold: String,
    pub db_id: String,
    pub variants: Vec<Sample>,
    pub m: usize,
}

impl QvtGroup {
    /// Groups with at least two phrasings enter variance testing.
    pub fn qvt_eligible(&self) -> bool {
        self.m >= 2
    }
}

/// Group samples by (db_id, exact-match canonical form of gold SQL).
/// Every sample with parseable gold lands in exactly one group; group order
/// follows first appearance in the benchmark.
pub fn group_variants(benchmark: &Benchmark) -> Vec<QvtGroup> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut buckets: BTreeMap<(String, String), Vec<Sample>> = BTreeMap::new();
    for sample in &benchmark.samples {
        let Ok(ast) = sql::parse_sql(&sample.gold_sql, Dialect::Sqlite) else {
            continue;
        };
        let key = (sample.db_id.clone(), em_canonical_key(&ast));
        if !buckets.contains_key(&key) {
            order.push(key.clone());
        }
        buckets.entry(key).or_default().push(sample.clone());
    }
    order
        .into_iter()
        .enumerate()
        .map(|(idx, key)| {
            let variants = buckets.remove(&key).expect("bucket exists");
            let first = &variants[0];
            let canonical_gold = sql::parse_sql(&first.gold_sql, Dialect::Sqlite)
                .map(|ast| sql::render_sql(&ast))
                .unwrap_or_else(|_| first.gold_sql.clone());
            QvtGroup {
                group_id: format!("g{idx:04}"),
                canonical_gold,
                db_id: key.0,
                m: variants.len(),
                variants,
            }
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum DomainMapError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("duplicate db_id in domain map: {0}")]
    DuplicateDbId(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Load a two-column CSV (db_id, domain) with a header row.
pub fn load_domain_map(path: &Path) -> Result<BTreeMap<String, String>, DomainMapError> {
    if !path.exists() {
        return Err(DomainMapError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut map = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let db_id = record.get(0).unwrap_or("").trim().to_string();
        let domain = record.get(1).unwrap_or("").trim().to_string();
        if db_id.is_empty() {
            continue;
        }
        if map.insert(db_id.clone(), domain).is_some() {
            return Err(DomainMapError::DuplicateDbId(db_id));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, db: &str, sql: &str) -> Sample {
        Sample {
            sample_id: id.into(),
            db_id: db.into(),
            nl_question: format!("question {id}"),
            gold_sql: sql.into(),
            split: Split::Dev,
        }
    }

    fn bench(samples: Vec<Sample>) -> Benchmark {
        Benchmark {
            name: "test".into(),
            samples,
            schemas: BTreeMap::new(),
            domain_map: None,
            database_files: BTreeMap::new(),
            rejects: Vec::new(),
        }
    }

    #[test]
    fn variants_group_by_canonical_form() {
        let b = bench(vec![
            sample("a", "db1", "SELECT name FROM t"),
            sample("b", "db1", "select  name  from t"),
            sample("c", "db1", "SELECT other FROM t"),
        ]);
        let groups = group_variants(&b);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].m, 2);
        assert!(groups[0].qvt_eligible());
        assert_eq!(groups[1].m, 1);
    }

    #[test]
    fn same_sql_different_db_splits_groups() {
        let b = bench(vec![
            sample("a", "db1", "SELECT name FROM t"),
            sample("b", "db2", "SELECT name FROM t"),
        ]);
        let groups = group_variants(&b);
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn group_sizes_partition_samples() {
        let b = bench(vec![
            sample("a", "db1", "SELECT name FROM t"),
            sample("b", "db1", "SELECT name FROM t"),
            sample("c", "db1", "SELECT x FROM u"),
            sample("d", "db2", "SELECT 1"),
        ]);
        let groups = group_variants(&b);
        let total: usize = groups.iter().map(|g| g.m).sum();
        assert_eq!(total, b.samples.len());
    }

    #[test]
    fn stats_are_ordered_and_rounded() {
        let t = StatTriple::over([2u32, 4]);
        assert_eq!(t.min, 2);
        assert_eq!(t.max, 4);
        assert_eq!(t.mean, 3.0);
        let t = StatTriple::over([2u32, 3, 3, 4, 4, 4, 4, 5, 5, 7]);
        assert!(t.min as f64 <= t.mean && t.mean <= t.max as f64);
        // 4.05 rounds half-up to 4.1
        let t = StatTriple::over([
            4u32, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 4, 5,
        ]);
        assert_eq!(t.mean, 4.1);
    }

    #[test]
    fn domain_map_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("domains.csv");
        std::fs::write(&path, "db_id,domain\na,finance\na,retail\n").unwrap();
        match load_domain_map(&path) {
            Err(DomainMapError::DuplicateDbId(id)) => assert_eq!(id, "a"),
            other => panic!("expected DuplicateDbId, got {other:?}"),
        }
    }

    #[test]
    fn domain_map_loads_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("domains.csv");
        std::fs::write(
            &path,
            "db_id,domain\nshop,Retail\nschool,Education\nflights,Travel\n",
        )
        .unwrap();
        let map = load_domain_map(&path).unwrap();
        assert_eq!(map.len(), 3);
        assert_eq!(map["shop"], "Retail");
    }

    #[test]
    fn domain_map_missing_file() {
        assert!(matches!(
            load_domain_map(Path::new("/nonexistent/domains.csv")),
            Err(DomainMapError::MissingFile(_))
        ));
    }
}
