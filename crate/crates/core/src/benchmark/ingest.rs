//! Loading Spider/BIRD-format benchmark directories.
//!
//! Expected layout under the root:
//!   - `dev.json` (or an explicit override): array of question objects
//!   - `tables.json`: schema catalog (`table_names_original`,
//!     `column_names_original`, `column_types`, `primary_keys`,
//!     `foreign_keys`)
//!   - `database/<db_id>/<db_id>.sqlite`: the databases

use super::{
    Benchmark, BenchmarkFormat, ColumnDef, ColumnRef, DatabaseSchema, RejectedSample, Sample,
    Split, TableDef,
};
use crate::sql::{self, Dialect};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("io error reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {message}")]
    MalformedJson { path: PathBuf, message: String },
    #[error("schema inconsistency: {0}")]
    SchemaInconsistency(String),
    #[error(
        "{rejected} of {total} gold queries failed to parse, above the {threshold:.1}% threshold"
    )]
    RejectsExceedThreshold {
        rejected: usize,
        total: usize,
        threshold: f64,
    },
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Question file relative to the root; `dev.json` by default.
    pub questions_file: Option<PathBuf>,
    /// Maximum tolerated fraction of unparseable gold SQL.
    pub reject_threshold: f64,
    /// Optional domain-label CSV, loaded into the benchmark.
    pub domain_map_file: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            questions_file: None,
            reject_threshold: 0.01,
            domain_map_file: None,
        }
    }
}

pub fn load_benchmark(root: &Path, format: BenchmarkFormat) -> Result<Benchmark, IngestError> {
    load_benchmark_with(root, format, LoadOptions::default())
}

pub fn load_benchmark_with(
    root: &Path,
    format: BenchmarkFormat,
    opts: LoadOptions,
) -> Result<Benchmark, IngestError> {
    let questions_path = root.join(
        opts.questions_file
            .as_deref()
            .unwrap_or(Path::new("dev.json")),
    );
    let tables_path = root.join("tables.json");
    let database_dir = root.join("database");
    for path in [&questions_path, &tables_path, &database_dir] {
        if !path.exists() {
            return Err(IngestError::MissingFile(path.clone()));
        }
    }

    let split = split_from_file_name(&questions_path);
    let schemas = load_schema_catalog(&tables_path)?;
    let (samples, rejects) = load_questions(&questions_path, format, split, &schemas)?;

    let total = samples.len() + rejects.len();
    if total > 0 {
        let fraction = rejects.len() as f64 / total as f64;
        if fraction > opts.reject_threshold {
            return Err(IngestError::RejectsExceedThreshold {
                rejected: rejects.len(),
                total,
                threshold: opts.reject_threshold * 100.0,
            });
        }
    }

    let database_files = scan_database_dir(&database_dir)?;

    let domain_map = match &opts.domain_map_file {
        Some(path) => Some(
            super::load_domain_map(path)
                .map_err(|e| IngestError::SchemaInconsistency(e.to_string()))?,
        ),
        None => None,
    };

    let name = root
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".to_string());

    Ok(Benchmark {
        name,
        samples,
        schemas,
        domain_map,
        database_files,
        rejects,
    })
}

fn split_from_file_name(path: &Path) -> Split {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    if stem.contains("train") {
        Split::Train
    } else if stem.contains("test") {
        Split::Test
    } else {
        Split::Dev
    }
}

fn read_json(path: &Path) -> Result<Value, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IngestError::MalformedJson {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn load_questions(
    path: &Path,
    format: BenchmarkFormat,
    split: Split,
    schemas: &BTreeMap<String, DatabaseSchema>,
) -> Result<(Vec<Sample>, Vec<RejectedSample>), IngestError> {
    let value = read_json(path)?;
    let Value::Array(entries) = value else {
        return Err(IngestError::MalformedJson {
            path: path.to_path_buf(),
            message: "expected a top-level array of question objects".into(),
        });
    };

    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    for (idx, entry) in entries.iter().enumerate() {
        let db_id = entry
            .get("db_id")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let nl_question = entry
            .get("question")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let gold_sql = gold_field(entry, format).to_string();
        let sample_id = format!("s{idx:05}");

        if db_id.is_empty() || gold_sql.is_empty() {
            return Err(IngestError::MalformedJson {
                path: path.to_path_buf(),
                message: format!("entry {idx} lacks db_id or gold SQL"),
            });
        }
        if !schemas.contains_key(&db_id) {
            return Err(IngestError::SchemaInconsistency(format!(
                "sample {sample_id} references db_id '{db_id}' with no schema entry"
            )));
        }

        match sql::parse_sql(&gold_sql, Dialect::Sqlite) {
            Ok(_) => samples.push(Sample {
                sample_id,
                db_id,
                nl_question,
                gold_sql,
                split,
            }),
            Err(err) => rejects.push(RejectedSample {
                sample_id,
                db_id,
                gold_sql,
                error: err.to_string(),
            }),
        }
    }
    Ok((samples, rejects))
}

fn gold_field(entry: &Value, format: BenchmarkFormat) -> &str {
    let keys: &[&str] = match format {
        BenchmarkFormat::SpiderJson => &["query", "SQL", "sql"],
        BenchmarkFormat::BirdJson => &["SQL", "sql", "query"],
    };
    keys.iter()
        .find_map(|k| entry.get(k).and_then(Value::as_str))
        .unwrap_or_default()
}

fn load_schema_catalog(path: &Path) -> Result<BTreeMap<String, DatabaseSchema>, IngestError> {
    let value = read_json(path)?;
    let Value::Array(entries) = value else {
        return Err(IngestError::MalformedJson {
            path: path.to_path_buf(),
            message: "expected a top-level array of schema objects".into(),
        });
    };

    let mut schemas = BTreeMap::new();
    for entry in &entries {
        let schema = parse_schema_entry(entry)?;
        if schemas.contains_key(&schema.db_id) {
            return Err(IngestError::SchemaInconsistency(format!(
                "duplicate db_id '{}' in schema catalog",
                schema.db_id
            )));
        }
        schemas.insert(schema.db_id.clone(), schema);
    }
    Ok(schemas)
}

// Column entries are [table_index, name]; index -1 is the `*` pseudo-column
// and is excluded from the schema.
fn parse_schema_entry(entry: &Value) -> Result<DatabaseSchema, IngestError> {
    let db_id = entry
        .get("db_id")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let bad = |message: String| IngestError::SchemaInconsistency(format!("{db_id}: {message}"));

    let table_names: Vec<String> = entry
        .get("table_names_original")
        .or_else(|| entry.get("table_names"))
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .map(|v| v.as_str().unwrap_or_default().to_string())
                .collect()
        })
        .unwrap_or_default();
    {
        let mut seen = std::collections::BTreeSet::new();
        for name in &table_names {
            if !seen.insert(name.to_ascii_lowercase()) {
                return Err(bad(format!("duplicate table name '{name}'")));
            }
        }
    }

    let columns_raw = entry
        .get("column_names_original")
        .or_else(|| entry.get("column_names"))
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let types_raw = entry
        .get("column_types")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();

    let mut tables: Vec<TableDef> = table_names
        .iter()
        .map(|name| TableDef {
            name: name.clone(),
            columns: Vec::new(),
        })
        .collect();

    // Global column index -> (table index, column name); used to resolve
    // PK/FK references, which index into the flat column list.
    let mut flat: Vec<Option<ColumnRef>> = Vec::with_capacity(columns_raw.len());
    for (col_idx, col) in columns_raw.iter().enumerate() {
        let pair = col.as_array().ok_or_else(|| {
            bad(format!(
                "column entry {col_idx} is not a [table, name] pair"
            ))
        })?;
        let table_idx = pair.first().and_then(Value::as_i64).unwrap_or(-1);
        let col_name = pair
            .get(1)
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        if table_idx < 0 {
            flat.push(None);
            continue;
        }
        let table_idx = table_idx as usize;
        if table_idx >= tables.len() {
            return Err(bad(format!(
                "column '{col_name}' references table index {table_idx} out of range"
            )));
        }
        let type_tag = types_raw
            .get(col_idx)
            .and_then(Value::as_str)
            .unwrap_or("text")
            .to_string();
        tables[table_idx].columns.push(ColumnDef {
            name: col_name.clone(),
            type_tag,
        });
        flat.push(Some(ColumnRef {
            table: table_idx,
            column: col_name,
        }));
    }

    let resolve = |idx: i64, what: &str| -> Result<ColumnRef, IngestError> {
        usize::try_from(idx)
            .ok()
            .and_then(|i| flat.get(i).cloned().flatten())
            .ok_or_else(|| bad(format!("{what} references unknown column index {idx}")))
    };

    let mut primary_keys = Vec::new();
    if let Some(pks) = entry.get("primary_keys").and_then(Value::as_array) {
        for pk in pks {
            match pk {
                // Composite keys appear as nested index lists.
                Value::Array(parts) => {
                    for part in parts {
                        let idx = part.as_i64().unwrap_or(-1);
                        primary_keys.push(resolve(idx, "primary key")?);
                    }
                }
                other => {
                    let idx = other.as_i64().unwrap_or(-1);
                    primary_keys.push(resolve(idx, "primary key")?);
                }
            }
        }
    }

    let mut foreign_keys = Vec::new();
    if let Some(fks) = entry.get("foreign_keys").and_then(Value::as_array) {
        for fk in fks {
            let pair = fk
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| bad("foreign key entry is not a pair".into()))?;
            let from = resolve(pair[0].as_i64().unwrap_or(-1), "foreign key")?;
            let to = resolve(pair[1].as_i64().unwrap_or(-1), "foreign key")?;
            foreign_keys.push((from, to));
        }
    }

    Ok(DatabaseSchema {
        db_id,
        tables,
        primary_keys,
        foreign_keys,
    })
}

fn scan_database_dir(dir: &Path) -> Result<BTreeMap<String, PathBuf>, IngestError> {
    let mut files = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|source| IngestError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        if !entry.path().is_dir() {
            continue;
        }
        let db_id = entry.file_name().to_string_lossy().into_owned();
        let db_file = entry.path().join(format!("{db_id}.sqlite"));
        if db_file.exists() {
            files.insert(db_id, db_file);
        }
    }
    Ok(files)
}
