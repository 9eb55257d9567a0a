//! Read-only SQLite execution with timeouts and repeated timing.

use crate::metrics::{ResultTable, SqlValue};
use rusqlite::{Connection, OpenFlags};
use std::path::Path;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ExecError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("query exceeded its time budget")]
    Timeout,
    #[error("statement rejected: writes are not allowed")]
    RejectedWrite,
    #[error("cannot open database: {0}")]
    CannotOpen(String),
}

fn open_read_only(db_path: &Path) -> Result<Connection, ExecError> {
    Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
    .map_err(|e| ExecError::CannotOpen(e.to_string()))
}

fn classify(err: rusqlite::Error) -> ExecError {
    if let rusqlite::Error::SqliteFailure(f, _) = &err {
        if f.code == rusqlite::ErrorCode::OperationInterrupted {
            return ExecError::Timeout;
        }
    }
    let message = err.to_string();
    if message.contains("syntax error") {
        ExecError::Syntax(message)
    } else {
        ExecError::Runtime(message)
    }
}

// Arm a deadline; the progress handler interrupts the VM once it passes.
fn arm_timeout(conn: &Connection, timeout: Duration) {
    let deadline = Instant::now() + timeout;
    let _ = conn.progress_handler(1000, Some(move || Instant::now() > deadline));
}

fn run_to_table(conn: &Connection, sql: &str) -> Result<ResultTable, ExecError> {
    let mut stmt = conn.prepare(sql).map_err(classify)?;
    if !stmt.readonly() {
        return Err(ExecError::RejectedWrite);
    }
    let columns = stmt.column_count();
    let mut rows = Vec::new();
    let mut raw = stmt.query([]).map_err(classify)?;
    loop {
        match raw.next() {
            Ok(Some(row)) => {
                let mut values = Vec::with_capacity(columns);
                for i in 0..columns {
                    let value = match row.get_ref(i).map_err(classify)? {
                        rusqlite::types::ValueRef::Null => SqlValue::Null,
                        rusqlite::types::ValueRef::Integer(v) => SqlValue::Integer(v),
                        rusqlite::types::ValueRef::Real(v) => SqlValue::Real(v),
                        rusqlite::types::ValueRef::Text(t) => {
                            SqlValue::Text(String::from_utf8_lossy(t).into_owned())
                        }
                        rusqlite::types::ValueRef::Blob(b) => SqlValue::blob(b),
                    };
                    values.push(value);
                }
                rows.push(values);
            }
            Ok(None) => break,
            Err(e) => return Err(classify(e)),
        }
    }
    Ok(ResultTable { columns, rows })
}

/// Execute one read-only query and materialize all rows. Statements that
/// would mutate the database are rejected before running.
pub fn execute_query(
    db_path: &Path,
    sql: &str,
    timeout: Duration,
) -> Result<ResultTable, ExecError> {
    let conn = open_read_only(db_path)?;
    arm_timeout(&conn, timeout);
    run_to_table(&conn, sql)
}

/// Median wall time over `repeats` full materializations, after one
/// warm-up execution. Runs on a single connection with nothing concurrent;
/// the caller guarantees a dedicated timing lane.
pub fn time_query(
    db_path: &Path,
    sql: &str,
    repeats: usize,
    timeout: Duration,
) -> Result<f64, ExecError> {
    let repeats = repeats.max(1);
    let conn = open_read_only(db_path)?;
    arm_timeout(&conn, timeout);
    run_to_table(&conn, sql)?; // warm-up
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        run_to_table(&conn, sql)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(median(&mut samples).max(1e-9))
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SqlValue;

    fn scratch_db() -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE t (name TEXT);
             INSERT INTO t VALUES ('a'), ('b');",
        )
        .unwrap();
        (dir, path)
    }

    #[test]
    fn arithmetic_on_any_db() {
        let (_dir, path) = scratch_db();
        let table = execute_query(&path, "SELECT 2+2", Duration::from_secs(5)).unwrap();
        assert_eq!(table.rows, vec![vec![SqlValue::Integer(4)]]);
    }

    #[test]
    fn writes_are_rejected() {
        let (_dir, path) = scratch_db();
        match execute_query(&path, "DROP TABLE t", Duration::from_secs(5)) {
            Err(ExecError::RejectedWrite) => {}
            other => panic!("expected RejectedWrite, got {other:?}"),
        }
        // And the table is still there.
        let table = execute_query(&path, "SELECT COUNT(*) FROM t", Duration::from_secs(5)).unwrap();
        assert_eq!(table.rows, vec![vec![SqlValue::Integer(2)]]);
    }

    #[test]
    fn runaway_query_times_out() {
        let (_dir, path) = scratch_db();
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x+1 FROM c) \
                   SELECT COUNT(*) FROM c";
        match execute_query(&path, sql, Duration::from_millis(100)) {
            Err(ExecError::Timeout) => {}
            other => panic!("expected Timeout, got {other:?}"),
        }
    }

    #[test]
    fn missing_database_cannot_open() {
        assert!(matches!(
            execute_query(
                Path::new("/nonexistent/x.sqlite"),
                "SELECT 1",
                Duration::from_secs(1)
            ),
            Err(ExecError::CannotOpen(_))
        ));
    }

    #[test]
    fn timing_returns_positive_median() {
        let (_dir, path) = scratch_db();
        let t = time_query(&path, "SELECT * FROM t", 5, Duration::from_secs(5)).unwrap();
        assert!(t > 0.0);
        // repeats=1 equals a single measurement: just check it still works.
        let single = time_query(&path, "SELECT * FROM t", 1, Duration::from_secs(5)).unwrap();
        assert!(single > 0.0);
    }

    #[test]
    fn timing_propagates_failures() {
        let (_dir, path) = scratch_db();
        assert!(time_query(&path, "SELECT nope FROM t", 3, Duration::from_secs(5)).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
