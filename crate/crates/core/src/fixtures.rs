//! Deterministic mini benchmark used by tests and demos.
//!
//! Three SQLite databases (shop, school, flights), twenty samples with a
//! known characteristic matrix, three QVT variant groups, and a domain map.
//! [`write_mini_benchmark`] materializes the full Spider-format directory
//! layout; the `expected` module freezes the hand-counted ground truth that
//! tests assert against.

use rusqlite::Connection;
use serde_json::json;
use std::io;
use std::path::Path;

/// Hand-counted ground truth for the mini benchmark.
pub mod expected {
    pub const SAMPLE_COUNT: usize = 20;
    pub const HAS_SUBQUERY: usize = 4;
    pub const HAS_JOIN: usize = 4;
    pub const HAS_ORDERBY: usize = 4;
    pub const HAS_CONNECTOR: usize = 4;
    /// Variant groups (by canonical gold SQL within a database).
    pub const GROUP_COUNT: usize = 16;
    pub const QVT_ELIGIBLE_GROUPS: usize = 3;
    pub const EASY: usize = 7;
    pub const MEDIUM: usize = 6;
    pub const HARD: usize = 6;
    pub const EXTRA: usize = 1;
}

/// (db_id, NL question, gold SQL) for the twenty samples, in benchmark order.
pub fn sample_rows() -> Vec<(&'static str, &'static str, &'static str)> {
    vec![
        // Variant group A: three phrasings of the same query.
        ("shop", "List the names of all products.", "SELECT name FROM products"),
        ("shop", "What are the names of the products?", "select  name  from products"),
        ("shop", "Show every product name.", "SELECT NAME FROM PRODUCTS"),
        (
            "shop",
            "Which products belong to the toy category?",
            "SELECT name FROM products WHERE category_id = (SELECT id FROM categories WHERE name = 'Toys')",
        ),
        (
            "shop",
            "Name the products in the electronics category.",
            "SELECT p.name FROM products p JOIN categories c ON p.category_id = c.id WHERE c.name = 'Electronics'",
        ),
        (
            "shop",
            "Which products cost more than 10 in category 1?",
            "SELECT name FROM products WHERE price > 10 AND category_id = 1",
        ),
        (
            "shop",
            "Which products are priced above average?",
            "SELECT name FROM products WHERE price > (SELECT AVG(price) FROM products)",
        ),
        // Variant group B: same query, different threshold literal.
        ("school", "Who are the students older than twenty?", "SELECT name FROM students WHERE age > 20"),
        ("school", "List students whose age exceeds 21.", "SELECT name FROM students WHERE age > 21"),
        (
            "school",
            "Show adult students' average grades above 80, best first.",
            "SELECT s.name, AVG(e.grade) FROM students s JOIN enrollments e ON s.id = e.student_id WHERE s.age > 18 GROUP BY s.name HAVING AVG(e.grade) > 80 ORDER BY AVG(e.grade) DESC",
        ),
        (
            "school",
            "Which courses are worth three or four credits?",
            "SELECT title FROM courses WHERE credits = 3 OR credits = 4",
        ),
        (
            "school",
            "Which students scored above 90 in any course?",
            "SELECT name FROM students WHERE id IN (SELECT student_id FROM enrollments WHERE grade > 90)",
        ),
        (
            "school",
            "Who are the top three students by GPA?",
            "SELECT name FROM students ORDER BY gpa DESC LIMIT 3",
        ),
        (
            "school",
            "Which courses had failing grades from later students?",
            "SELECT t1.title FROM courses t1 JOIN enrollments t2 ON t1.id = t2.course_id WHERE t2.grade < 60 AND t2.student_id > 5",
        ),
        // Variant group C: same query, different delay literal.
        ("flights", "Which origins had delays over half an hour?", "SELECT origin FROM flights WHERE delay > 30"),
        ("flights", "Show origins with delays above 45 minutes.", "SELECT origin FROM FLIGHTS WHERE DELAY > 45"),
        (
            "flights",
            "Destinations for delayed JFK departures or LAX arrivals?",
            "SELECT dest FROM flights WHERE delay > 10 AND origin = 'JFK' OR dest = 'LAX'",
        ),
        (
            "flights",
            "List flights out of New York by delay.",
            "SELECT f.id FROM flights f JOIN airports a ON f.origin = a.code WHERE a.city = 'New York' ORDER BY f.delay",
        ),
        (
            "flights",
            "Which cities have airports with badly delayed departures?",
            "SELECT city FROM airports WHERE code IN (SELECT origin FROM flights WHERE delay > 60)",
        ),
        (
            "flights",
            "What is the most common destination?",
            "SELECT dest, COUNT(*) FROM flights GROUP BY dest ORDER BY COUNT(*) DESC LIMIT 1",
        ),
    ]
}

/// Write the complete benchmark directory: `dev.json`, `tables.json`,
/// `domains.csv`, and `database/<db>/<db>.sqlite`.
pub fn write_mini_benchmark(root: &Path) -> io::Result<()> {
    std::fs::create_dir_all(root)?;

    let questions: Vec<serde_json::Value> = sample_rows()
        .iter()
        .map(|(db, question, query)| json!({"db_id": db, "question": question, "query": query}))
        .collect();
    std::fs::write(
        root.join("dev.json"),
        serde_json::to_string_pretty(&questions)?,
    )?;

    std::fs::write(
        root.join("tables.json"),
        serde_json::to_string_pretty(&tables_catalog())?,
    )?;

    std::fs::write(
        root.join("domains.csv"),
        "db_id,domain\nflights,Travel\nschool,Education\nshop,Retail\n",
    )?;

    for db in ["shop", "school", "flights"] {
        let dir = root.join("database").join(db);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{db}.sqlite"));
        if path.exists() {
            std::fs::remove_file(&path)?;
        }
        let conn = Connection::open(&path).map_err(sqlite_io)?;
        conn.execute_batch("PRAGMA journal_mode=MEMORY; PRAGMA synchronous=OFF; BEGIN;")
            .map_err(sqlite_io)?;
        match db {
            "shop" => populate_shop(&conn),
            "school" => populate_school(&conn),
            _ => populate_flights(&conn),
        }
        .map_err(sqlite_io)?;
        conn.execute_batch("COMMIT;").map_err(sqlite_io)?;
    }
    Ok(())
}

fn sqlite_io(e: rusqlite::Error) -> io::Error {
    io::Error::other(e)
}

fn tables_catalog() -> serde_json::Value {
    json!([
        {
            "db_id": "flights",
            "table_names_original": ["flights", "airports"],
            "table_names": ["flights", "airports"],
            "column_names_original": [
                [-1, "*"],
                [0, "id"], [0, "origin"], [0, "dest"], [0, "delay"],
                [1, "code"], [1, "city"]
            ],
            "column_names": [
                [-1, "*"],
                [0, "id"], [0, "origin"], [0, "destination"], [0, "delay"],
                [1, "code"], [1, "city"]
            ],
            "column_types": ["text", "number", "text", "text", "number", "text", "text"],
            "primary_keys": [1, 5],
            "foreign_keys": [[2, 5], [3, 5]]
        },
        {
            "db_id": "school",
            "table_names_original": ["students", "courses", "enrollments"],
            "table_names": ["students", "courses", "enrollments"],
            "column_names_original": [
                [-1, "*"],
                [0, "id"], [0, "name"], [0, "age"], [0, "gpa"],
                [1, "id"], [1, "title"], [1, "credits"],
                [2, "student_id"], [2, "course_id"], [2, "grade"]
            ],
            "column_names": [
                [-1, "*"],
                [0, "id"], [0, "name"], [0, "age"], [0, "gpa"],
                [1, "id"], [1, "title"], [1, "credits"],
                [2, "student id"], [2, "course id"], [2, "grade"]
            ],
            "column_types": [
                "text", "number", "text", "number", "number",
                "number", "text", "number", "number", "number", "number"
            ],
            "primary_keys": [1, 5],
            "foreign_keys": [[8, 1], [9, 5]]
        },
        {
            "db_id": "shop",
            "table_names_original": ["products", "categories"],
            "table_names": ["products", "categories"],
            "column_names_original": [
                [-1, "*"],
                [0, "id"], [0, "name"], [0, "price"], [0, "category_id"],
                [1, "id"], [1, "name"]
            ],
            "column_names": [
                [-1, "*"],
                [0, "id"], [0, "name"], [0, "price"], [0, "category id"],
                [1, "id"], [1, "name"]
            ],
            "column_types": ["text", "number", "text", "number", "number", "number", "text"],
            "primary_keys": [1, 5],
            "foreign_keys": [[4, 5]]
        }
    ])
}

fn populate_shop(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE categories (id INTEGER PRIMARY KEY, name TEXT);
         CREATE TABLE products (
             id INTEGER PRIMARY KEY,
             name TEXT,
             price REAL,
             category_id INTEGER REFERENCES categories(id)
         );",
    )?;
    let categories = ["Electronics", "Toys", "Books", "Garden", "Kitchen"];
    for (i, name) in categories.iter().enumerate() {
        conn.execute(
            "INSERT INTO categories (id, name) VALUES (?1, ?2)",
            (i as i64 + 1, name),
        )?;
    }
    let mut insert = conn
        .prepare("INSERT INTO products (id, name, price, category_id) VALUES (?1, ?2, ?3, ?4)")?;
    for i in 1..=300i64 {
        let price = 2.5 + ((i * 37) % 200) as f64 * 0.5;
        let category = (i % 5) + 1;
        insert.execute((i, format!("product-{i:03}"), price, category))?;
    }
    Ok(())
}

fn populate_school(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE students (id INTEGER PRIMARY KEY, name TEXT, age INTEGER, gpa REAL);
         CREATE TABLE courses (id INTEGER PRIMARY KEY, title TEXT, credits INTEGER);
         CREATE TABLE enrollments (
             student_id INTEGER REFERENCES students(id),
             course_id INTEGER REFERENCES courses(id),
             grade REAL
         );",
    )?;
    let mut insert =
        conn.prepare("INSERT INTO students (id, name, age, gpa) VALUES (?1, ?2, ?3, ?4)")?;
    for i in 1..=200i64 {
        let age = 17 + ((i * 13) % 14);
        // 7 and 200 are coprime: every student gets a distinct GPA, so
        // ORDER BY gpa is total and LIMIT cutoffs are unambiguous.
        let gpa = 2.0 + ((i * 7) % 200) as f64 * 0.01;
        insert.execute((i, format!("student-{i:03}"), age, gpa))?;
    }
    let mut insert =
        conn.prepare("INSERT INTO courses (id, title, credits) VALUES (?1, ?2, ?3)")?;
    for i in 1..=30i64 {
        insert.execute((i, format!("course-{i:02}"), 1 + (i % 5)))?;
    }
    let mut insert =
        conn.prepare("INSERT INTO enrollments (student_id, course_id, grade) VALUES (?1, ?2, ?3)")?;
    for i in 0..600i64 {
        let student = (i * 11) % 200 + 1;
        let course = (i * 17) % 30 + 1;
        // Per-student base keeps strong and weak students apart, so the
        // averaged-grade fixtures have non-empty results on both tails.
        let grade = 40.5 + ((student * 7) % 45) as f64 + ((i * 23) % 15) as f64;
        insert.execute((student, course, grade))?;
    }
    Ok(())
}

fn populate_flights(conn: &Connection) -> rusqlite::Result<()> {
    conn.execute_batch(
        "CREATE TABLE airports (code TEXT PRIMARY KEY, city TEXT);
         CREATE TABLE flights (
             id INTEGER PRIMARY KEY,
             origin TEXT REFERENCES airports(code),
             dest TEXT REFERENCES airports(code),
             delay INTEGER
         );",
    )?;
    let airports = [
        ("JFK", "New York"),
        ("LAX", "Los Angeles"),
        ("ORD", "Chicago"),
        ("SFO", "San Francisco"),
        ("SEA", "Seattle"),
        ("MIA", "Miami"),
        ("DEN", "Denver"),
        ("BOS", "Boston"),
    ];
    for (code, city) in airports {
        conn.execute(
            "INSERT INTO airports (code, city) VALUES (?1, ?2)",
            (code, city),
        )?;
    }
    let mut insert =
        conn.prepare("INSERT INTO flights (id, origin, dest, delay) VALUES (?1, ?2, ?3, ?4)")?;
    for i in 1..=400i64 {
        let origin = airports[((i * 3) % 8) as usize].0;
        let mut dest = airports[((i * 5 + 1) % 8) as usize].0;
        if dest == origin {
            dest = airports[((i * 5 + 2) % 8) as usize].0;
        }
        let delay = (i * 29) % 120;
        insert.execute((i, origin, dest, delay))?;
    }
    Ok(())
}

/// Write a JSON prediction file mapping every sample to its own gold SQL.
pub fn write_identity_predictions(
    path: &Path,
    benchmark: &crate::benchmark::Benchmark,
) -> io::Result<()> {
    let map: std::collections::BTreeMap<&str, &str> = benchmark
        .samples
        .iter()
        .map(|s| (s.sample_id.as_str(), s.gold_sql.as_str()))
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&map)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{group_variants, load_benchmark, schema_stats, BenchmarkFormat};
    use crate::sql::{classify_hardness, Hardness, HardnessRules};

    #[test]
    fn characteristic_counts_match_hand_counts() {
        let dir = tempfile::tempdir().unwrap();
        write_mini_benchmark(dir.path()).unwrap();
        let b = load_benchmark(dir.path(), BenchmarkFormat::SpiderJson).unwrap();
        let profiles = b.profiles();
        assert_eq!(profiles.len(), expected::SAMPLE_COUNT);

        let count = |f: &dyn Fn(&crate::sql::SqlProfile) -> bool| {
            profiles.values().filter(|p| f(p)).count()
        };
        assert_eq!(count(&|p| p.subquery_count >= 1), expected::HAS_SUBQUERY);
        assert_eq!(count(&|p| p.join_count >= 1), expected::HAS_JOIN);
        assert_eq!(count(&|p| p.has_order_by), expected::HAS_ORDERBY);
        assert_eq!(
            count(&|p| p.logical_connector_count >= 1),
            expected::HAS_CONNECTOR
        );
    }

    #[test]
    fn hardness_spread_matches_hand_counts() {
        let dir = tempfile::tempdir().unwrap();
        write_mini_benchmark(dir.path()).unwrap();
        let b = load_benchmark(dir.path(), BenchmarkFormat::SpiderJson).unwrap();
        let rules = HardnessRules::default();
        let mut counts = [0usize; 4];
        for profile in b.profiles().values() {
            counts[classify_hardness(profile, &rules) as usize] += 1;
        }
        assert_eq!(counts[Hardness::Easy as usize], expected::EASY);
        assert_eq!(counts[Hardness::Medium as usize], expected::MEDIUM);
        assert_eq!(counts[Hardness::Hard as usize], expected::HARD);
        assert_eq!(counts[Hardness::Extra as usize], expected::EXTRA);
    }

    #[test]
    fn variant_groups_match_hand_counts() {
        let dir = tempfile::tempdir().unwrap();
        write_mini_benchmark(dir.path()).unwrap();
        let b = load_benchmark(dir.path(), BenchmarkFormat::SpiderJson).unwrap();
        let groups = group_variants(&b);
        assert_eq!(groups.len(), expected::GROUP_COUNT);
        assert_eq!(
            groups.iter().filter(|g| g.qvt_eligible()).count(),
            expected::QVT_ELIGIBLE_GROUPS
        );
        let total: usize = groups.iter().map(|g| g.m).sum();
        assert_eq!(total, expected::SAMPLE_COUNT);
    }

    #[test]
    fn fixture_schema_stats() {
        let dir = tempfile::tempdir().unwrap();
        write_mini_benchmark(dir.path()).unwrap();
        let b = load_benchmark(dir.path(), BenchmarkFormat::SpiderJson).unwrap();
        let stats = schema_stats(&b);
        assert_eq!(stats.tables_per_db.min, 2);
        assert_eq!(stats.tables_per_db.max, 3);
        assert_eq!(stats.tables_per_db.mean, 2.3);
        assert_eq!(stats.columns_per_db.mean, 7.3);
        assert_eq!(stats.fks_per_db.mean, 1.7);
    }

    #[test]
    fn all_gold_queries_execute_with_rows() {
        let dir = tempfile::tempdir().unwrap();
        write_mini_benchmark(dir.path()).unwrap();
        for (db, _, sql) in sample_rows() {
            let path = dir
                .path()
                .join("database")
                .join(db)
                .join(format!("{db}.sqlite"));
            let conn = Connection::open(&path).unwrap();
            let mut stmt = conn.prepare(sql).unwrap();
            let rows: Vec<i32> = stmt
                .query_map([], |_| Ok(0))
                .unwrap()
                .collect::<Result<_, _>>()
                .unwrap();
            // Non-trivial result sets keep correctness comparisons honest.
            assert!(!rows.is_empty(), "{db}: empty result for {sql}");
        }
    }
}
