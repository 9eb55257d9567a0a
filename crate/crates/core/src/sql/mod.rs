//! SQL parsing and structural analysis.
//!
//! Gold and predicted queries are parsed into an opaque [`SqlAst`], profiled
//! into a [`SqlProfile`] (subqueries, joins, logical connectors, keywords),
//! and classified into a four-tier [`Hardness`] by data-driven
//! [`HardnessRules`]. Everything downstream (scenario slicing, exact-match
//! comparison, reports) works off these three artifacts.

mod canon;
mod hardness;
mod profile;

pub use canon::{em_canonical_key, CanonQuery};
pub use hardness::{classify_hardness, ComponentCounts, Hardness, HardnessRules, TierRule};
pub use profile::{profile, profile_with_options, ProfileOptions, SqlKeyword, SqlProfile};

use serde::{Deserialize, Serialize};
use sqlparser::ast::Statement;
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;
use std::fmt;

/// SQL dialect accepted by the testbed. A single permissive SQLite-flavored
/// dialect covers the subset used by Spider and BIRD gold queries, including
/// `CASE` and `IIF`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dialect {
    #[default]
    Sqlite,
}

/// A parsed SQL statement. Opaque to callers; produced by [`parse_sql`] and
/// consumed by [`profile`], [`render_sql`], and the exact-match canonicalizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlAst {
    pub(crate) statement: Statement,
}

impl SqlAst {
    pub(crate) fn statement(&self) -> &Statement {
        &self.statement
    }

    /// True when the outermost query carries an `ORDER BY` clause. Used to
    /// auto-select order-sensitive result comparison.
    pub fn has_top_level_order_by(&self) -> bool {
        match &self.statement {
            Statement::Query(q) => q.order_by.is_some(),
            _ => false,
        }
    }
}

impl fmt::Display for SqlAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.statement.fmt(f)
    }
}

/// Parse failure with the byte offset of the offending token and the
/// parser's expected-token hint.
#[derive(Debug, Clone, thiserror::Error)]
#[error("parse error at offset {offset}: {message}")]
pub struct ParseError {
    /// Byte offset into the input where parsing failed, when the parser
    /// reported a location; 0 otherwise.
    pub offset: usize,
    /// Parser message, including the expected-token hint when available.
    pub message: String,
}

/// Parse one SQL statement under the given dialect.
///
/// A single trailing semicolon is tolerated; empty input or multiple
/// statements are rejected.
pub fn parse_sql(text: &str, _dialect: Dialect) -> Result<SqlAst, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            offset: 0,
            message: "empty input".into(),
        });
    }
    let dialect = SQLiteDialect {};
    let mut parser = match Parser::new(&dialect).try_with_sql(text) {
        Ok(p) => p,
        Err(err) => {
            let message = err.to_string();
            return Err(ParseError {
                offset: locate_offset(text, &message),
                message,
            });
        }
    };
    let mut statements = match parser.parse_statements() {
        Ok(s) => s,
        Err(err) => {
            // Some failure paths leave the offending token peekable, others
            // consume it first; step back when peek is an empty-span EOF.
            let mut loc = parser.peek_token().span.start;
            if loc.line == 0 {
                parser.prev_token();
                loc = parser.peek_token().span.start;
            }
            let offset = if loc.line == 0 {
                text.len()
            } else {
                offset_at(text, loc.line as usize, loc.column as usize)
            };
            return Err(ParseError {
                offset,
                message: err.to_string(),
            });
        }
    };
    match statements.len() {
        1 => Ok(SqlAst {
            statement: statements.remove(0),
        }),
        0 => Err(ParseError {
            offset: 0,
            message: "no statement found".into(),
        }),
        n => Err(ParseError {
            offset: 0,
            message: format!("expected a single statement, found {n}"),
        }),
    }
}

/// Render an AST back to canonical SQL text (stable casing and spacing).
/// Re-parsing the output yields a structurally identical AST.
pub fn render_sql(ast: &SqlAst) -> String {
    ast.to_string()
}

// Tokenizer errors only embed "at Line: X, Column: Y" in their message.
fn locate_offset(text: &str, message: &str) -> usize {
    let Some(pos) = message.rfind("Line: ") else {
        return 0;
    };
    let tail = &message[pos + "Line: ".len()..];
    let mut parts = tail.splitn(2, ", Column: ");
    let line = parts.next().and_then(|s| s.trim().parse().ok());
    let col = parts.next().and_then(|s| s.trim().parse().ok());
    match (line, col) {
        (Some(line), Some(col)) => offset_at(text, line, col),
        _ => 0,
    }
}

// Byte offset of a 1-based (line, column) position; columns count
// characters.
fn offset_at(text: &str, line: usize, col: usize) -> usize {
    if line == 0 || col == 0 {
        return 0;
    }
    let mut cur_line = 1usize;
    let mut cur_col = 1usize;
    for (idx, ch) in text.char_indices() {
        if cur_line == line && cur_col == col {
            return idx;
        }
        if ch == '\n' {
            cur_line += 1;
            cur_col = 1;
        } else {
            cur_col += 1;
        }
    }
    text.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_statement() {
        let ast = parse_sql("SELECT 1", Dialect::Sqlite).unwrap();
        let p = profile(&ast);
        assert_eq!(p.select_column_count, 1);
        assert_eq!(p.subquery_count, 0);
        assert_eq!(p.join_count, 0);
    }

    #[test]
    fn parses_nested_subquery() {
        let ast = parse_sql(
            "SELECT a FROM t WHERE b > (SELECT MAX(b) FROM t)",
            Dialect::Sqlite,
        )
        .unwrap();
        assert_eq!(profile(&ast).subquery_count, 1);
    }

    #[test]
    fn reports_offset_for_invalid_sql() {
        let err = parse_sql("SELECT FROM", Dialect::Sqlite).unwrap_err();
        assert_eq!(err.offset, 7);
        assert!(err.message.contains("Expected"), "hint: {}", err.message);
    }

    #[test]
    fn rejects_empty_input() {
        assert!(parse_sql("   ", Dialect::Sqlite).is_err());
    }

    #[test]
    fn rejects_multiple_statements() {
        assert!(parse_sql("SELECT 1; SELECT 2", Dialect::Sqlite).is_err());
    }

    #[test]
    fn render_is_canonical() {
        let ast = parse_sql("select  1", Dialect::Sqlite).unwrap();
        assert_eq!(render_sql(&ast), "SELECT 1");
    }

    #[test]
    fn render_preserves_order_by() {
        let ast = parse_sql("SELECT a FROM t ORDER BY a", Dialect::Sqlite).unwrap();
        let rendered = render_sql(&ast);
        assert!(rendered.contains("ORDER BY"), "{rendered}");
        let reparsed = parse_sql(&rendered, Dialect::Sqlite).unwrap();
        assert_eq!(ast, reparsed);
    }

    #[test]
    fn round_trip_is_structural_identity() {
        let corpus = [
            "SELECT name FROM students WHERE age > 20",
            "SELECT a, COUNT(*) FROM t GROUP BY a ORDER BY COUNT(*) DESC LIMIT 1",
            "SELECT x FROM t WHERE x IN (SELECT y FROM u WHERE z = 1 AND w = 2)",
            "SELECT * FROM a JOIN b ON a.x = b.x JOIN c ON b.y = c.y",
            "SELECT name FROM t INTERSECT SELECT name FROM u",
            "SELECT CASE WHEN x > 0 THEN 'p' ELSE 'n' END FROM t",
            "SELECT IIF(x > 0, 1, 0) FROM t",
            "SELECT DISTINCT dest FROM flights EXCEPT SELECT origin FROM flights",
        ];
        for sql in corpus {
            let ast = parse_sql(sql, Dialect::Sqlite).unwrap();
            let reparsed = parse_sql(&render_sql(&ast), Dialect::Sqlite).unwrap();
            assert_eq!(ast, reparsed, "round trip failed for {sql}");
        }
    }
}
