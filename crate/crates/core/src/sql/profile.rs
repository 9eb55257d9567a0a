//! Structural profiling of parsed SQL.
//!
//! [`profile`] walks the whole tree (including subqueries) and counts the
//! characteristics used for scenario slicing, plus the top-level-only
//! component counts that feed hardness classification.

use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    Expr, GroupByExpr, Join, JoinConstraint, JoinOperator, LimitClause, OrderByKind, Query, Select,
    SelectItem, SetExpr, Statement, TableFactor,
};
use std::collections::BTreeSet;

use super::hardness::ComponentCounts;
use super::SqlAst;

/// Keyword tags collected into [`SqlProfile::keyword_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqlKeyword {
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
    Join,
    Union,
    Intersect,
    Except,
    Case,
    Iif,
    Like,
    In,
    Exists,
    Between,
    Distinct,
}

/// Per-query characteristic vector. Counts span the whole tree, subqueries
/// included; [`SqlProfile::components`] holds the separate top-level counts
/// used by hardness classification.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SqlProfile {
    /// Nested SELECTs: expression subqueries, derived tables, and CTEs.
    /// Set-operation arms are not subqueries.
    pub subquery_count: u32,
    /// Explicit JOIN keywords (plus linked comma-joins when enabled).
    pub join_count: u32,
    /// AND/OR occurrences in WHERE and HAVING predicate trees, at every
    /// nesting level. BETWEEN's implicit AND is not counted.
    pub logical_connector_count: u32,
    /// ORDER BY present anywhere in the tree.
    pub has_order_by: bool,
    pub keyword_set: BTreeSet<SqlKeyword>,
    /// Aggregate function calls (COUNT/SUM/AVG/MIN/MAX/TOTAL/GROUP_CONCAT)
    /// anywhere in the tree.
    pub aggregate_count: u32,
    /// Projection length of the outermost SELECT (leftmost arm under set
    /// operations); 0 for non-query statements.
    pub select_column_count: u32,
    /// Leaf predicates of WHERE boolean trees across the whole tree.
    pub where_predicate_count: u32,
    /// Top-level component counts feeding [`classify_hardness`].
    ///
    /// [`classify_hardness`]: super::classify_hardness
    pub components: ComponentCounts,
}

/// Knobs for [`profile_with_options`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileOptions {
    /// Also count implicit comma-joins that are linked by a WHERE equality
    /// between columns of two different tables. Off by default: Spider gold
    /// SQL uses explicit JOINs, BIRD occasionally uses comma syntax.
    pub count_comma_joins: bool,
}

/// Profile with default options.
pub fn profile(ast: &SqlAst) -> SqlProfile {
    profile_with_options(ast, ProfileOptions::default())
}

pub fn profile_with_options(ast: &SqlAst, opts: ProfileOptions) -> SqlProfile {
    let mut w = Walker {
        opts,
        p: SqlProfile::default(),
    };
    if let Statement::Query(q) = ast.statement() {
        w.walk_query(q, true);
        w.p.components = ComponentCounts::from_query(q);
    }
    w.p
}

struct Walker {
    opts: ProfileOptions,
    p: SqlProfile,
}

impl Walker {
    fn walk_query(&mut self, q: &Query, is_root: bool) {
        if let Some(with) = &q.with {
            for cte in &with.cte_tables {
                self.p.subquery_count += 1;
                self.walk_query(&cte.query, false);
            }
        }
        self.walk_set_expr(&q.body, is_root);
        if let Some(order_by) = &q.order_by {
            self.p.has_order_by = true;
            self.p.keyword_set.insert(SqlKeyword::OrderBy);
            if let OrderByKind::Expressions(exprs) = &order_by.kind {
                for e in exprs {
                    self.walk_expr(&e.expr);
                }
            }
        }
        if let Some(limit) = &q.limit_clause {
            self.p.keyword_set.insert(SqlKeyword::Limit);
            match limit {
                LimitClause::LimitOffset { limit, offset, .. } => {
                    if let Some(e) = limit {
                        self.walk_expr(e);
                    }
                    if let Some(o) = offset {
                        self.walk_expr(&o.value);
                    }
                }
                LimitClause::OffsetCommaLimit { offset, limit } => {
                    self.walk_expr(offset);
                    self.walk_expr(limit);
                }
            }
        }
    }

    fn walk_set_expr(&mut self, body: &SetExpr, is_root: bool) {
        match body {
            SetExpr::Select(select) => self.walk_select(select, is_root),
            // Parenthesized arm: same query level, not a nested SELECT.
            SetExpr::Query(q) => self.walk_query(q, is_root),
            SetExpr::SetOperation {
                left, op, right, ..
            } => {
                self.p.keyword_set.insert(match op {
                    sqlparser::ast::SetOperator::Union => SqlKeyword::Union,
                    sqlparser::ast::SetOperator::Intersect => SqlKeyword::Intersect,
                    sqlparser::ast::SetOperator::Except => SqlKeyword::Except,
                    _ => SqlKeyword::Union,
                });
                self.walk_set_expr(left, is_root);
                self.walk_set_expr(right, false);
            }
            SetExpr::Values(values) => {
                for row in &values.rows {
                    for e in row.iter() {
                        self.walk_expr(e);
                    }
                }
            }
            _ => {}
        }
    }

    fn walk_select(&mut self, select: &Select, is_root: bool) {
        if is_root && self.p.select_column_count == 0 {
            self.p.select_column_count = select.projection.len() as u32;
        }
        if select.distinct.is_some() {
            self.p.keyword_set.insert(SqlKeyword::Distinct);
        }
        for item in &select.projection {
            match item {
                SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => {
                    self.walk_expr(e)
                }
                _ => {}
            }
        }
        for twj in &select.from {
            self.walk_table_factor(&twj.relation);
            for join in &twj.joins {
                self.walk_join(join);
            }
        }
        if self.opts.count_comma_joins && select.from.len() > 1 {
            if let Some(where_clause) = &select.selection {
                if has_cross_table_equality(where_clause) {
                    self.p.join_count += (select.from.len() - 1) as u32;
                }
            }
        }
        if let Some(where_clause) = &select.selection {
            self.p.keyword_set.insert(SqlKeyword::Where);
            self.p.logical_connector_count += count_connectors(where_clause);
            self.p.where_predicate_count += count_predicate_leaves(where_clause);
            self.walk_expr(where_clause);
        }
        if let GroupByExpr::Expressions(exprs, _) = &select.group_by {
            if !exprs.is_empty() {
                self.p.keyword_set.insert(SqlKeyword::GroupBy);
                for e in exprs {
                    self.walk_expr(e);
                }
            }
        }
        if let Some(having) = &select.having {
            self.p.keyword_set.insert(SqlKeyword::Having);
            self.p.logical_connector_count += count_connectors(having);
            self.walk_expr(having);
        }
    }

    fn walk_join(&mut self, join: &Join) {
        let counted = !matches!(
            join.join_operator,
            JoinOperator::CrossApply | JoinOperator::OuterApply
        );
        if counted {
            self.p.join_count += 1;
            self.p.keyword_set.insert(SqlKeyword::Join);
        }
        self.walk_table_factor(&join.relation);
        if let Some(JoinConstraint::On(e)) = join_constraint(&join.join_operator) {
            self.walk_expr(e);
        }
    }

    fn walk_table_factor(&mut self, factor: &TableFactor) {
        match factor {
            TableFactor::Table { .. } => {}
            TableFactor::Derived { subquery, .. } => {
                self.p.subquery_count += 1;
                self.walk_query(subquery, false);
            }
            TableFactor::NestedJoin {
                table_with_joins, ..
            } => {
                self.walk_table_factor(&table_with_joins.relation);
                for join in &table_with_joins.joins {
                    self.walk_join(join);
                }
            }
            _ => {}
        }
    }

    fn walk_expr(&mut self, expr: &Expr) {
        match expr {
            Expr::Subquery(q) => {
                self.p.subquery_count += 1;
                self.walk_query(q, false);
                return;
            }
            Expr::InSubquery { expr, subquery, .. } => {
                self.p.keyword_set.insert(SqlKeyword::In);
                self.p.subquery_count += 1;
                self.walk_expr(expr);
                self.walk_query(subquery, false);
                return;
            }
            Expr::Exists { subquery, .. } => {
                self.p.keyword_set.insert(SqlKeyword::Exists);
                self.p.subquery_count += 1;
                self.walk_query(subquery, false);
                return;
            }
            Expr::InList { .. } => {
                self.p.keyword_set.insert(SqlKeyword::In);
            }
            Expr::Between { .. } => {
                self.p.keyword_set.insert(SqlKeyword::Between);
            }
            Expr::Like { .. } | Expr::ILike { .. } => {
                self.p.keyword_set.insert(SqlKeyword::Like);
            }
            Expr::Case { .. } => {
                self.p.keyword_set.insert(SqlKeyword::Case);
            }
            Expr::Function(f) => {
                let name = function_name(f);
                if name == "iif" {
                    self.p.keyword_set.insert(SqlKeyword::Iif);
                }
                if is_aggregate_name(&name) {
                    self.p.aggregate_count += 1;
                }
            }
            _ => {}
        }
        for_each_child_expr(expr, &mut |child| self.walk_expr(child));
    }
}

pub(crate) fn join_constraint(op: &JoinOperator) -> Option<&JoinConstraint> {
    use JoinOperator::*;
    match op {
        Join(c) | Inner(c) | Left(c) | LeftOuter(c) | Right(c) | RightOuter(c) | FullOuter(c)
        | CrossJoin(c) | Semi(c) | LeftSemi(c) | RightSemi(c) | Anti(c) | LeftAnti(c)
        | RightAnti(c) | StraightJoin(c) => Some(c),
        AsOf { constraint, .. } => Some(constraint),
        _ => None,
    }
}

pub(crate) fn function_name(f: &sqlparser::ast::Function) -> String {
    f.name
        .0
        .last()
        .map(|part| part.to_string().to_ascii_lowercase())
        .unwrap_or_default()
}

pub(crate) fn is_aggregate_name(name: &str) -> bool {
    matches!(
        name,
        "count" | "sum" | "avg" | "min" | "max" | "total" | "group_concat"
    )
}

/// AND/OR occurrences in a predicate tree.
pub(crate) fn count_connectors(expr: &Expr) -> u32 {
    use sqlparser::ast::BinaryOperator::{And, Or};
    let mut n = 0;
    match expr {
        Expr::BinaryOp {
            left,
            op: And | Or,
            right,
        } => {
            n += 1 + count_connectors(left) + count_connectors(right);
        }
        Expr::Nested(inner) => n += count_connectors(inner),
        Expr::UnaryOp { expr, .. } => n += count_connectors(expr),
        _ => {}
    }
    n
}

/// Leaves of the AND/OR tree: each non-connector node is one predicate.
pub(crate) fn count_predicate_leaves(expr: &Expr) -> u32 {
    use sqlparser::ast::BinaryOperator::{And, Or};
    match expr {
        Expr::BinaryOp {
            left,
            op: And | Or,
            right,
        } => count_predicate_leaves(left) + count_predicate_leaves(right),
        Expr::Nested(inner) => count_predicate_leaves(inner),
        Expr::UnaryOp { expr, .. } => count_predicate_leaves(expr),
        _ => 1,
    }
}

// Equality between columns qualified by two different tables, anywhere in
// the predicate tree: the signal that a comma-join is a real join.
fn has_cross_table_equality(expr: &Expr) -> bool {
    let mut found = false;
    fn qualifier(e: &Expr) -> Option<String> {
        match e {
            Expr::CompoundIdentifier(parts) if parts.len() >= 2 => {
                Some(parts[parts.len() - 2].value.to_ascii_lowercase())
            }
            _ => None,
        }
    }
    fn walk(e: &Expr, found: &mut bool) {
        if let Expr::BinaryOp { left, op, right } = e {
            if matches!(op, sqlparser::ast::BinaryOperator::Eq) {
                if let (Some(a), Some(b)) = (qualifier(left), qualifier(right)) {
                    if a != b {
                        *found = true;
                    }
                }
            }
        }
        for_each_child_expr(e, &mut |child| walk(child, found));
    }
    walk(expr, &mut found);
    found
}

/// Apply `f` to every direct sub-expression. Subqueries are not descended
/// into here; callers handle Query-bearing variants themselves.
pub(crate) fn for_each_child_expr(expr: &Expr, f: &mut dyn FnMut(&Expr)) {
    use Expr::*;
    match expr {
        BinaryOp { left, right, .. } => {
            f(left);
            f(right);
        }
        UnaryOp { expr, .. } => f(expr),
        Nested(inner) => f(inner),
        IsNull(e) | IsNotNull(e) | IsTrue(e) | IsNotTrue(e) | IsFalse(e) | IsNotFalse(e) => f(e),
        InList { expr, list, .. } => {
            f(expr);
            for e in list {
                f(e);
            }
        }
        Between {
            expr, low, high, ..
        } => {
            f(expr);
            f(low);
            f(high);
        }
        Like { expr, pattern, .. } | ILike { expr, pattern, .. } => {
            f(expr);
            f(pattern);
        }
        Cast { expr, .. } => f(expr),
        Case {
            operand,
            conditions,
            else_result,
            ..
        } => {
            if let Some(op) = operand {
                f(op);
            }
            for when in conditions {
                f(&when.condition);
                f(&when.result);
            }
            if let Some(e) = else_result {
                f(e);
            }
        }
        Function(func) => {
            if let sqlparser::ast::FunctionArguments::List(list) = &func.args {
                for arg in &list.args {
                    match arg {
                        sqlparser::ast::FunctionArg::Unnamed(fae)
                        | sqlparser::ast::FunctionArg::Named { arg: fae, .. }
                        | sqlparser::ast::FunctionArg::ExprNamed { arg: fae, .. } => {
                            if let sqlparser::ast::FunctionArgExpr::Expr(e) = fae {
                                f(e);
                            }
                        }
                    }
                }
            }
        }
        Tuple(items) => {
            for e in items {
                f(e);
            }
        }
        AnyOp { left, right, .. } | AllOp { left, right, .. } => {
            f(left);
            f(right);
        }
        Substring {
            expr,
            substring_from,
            substring_for,
            ..
        } => {
            f(expr);
            if let Some(e) = substring_from {
                f(e);
            }
            if let Some(e) = substring_for {
                f(e);
            }
        }
        InSubquery { expr, .. } => f(expr),
        Exists { .. } | Subquery(_) => {}
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::{parse_sql, Dialect};

    fn p(sql: &str) -> SqlProfile {
        profile(&parse_sql(sql, Dialect::Sqlite).unwrap())
    }

    #[test]
    fn counts_joins_directly() {
        let prof = p("SELECT * FROM a JOIN b ON a.x = b.x JOIN c ON b.y = c.y");
        assert_eq!(prof.join_count, 2);
        assert_eq!(prof.subquery_count, 0);
        assert_eq!(prof.logical_connector_count, 0);
        assert!(!prof.has_order_by);
    }

    #[test]
    fn counts_connectors_and_order_by() {
        let prof = p("SELECT x FROM t WHERE p = 1 AND q = 2 OR r = 3 ORDER BY x");
        assert_eq!(prof.logical_connector_count, 2);
        assert!(prof.has_order_by);
        assert_eq!(prof.where_predicate_count, 3);
    }

    #[test]
    fn counts_subquery_connectors() {
        // Hand count over the predicate tree: the only connector is the AND
        // inside the subquery's WHERE.
        let prof = p("SELECT x FROM t WHERE x IN (SELECT y FROM u WHERE z = 1 AND w = 2)");
        assert_eq!(prof.subquery_count, 1);
        assert_eq!(prof.logical_connector_count, 1);
    }

    #[test]
    fn between_implicit_and_not_counted() {
        let prof = p("SELECT x FROM t WHERE x BETWEEN 1 AND 5");
        assert_eq!(prof.logical_connector_count, 0);
        assert!(prof.keyword_set.contains(&SqlKeyword::Between));
    }

    #[test]
    fn join_on_connectors_not_counted() {
        let prof = p("SELECT * FROM a JOIN b ON a.x = b.x AND a.y = b.y");
        assert_eq!(prof.logical_connector_count, 0);
        assert_eq!(prof.join_count, 1);
    }

    #[test]
    fn set_operation_arms_are_not_subqueries() {
        let prof = p("SELECT a FROM t INTERSECT SELECT b FROM u");
        assert_eq!(prof.subquery_count, 0);
        assert!(prof.keyword_set.contains(&SqlKeyword::Intersect));
    }

    #[test]
    fn keyword_set_collects_case_and_iif() {
        let prof = p("SELECT CASE WHEN x > 0 THEN IIF(y > 0, 1, 0) ELSE 2 END FROM t LIMIT 3");
        assert!(prof.keyword_set.contains(&SqlKeyword::Case));
        assert!(prof.keyword_set.contains(&SqlKeyword::Iif));
        assert!(prof.keyword_set.contains(&SqlKeyword::Limit));
    }

    #[test]
    fn aggregates_counted_across_tree() {
        let prof = p("SELECT COUNT(*), AVG(x) FROM t WHERE y > (SELECT MAX(y) FROM t)");
        assert_eq!(prof.aggregate_count, 3);
    }

    #[test]
    fn comma_join_counted_only_with_flag() {
        let sql = "SELECT * FROM a, b WHERE a.x = b.x";
        let base = p(sql);
        assert_eq!(base.join_count, 0);
        let with_flag = profile_with_options(
            &parse_sql(sql, Dialect::Sqlite).unwrap(),
            ProfileOptions {
                count_comma_joins: true,
            },
        );
        assert_eq!(with_flag.join_count, 1);
    }

    #[test]
    fn comma_without_link_is_not_a_join() {
        let with_flag = profile_with_options(
            &parse_sql("SELECT * FROM a, b WHERE a.x = 1", Dialect::Sqlite).unwrap(),
            ProfileOptions {
                count_comma_joins: true,
            },
        );
        assert_eq!(with_flag.join_count, 0);
    }

    #[test]
    fn wrapping_adds_exactly_one_subquery() {
        let inner = "SELECT x FROM t WHERE p = 1 AND q = 2";
        let wrapped = format!("SELECT * FROM ({inner}) sub");
        let a = p(inner);
        let b = p(&wrapped);
        assert_eq!(b.subquery_count, a.subquery_count + 1);
        assert_eq!(b.logical_connector_count, a.logical_connector_count);
    }
}
