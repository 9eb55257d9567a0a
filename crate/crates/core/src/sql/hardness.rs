//! Four-tier SQL complexity classification.
//!
//! The default rule set is the Spider component-counting heuristic: three
//! counters (clause components, nesting components, "others") are reduced to
//! Easy/Medium/Hard/Extra through threshold bands. Rules are plain data so
//! alternative rule sets can be loaded from disk.

use serde::{Deserialize, Serialize};
use sqlparser::ast::{
    Expr, GroupByExpr, JoinConstraint, LimitClause, OrderByKind, Query, Select, SelectItem,
    SetExpr, TableFactor,
};
use std::fmt;

use super::profile::{
    count_predicate_leaves, for_each_child_expr, function_name, is_aggregate_name, join_constraint,
};
use super::SqlProfile;

/// Spider's four complexity tiers, totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hardness {
    Easy,
    Medium,
    Hard,
    Extra,
}

impl fmt::Display for Hardness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hardness::Easy => write!(f, "easy"),
            Hardness::Medium => write!(f, "medium"),
            Hardness::Hard => write!(f, "hard"),
            Hardness::Extra => write!(f, "extra"),
        }
    }
}

impl std::str::FromStr for Hardness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(Hardness::Easy),
            "medium" | "med" => Ok(Hardness::Medium),
            "hard" => Ok(Hardness::Hard),
            "extra" => Ok(Hardness::Extra),
            other => Err(format!("unknown hardness tier: {other}")),
        }
    }
}

/// Top-level component counts, extracted from the outermost query only
/// (nested queries contribute to `nesting` as units, not their clauses).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComponentCounts {
    /// WHERE present + GROUP BY present + ORDER BY present + LIMIT present
    /// + (table units - 1) + OR count + LIKE count.
    pub clause_components: u32,
    /// Direct subqueries of the top-level query plus set operations.
    pub nesting_components: u32,
    /// Flags among: >1 aggregate, >1 select column, >1 WHERE condition,
    /// >1 GROUP BY column.
    pub others: u32,
}

impl ComponentCounts {
    pub(crate) fn from_query(q: &Query) -> Self {
        let mut set_ops = 0u32;
        let select = leftmost_select(&q.body, &mut set_ops);

        let mut clause = 0u32;
        let mut nested = set_ops;
        let mut agg_count = 0u32;
        let mut select_cols = 0u32;
        let mut where_conds = 0u32;
        let mut group_cols = 0u32;

        if let Some(with) = &q.with {
            nested += with.cte_tables.len() as u32;
        }
        if q.order_by.is_some() {
            clause += 1;
        }
        if let Some(order_by) = &q.order_by {
            if let OrderByKind::Expressions(exprs) = &order_by.kind {
                for e in exprs {
                    agg_count += count_top_aggregates(&e.expr);
                }
            }
        }
        if let Some(limit) = &q.limit_clause {
            let has_limit = match limit {
                LimitClause::LimitOffset { limit, .. } => limit.is_some(),
                LimitClause::OffsetCommaLimit { .. } => true,
            };
            if has_limit {
                clause += 1;
            }
        }

        if let Some(select) = select {
            select_cols = select.projection.len() as u32;
            for item in &select.projection {
                if let SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } = item
                {
                    agg_count += count_top_aggregates(e);
                }
            }

            let mut table_units = 0u32;
            for twj in &select.from {
                table_units += 1;
                if matches!(twj.relation, TableFactor::Derived { .. }) {
                    nested += 1;
                }
                for join in &twj.joins {
                    table_units += 1;
                    if matches!(join.relation, TableFactor::Derived { .. }) {
                        nested += 1;
                    }
                    if let Some(JoinConstraint::On(e)) = join_constraint(&join.join_operator) {
                        clause += count_ops(e, ConnectorKind::Or);
                        clause += count_like(e);
                        nested += count_direct_subqueries(e);
                    }
                }
            }
            clause += table_units.saturating_sub(1);

            if let Some(where_clause) = &select.selection {
                clause += 1;
                clause += count_ops(where_clause, ConnectorKind::Or);
                clause += count_like(where_clause);
                where_conds = count_predicate_leaves(where_clause);
                nested += count_direct_subqueries(where_clause);
                agg_count += count_top_aggregates(where_clause);
            }
            if let GroupByExpr::Expressions(exprs, _) = &select.group_by {
                if !exprs.is_empty() {
                    clause += 1;
                    group_cols = exprs.len() as u32;
                    for e in exprs {
                        agg_count += count_top_aggregates(e);
                    }
                }
            }
            if let Some(having) = &select.having {
                clause += count_ops(having, ConnectorKind::Or);
                clause += count_like(having);
                nested += count_direct_subqueries(having);
                agg_count += count_top_aggregates(having);
            }
        }

        let mut others = 0u32;
        if agg_count > 1 {
            others += 1;
        }
        if select_cols > 1 {
            others += 1;
        }
        if where_conds > 1 {
            others += 1;
        }
        if group_cols > 1 {
            others += 1;
        }

        ComponentCounts {
            clause_components: clause,
            nesting_components: nested,
            others,
        }
    }
}

fn leftmost_select<'a>(body: &'a SetExpr, set_ops: &mut u32) -> Option<&'a Select> {
    match body {
        SetExpr::Select(s) => Some(s),
        SetExpr::Query(q) => leftmost_select(&q.body, set_ops),
        SetExpr::SetOperation { left, .. } => {
            *set_ops += 1;
            leftmost_select(left, set_ops)
        }
        _ => None,
    }
}

enum ConnectorKind {
    Or,
}

fn count_ops(expr: &Expr, _kind: ConnectorKind) -> u32 {
    use sqlparser::ast::BinaryOperator::Or;
    let mut n = 0;
    if let Expr::BinaryOp { op, .. } = expr {
        if matches!(op, Or) {
            n += 1;
        }
    }
    for_each_child_expr(expr, &mut |child| n += count_ops(child, ConnectorKind::Or));
    n
}

fn count_like(expr: &Expr) -> u32 {
    let mut n = 0;
    if matches!(expr, Expr::Like { .. } | Expr::ILike { .. }) {
        n += 1;
    }
    for_each_child_expr(expr, &mut |child| n += count_like(child));
    n
}

// Subqueries hanging directly off this expression tree (depth one; their
// own bodies are not searched further).
fn count_direct_subqueries(expr: &Expr) -> u32 {
    let mut n = 0;
    match expr {
        Expr::Subquery(_) | Expr::InSubquery { .. } | Expr::Exists { .. } => n += 1,
        _ => {}
    }
    for_each_child_expr(expr, &mut |child| n += count_direct_subqueries(child));
    n
}

fn count_top_aggregates(expr: &Expr) -> u32 {
    let mut n = 0;
    if let Expr::Function(f) = expr {
        if is_aggregate_name(&function_name(f)) {
            n += 1;
        }
    }
    for_each_child_expr(expr, &mut |child| n += count_top_aggregates(child));
    n
}

/// Inclusive upper/lower bounds on the three component counters. `None`
/// means unbounded.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ComponentBounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nesting_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nesting_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub others_min: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub others_max: Option<u32>,
}

impl ComponentBounds {
    fn matches(&self, c: &ComponentCounts) -> bool {
        fn within(v: u32, min: Option<u32>, max: Option<u32>) -> bool {
            min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m)
        }
        within(c.clause_components, self.clause_min, self.clause_max)
            && within(c.nesting_components, self.nesting_min, self.nesting_max)
            && within(c.others, self.others_min, self.others_max)
    }
}

/// One tier with the bound sets (ORed together) that admit it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TierRule {
    pub tier: Hardness,
    pub any_of: Vec<ComponentBounds>,
}

/// Versioned, data-driven hardness rule set. Tiers are tried in order and
/// the first match wins; the final tier acts as catch-all, making the rules
/// a total function over profiles.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardnessRules {
    pub id: String,
    pub tiers: Vec<TierRule>,
    pub fallback: Hardness,
}

impl Default for HardnessRules {
    fn default() -> Self {
        Self::spider_v1()
    }
}

impl HardnessRules {
    /// The published Spider component-counting heuristic.
    pub fn spider_v1() -> Self {
        let b = ComponentBounds::default;
        HardnessRules {
            id: "spider-v1".into(),
            tiers: vec![
                TierRule {
                    tier: Hardness::Easy,
                    any_of: vec![ComponentBounds {
                        clause_max: Some(1),
                        others_max: Some(0),
                        nesting_max: Some(0),
                        ..b()
                    }],
                },
                TierRule {
                    tier: Hardness::Medium,
                    any_of: vec![
                        ComponentBounds {
                            others_max: Some(2),
                            clause_max: Some(1),
                            nesting_max: Some(0),
                            ..b()
                        },
                        ComponentBounds {
                            clause_max: Some(2),
                            others_max: Some(1),
                            nesting_max: Some(0),
                            ..b()
                        },
                    ],
                },
                TierRule {
                    tier: Hardness::Hard,
                    any_of: vec![
                        ComponentBounds {
                            others_min: Some(3),
                            clause_max: Some(2),
                            nesting_max: Some(0),
                            ..b()
                        },
                        ComponentBounds {
                            clause_min: Some(3),
                            clause_max: Some(3),
                            others_max: Some(2),
                            nesting_max: Some(0),
                            ..b()
                        },
                        ComponentBounds {
                            clause_max: Some(1),
                            others_max: Some(0),
                            nesting_max: Some(1),
                            ..b()
                        },
                    ],
                },
            ],
            fallback: Hardness::Extra,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Map a profile to exactly one tier. First matching tier (in rule order)
/// wins; unmatched profiles take the rule set's fallback tier.
pub fn classify_hardness(profile: &SqlProfile, rules: &HardnessRules) -> Hardness {
    for tier_rule in &rules.tiers {
        if tier_rule
            .any_of
            .iter()
            .any(|bounds| bounds.matches(&profile.components))
        {
            return tier_rule.tier;
        }
    }
    rules.fallback
}
