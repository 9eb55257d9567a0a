//! Canonical component form for exact-match comparison.
//!
//! Two queries are exact-match equal when their canonical forms agree:
//! clause-wise set equality over select items, tables, join and filter
//! conditions, group-by and order-by (with direction), with
//! case-insensitive identifiers, table aliases resolved away, and literal
//! values replaced by a placeholder, following the Spider convention.

use sqlparser::ast::{
    Distinct, Expr, FunctionArg, FunctionArgExpr, FunctionArguments, GroupByExpr, JoinConstraint,
    LimitClause, ObjectName, OrderByKind, Query, Select, SelectItem,
    SelectItemQualifiedWildcardKind, SetExpr, Statement, TableFactor, UnaryOperator,
};
use std::collections::{BTreeSet, HashMap};

use super::profile::{function_name, join_constraint};
use super::SqlAst;

const VALUE: &str = "?";

/// Canonical form of a query: the unit of exact-match equality and of QVT
/// variant grouping.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonQuery {
    pub ctes: Vec<(String, Box<CanonQuery>)>,
    pub body: CanonBody,
    /// Ordered (expression, ascending) pairs.
    pub order_by: Vec<(String, bool)>,
    /// LIMIT presence; the limit value is a literal and is ignored.
    pub limit: bool,
    pub offset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CanonBody {
    Select(CanonSelect),
    SetOp {
        op: String,
        all: bool,
        left: Box<CanonBody>,
        right: Box<CanonBody>,
    },
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonSelect {
    pub distinct: bool,
    pub select: BTreeSet<String>,
    pub tables: BTreeSet<String>,
    pub join_conds: BTreeSet<String>,
    pub where_clause: Option<String>,
    pub group_by: BTreeSet<String>,
    pub having: Option<String>,
}

impl CanonQuery {
    /// Canonical form of a parsed statement; `None` for non-query statements.
    pub fn of(ast: &SqlAst) -> Option<CanonQuery> {
        match ast.statement() {
            Statement::Query(q) => Some(canon_query(q, &Scope::root())),
            _ => None,
        }
    }

    /// Deterministic string rendering, usable as a grouping key.
    pub fn key(&self) -> String {
        let mut out = String::new();
        self.render(&mut out);
        out
    }

    fn render(&self, out: &mut String) {
        for (name, cte) in &self.ctes {
            out.push_str("with ");
            out.push_str(name);
            out.push_str(" as [");
            cte.render(out);
            out.push_str("] ");
        }
        self.body.render(out);
        if !self.order_by.is_empty() {
            out.push_str(" order by ");
            for (i, (expr, asc)) in self.order_by.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(expr);
                out.push_str(if *asc { " asc" } else { " desc" });
            }
        }
        if self.limit {
            out.push_str(" limit ?");
        }
        if self.offset {
            out.push_str(" offset ?");
        }
    }
}

impl CanonBody {
    fn render(&self, out: &mut String) {
        match self {
            CanonBody::Select(s) => s.render(out),
            CanonBody::SetOp {
                op,
                all,
                left,
                right,
            } => {
                out.push('(');
                left.render(out);
                out.push_str(") ");
                out.push_str(op);
                if *all {
                    out.push_str(" all");
                }
                out.push_str(" (");
                right.render(out);
                out.push(')');
            }
            CanonBody::Other(text) => out.push_str(text),
        }
    }
}

impl CanonSelect {
    fn render(&self, out: &mut String) {
        out.push_str("select ");
        if self.distinct {
            out.push_str("distinct ");
        }
        push_set(out, &self.select);
        out.push_str(" from ");
        push_set(out, &self.tables);
        if !self.join_conds.is_empty() {
            out.push_str(" on ");
            push_set(out, &self.join_conds);
        }
        if let Some(w) = &self.where_clause {
            out.push_str(" where ");
            out.push_str(w);
        }
        if !self.group_by.is_empty() {
            out.push_str(" group by ");
            push_set(out, &self.group_by);
        }
        if let Some(h) = &self.having {
            out.push_str(" having ");
            out.push_str(h);
        }
    }
}

fn push_set(out: &mut String, set: &BTreeSet<String>) {
    for (i, item) in set.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(item);
    }
}

/// Canonical grouping key for a query; distinct keys mean EM-inequal.
pub fn em_canonical_key(ast: &SqlAst) -> String {
    match CanonQuery::of(ast) {
        Some(c) => c.key(),
        None => ast.to_string().to_ascii_lowercase(),
    }
}

// Table-alias scope. Inner queries see outer aliases (correlated
// references), shadowed by their own FROM clause.
struct Scope<'a> {
    aliases: HashMap<String, String>,
    parent: Option<&'a Scope<'a>>,
}

impl<'a> Scope<'a> {
    fn root() -> Scope<'static> {
        Scope {
            aliases: HashMap::new(),
            parent: None,
        }
    }

    fn child(&'a self, aliases: HashMap<String, String>) -> Scope<'a> {
        Scope {
            aliases,
            parent: Some(self),
        }
    }

    fn resolve(&self, qualifier: &str) -> Option<&str> {
        match self.aliases.get(qualifier) {
            Some(t) => Some(t),
            None => self.parent.and_then(|p| p.resolve(qualifier)),
        }
    }
}

fn canon_query(q: &Query, outer: &Scope<'_>) -> CanonQuery {
    let mut ctes = Vec::new();
    if let Some(with) = &q.with {
        for cte in &with.cte_tables {
            ctes.push((
                cte.alias.name.value.to_ascii_lowercase(),
                Box::new(canon_query(&cte.query, outer)),
            ));
        }
    }
    let body = canon_body(&q.body, outer);
    let order_by = match &q.order_by {
        Some(ob) => match &ob.kind {
            OrderByKind::Expressions(exprs) => {
                // Resolve order-by expressions in the scope of the leftmost
                // select's FROM clause.
                let aliases = body_aliases(&q.body);
                let scope = outer.child(aliases);
                exprs
                    .iter()
                    .map(|e| (canon_expr(&e.expr, &scope), e.options.asc.unwrap_or(true)))
                    .collect()
            }
            OrderByKind::All(_) => vec![("all".to_string(), true)],
        },
        None => Vec::new(),
    };
    let (limit, offset) = match &q.limit_clause {
        Some(LimitClause::LimitOffset { limit, offset, .. }) => (limit.is_some(), offset.is_some()),
        Some(LimitClause::OffsetCommaLimit { .. }) => (true, true),
        None => (false, false),
    };
    CanonQuery {
        ctes,
        body,
        order_by,
        limit,
        offset,
    }
}

fn canon_body(body: &SetExpr, outer: &Scope<'_>) -> CanonBody {
    match body {
        SetExpr::Select(select) => CanonBody::Select(canon_select(select, outer)),
        SetExpr::Query(q) => {
            let inner = canon_query(q, outer);
            if inner.order_by.is_empty() && !inner.limit && !inner.offset && inner.ctes.is_empty() {
                inner.body
            } else {
                CanonBody::Other(inner.key())
            }
        }
        SetExpr::SetOperation {
            left,
            op,
            set_quantifier,
            right,
        } => CanonBody::SetOp {
            op: op.to_string().to_ascii_lowercase(),
            all: matches!(set_quantifier, sqlparser::ast::SetQuantifier::All),
            left: Box::new(canon_body(left, outer)),
            right: Box::new(canon_body(right, outer)),
        },
        other => CanonBody::Other(other.to_string().to_ascii_lowercase()),
    }
}

fn body_aliases(body: &SetExpr) -> HashMap<String, String> {
    match body {
        SetExpr::Select(select) => collect_aliases(select),
        SetExpr::Query(q) => body_aliases(&q.body),
        SetExpr::SetOperation { left, .. } => body_aliases(left),
        _ => HashMap::new(),
    }
}

fn collect_aliases(select: &Select) -> HashMap<String, String> {
    let mut aliases = HashMap::new();
    let mut add = |factor: &TableFactor| {
        if let TableFactor::Table { name, alias, .. } = factor {
            let base = object_name_key(name);
            if let Some(a) = alias {
                aliases.insert(a.name.value.to_ascii_lowercase(), base.clone());
            }
            // A table's own name resolves to itself, so `t.x` and
            // `alias.x` canonicalize identically.
            aliases.insert(base.clone(), base);
        } else if let TableFactor::Derived {
            alias: Some(a),
            subquery,
            ..
        } = factor
        {
            let key = format!("[{}]", canon_query(subquery, &Scope::root()).key());
            aliases.insert(a.name.value.to_ascii_lowercase(), key);
        }
    };
    for twj in &select.from {
        add(&twj.relation);
        for join in &twj.joins {
            add(&join.relation);
        }
    }
    aliases
}

fn canon_select(select: &Select, outer: &Scope<'_>) -> CanonSelect {
    let scope = outer.child(collect_aliases(select));

    let mut items = BTreeSet::new();
    for item in &select.projection {
        match item {
            SelectItem::UnnamedExpr(e) | SelectItem::ExprWithAlias { expr: e, .. } => {
                items.insert(canon_expr(e, &scope));
            }
            SelectItem::QualifiedWildcard(kind, _) => {
                let prefix = match kind {
                    SelectItemQualifiedWildcardKind::ObjectName(name) => {
                        let raw = object_name_key(name);
                        scope.resolve(&raw).map(str::to_owned).unwrap_or(raw)
                    }
                    SelectItemQualifiedWildcardKind::Expr(e) => canon_expr(e, &scope),
                };
                items.insert(format!("{prefix}.*"));
            }
            SelectItem::Wildcard(_) => {
                items.insert("*".to_string());
            }
            other => {
                items.insert(other.to_string().to_ascii_lowercase());
            }
        }
    }

    let mut tables = BTreeSet::new();
    let mut join_conds = BTreeSet::new();
    let add_factor = |factor: &TableFactor, tables: &mut BTreeSet<String>| match factor {
        TableFactor::Table { name, .. } => {
            tables.insert(object_name_key(name));
        }
        TableFactor::Derived { subquery, .. } => {
            tables.insert(format!("[{}]", canon_query(subquery, &scope).key()));
        }
        other => {
            tables.insert(other.to_string().to_ascii_lowercase());
        }
    };
    for twj in &select.from {
        add_factor(&twj.relation, &mut tables);
        for join in &twj.joins {
            add_factor(&join.relation, &mut tables);
            match join_constraint(&join.join_operator) {
                Some(JoinConstraint::On(e)) => {
                    join_conds.insert(canon_expr(e, &scope));
                }
                Some(JoinConstraint::Using(cols)) => {
                    let mut names: Vec<String> = cols.iter().map(object_name_key).collect();
                    names.sort();
                    join_conds.insert(format!("using({})", names.join(",")));
                }
                _ => {}
            }
        }
    }

    let group_by = match &select.group_by {
        GroupByExpr::Expressions(exprs, _) => exprs.iter().map(|e| canon_expr(e, &scope)).collect(),
        GroupByExpr::All(_) => std::iter::once("all".to_string()).collect(),
    };

    CanonSelect {
        distinct: matches!(select.distinct, Some(Distinct::Distinct)),
        select: items,
        tables,
        join_conds,
        where_clause: select.selection.as_ref().map(|e| canon_expr(e, &scope)),
        group_by,
        having: select.having.as_ref().map(|e| canon_expr(e, &scope)),
    }
}

fn object_name_key(name: &ObjectName) -> String {
    name.0
        .iter()
        .map(|part| part.to_string().replace('"', "").to_ascii_lowercase())
        .collect::<Vec<_>>()
        .join(".")
}

fn canon_expr(expr: &Expr, scope: &Scope<'_>) -> String {
    use sqlparser::ast::BinaryOperator as Op;
    match expr {
        Expr::Value(_) => VALUE.to_string(),
        // Spider data uses double quotes for string literals; a
        // double-quoted leaf in expression position is a value.
        Expr::Identifier(ident) => {
            if ident.quote_style == Some('"') {
                VALUE.to_string()
            } else {
                ident.value.to_ascii_lowercase()
            }
        }
        Expr::CompoundIdentifier(parts) => {
            let mut names: Vec<String> =
                parts.iter().map(|p| p.value.to_ascii_lowercase()).collect();
            if names.len() >= 2 {
                let qualifier = names[names.len() - 2].clone();
                if let Some(resolved) = scope.resolve(&qualifier) {
                    let idx = names.len() - 2;
                    names[idx] = resolved.to_string();
                }
            }
            names.join(".")
        }
        Expr::BinaryOp { left, op, right } => {
            let (l, r) = (canon_expr(left, scope), canon_expr(right, scope));
            match op {
                Op::And | Op::Or => {
                    let tag = if matches!(op, Op::And) { "and" } else { "or" };
                    let mut operands = Vec::new();
                    flatten_connector(expr, op, scope, &mut operands);
                    operands.sort();
                    operands.dedup();
                    if operands.len() == 1 {
                        // Set semantics: `x AND x` is just `x`.
                        operands.pop().expect("one operand")
                    } else {
                        format!("({})", operands.join(&format!(" {tag} ")))
                    }
                }
                Op::Eq | Op::NotEq => {
                    let sym = if matches!(op, Op::Eq) { "=" } else { "<>" };
                    let (a, b) = if l <= r { (l, r) } else { (r, l) };
                    format!("({a} {sym} {b})")
                }
                _ => format!("({l} {} {r})", op_text(op)),
            }
        }
        Expr::UnaryOp { op, expr } => {
            let body = canon_expr(expr, scope);
            match op {
                UnaryOperator::Not => format!("(not {body})"),
                UnaryOperator::Minus => format!("(- {body})"),
                UnaryOperator::Plus => body,
                other => format!("({} {body})", other.to_string().to_ascii_lowercase()),
            }
        }
        Expr::Nested(inner) => canon_expr(inner, scope),
        Expr::IsNull(e) => format!("({} is null)", canon_expr(e, scope)),
        Expr::IsNotNull(e) => format!("({} is not null)", canon_expr(e, scope)),
        Expr::InList {
            expr,
            list,
            negated,
        } => {
            let lhs = canon_expr(expr, scope);
            let neg = if *negated { "not " } else { "" };
            let mut rendered: Vec<String> = list.iter().map(|e| canon_expr(e, scope)).collect();
            rendered.sort();
            rendered.dedup();
            format!("({lhs} {neg}in ({}))", rendered.join(","))
        }
        Expr::InSubquery {
            expr,
            subquery,
            negated,
        } => {
            let lhs = canon_expr(expr, scope);
            let neg = if *negated { "not " } else { "" };
            format!("({lhs} {neg}in [{}])", canon_query(subquery, scope).key())
        }
        Expr::Between {
            expr,
            negated,
            low,
            high,
        } => {
            let neg = if *negated { "not " } else { "" };
            format!(
                "({} {neg}between {} and {})",
                canon_expr(expr, scope),
                canon_expr(low, scope),
                canon_expr(high, scope)
            )
        }
        Expr::Like {
            negated,
            expr,
            pattern,
            ..
        }
        | Expr::ILike {
            negated,
            expr,
            pattern,
            ..
        } => {
            let neg = if *negated { "not " } else { "" };
            format!(
                "({} {neg}like {})",
                canon_expr(expr, scope),
                canon_expr(pattern, scope)
            )
        }
        Expr::Exists { subquery, negated } => {
            let neg = if *negated { "not " } else { "" };
            format!("({neg}exists [{}])", canon_query(subquery, scope).key())
        }
        Expr::Subquery(q) => format!("[{}]", canon_query(q, scope).key()),
        Expr::Function(f) => {
            let name = function_name(f);
            let mut rendered = Vec::new();
            let mut distinct = false;
            match &f.args {
                FunctionArguments::List(list) => {
                    distinct = matches!(
                        list.duplicate_treatment,
                        Some(sqlparser::ast::DuplicateTreatment::Distinct)
                    );
                    for arg in &list.args {
                        match arg {
                            FunctionArg::Unnamed(fae)
                            | FunctionArg::Named { arg: fae, .. }
                            | FunctionArg::ExprNamed { arg: fae, .. } => match fae {
                                FunctionArgExpr::Expr(e) => rendered.push(canon_expr(e, scope)),
                                FunctionArgExpr::Wildcard => rendered.push("*".to_string()),
                                FunctionArgExpr::QualifiedWildcard(name) => {
                                    rendered.push(format!("{}.*", object_name_key(name)))
                                }
                                other => rendered.push(other.to_string().to_ascii_lowercase()),
                            },
                        }
                    }
                }
                FunctionArguments::Subquery(q) => {
                    rendered.push(format!("[{}]", canon_query(q, scope).key()));
                }
                FunctionArguments::None => {}
            }
            let d = if distinct { "distinct " } else { "" };
            format!("{name}({d}{})", rendered.join(","))
        }
        Expr::Case {
            operand,
            conditions,
            else_result,
            ..
        } => {
            let mut out = String::from("case");
            if let Some(op) = operand {
                out.push(' ');
                out.push_str(&canon_expr(op, scope));
            }
            for when in conditions {
                out.push_str(" when ");
                out.push_str(&canon_expr(&when.condition, scope));
                out.push_str(" then ");
                out.push_str(&canon_expr(&when.result, scope));
            }
            if let Some(e) = else_result {
                out.push_str(" else ");
                out.push_str(&canon_expr(e, scope));
            }
            out.push_str(" end");
            out
        }
        Expr::Cast {
            expr, data_type, ..
        } => format!(
            "cast({} as {})",
            canon_expr(expr, scope),
            data_type.to_string().to_ascii_lowercase()
        ),
        Expr::Tuple(items) => {
            let rendered: Vec<String> = items.iter().map(|e| canon_expr(e, scope)).collect();
            format!("({})", rendered.join(","))
        }
        other => other.to_string().to_ascii_lowercase(),
    }
}

fn flatten_connector(
    expr: &Expr,
    connector: &sqlparser::ast::BinaryOperator,
    scope: &Scope<'_>,
    out: &mut Vec<String>,
) {
    match expr {
        Expr::BinaryOp { left, op, right } if op == connector => {
            flatten_connector(left, connector, scope, out);
            flatten_connector(right, connector, scope, out);
        }
        Expr::Nested(inner) => flatten_connector(inner, connector, scope, out),
        other => out.push(canon_expr(other, scope)),
    }
}

fn op_text(op: &sqlparser::ast::BinaryOperator) -> String {
    op.to_string().to_ascii_lowercase()
}
