//! Scenario slicing: composable predicates over gold-SQL profiles, domains,
//! and variance-group eligibility.
//!
//! Filtering keys on the gold SQL profile, never the prediction, so slices
//! are identical across the systems being compared. Specs serialize as a
//! small JSON expression tree; [`builtin_scenarios`] provides the named
//! slices used throughout the reports.

use crate::benchmark::{group_variants, Benchmark};
use crate::sql::{classify_hardness, Hardness, HardnessRules, SqlKeyword, SqlProfile};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    fn apply(self, left: u32, right: u32) -> bool {
        match self {
            Cmp::Eq => left == right,
            Cmp::Ne => left != right,
            Cmp::Lt => left < right,
            Cmp::Le => left <= right,
            Cmp::Gt => left > right,
            Cmp::Ge => left >= right,
        }
    }
}

/// Atomic predicate over one sample's metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Atom {
    Hardness { tier: Hardness },
    SubqueryCount { cmp: Cmp, value: u32 },
    JoinCount { cmp: Cmp, value: u32 },
    ConnectorCount { cmp: Cmp, value: u32 },
    HasOrderBy { value: bool },
    Keyword { keyword: SqlKeyword },
    Domain { name: String },
    QvtEligible { value: bool },
}

/// Predicate tree with AND/OR/NOT combinators over [`Atom`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSpec {
    Atom(Atom),
    And(Vec<ScenarioSpec>),
    Or(Vec<ScenarioSpec>),
    Not(Box<ScenarioSpec>),
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    fn uses_domain(&self) -> bool {
        match self {
            ScenarioSpec::Atom(Atom::Domain { .. }) => true,
            ScenarioSpec::Atom(_) => false,
            ScenarioSpec::And(children) | ScenarioSpec::Or(children) => {
                children.iter().any(ScenarioSpec::uses_domain)
            }
            ScenarioSpec::Not(inner) => inner.uses_domain(),
        }
    }

    fn uses_qvt(&self) -> bool {
        match self {
            ScenarioSpec::Atom(Atom::QvtEligible { .. }) => true,
            ScenarioSpec::Atom(_) => false,
            ScenarioSpec::And(children) | ScenarioSpec::Or(children) => {
                children.iter().any(ScenarioSpec::uses_qvt)
            }
            ScenarioSpec::Not(inner) => inner.uses_qvt(),
        }
    }
}

/// An ordered slice of a benchmark. Sample ids keep parent order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subset {
    pub benchmark_name: String,
    pub spec: Option<ScenarioSpec>,
    pub sample_ids: Vec<String>,
}

impl Subset {
    pub fn size(&self) -> usize {
        self.sample_ids.len()
    }

    /// The unfiltered benchmark as a subset.
    pub fn all(benchmark: &Benchmark) -> Subset {
        Subset {
            benchmark_name: benchmark.name.clone(),
            spec: None,
            sample_ids: benchmark
                .samples
                .iter()
                .map(|s| s.sample_id.clone())
                .collect(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("domain atom used but no domain label is known for db '{0}'")]
    UnknownDomain(String),
    #[error("no profile for sample '{0}'")]
    MissingProfile(String),
}

/// Evaluate a spec over every sample. Order-preserving and idempotent: a
/// sample is included iff the predicate holds on its profile, domain, and
/// variance-group metadata.
pub fn filter(
    benchmark: &Benchmark,
    spec: &ScenarioSpec,
    profiles: &BTreeMap<String, SqlProfile>,
) -> Result<Subset, FilterError> {
    filter_with_rules(benchmark, spec, profiles, &HardnessRules::default())
}

pub fn filter_with_rules(
    benchmark: &Benchmark,
    spec: &ScenarioSpec,
    profiles: &BTreeMap<String, SqlProfile>,
    rules: &HardnessRules,
) -> Result<Subset, FilterError> {
    // Domain atoms require labels for every db they are evaluated against.
    if spec.uses_domain() && benchmark.domain_map.is_none() {
        let first_db = benchmark
            .samples
            .first()
            .map(|s| s.db_id.clone())
            .unwrap_or_default();
        return Err(FilterError::UnknownDomain(first_db));
    }
    let qvt_eligible: BTreeSet<String> = if spec.uses_qvt() {
        group_variants(benchmark)
            .into_iter()
            .filter(|g| g.qvt_eligible())
            .flat_map(|g| g.variants.into_iter().map(|s| s.sample_id))
            .collect()
    } else {
        BTreeSet::new()
    };

    let mut sample_ids = Vec::new();
    for sample in &benchmark.samples {
        let profile = profiles
            .get(&sample.sample_id)
            .ok_or_else(|| FilterError::MissingProfile(sample.sample_id.clone()))?;
        let ctx = EvalContext {
            profile,
            hardness: classify_hardness(profile, rules),
            domain: benchmark
                .domain_map
                .as_ref()
                .and_then(|m| m.get(&sample.db_id))
                .map(String::as_str),
            db_id: &sample.db_id,
            qvt_eligible: qvt_eligible.contains(&sample.sample_id),
        };
        if eval(spec, &ctx)? {
            sample_ids.push(sample.sample_id.clone());
        }
    }
    Ok(Subset {
        benchmark_name: benchmark.name.clone(),
        spec: Some(spec.clone()),
        sample_ids,
    })
}

struct EvalContext<'a> {
    profile: &'a SqlProfile,
    hardness: Hardness,
    domain: Option<&'a str>,
    db_id: &'a str,
    qvt_eligible: bool,
}

fn eval(spec: &ScenarioSpec, ctx: &EvalContext<'_>) -> Result<bool, FilterError> {
    match spec {
        ScenarioSpec::Atom(atom) => eval_atom(atom, ctx),
        ScenarioSpec::And(children) => {
            for child in children {
                if !eval(child, ctx)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        ScenarioSpec::Or(children) => {
            for child in children {
                if eval(child, ctx)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        ScenarioSpec::Not(inner) => Ok(!eval(inner, ctx)?),
    }
}

fn eval_atom(atom: &Atom, ctx: &EvalContext<'_>) -> Result<bool, FilterError> {
    Ok(match atom {
        Atom::Hardness { tier } => ctx.hardness == *tier,
        Atom::SubqueryCount { cmp, value } => cmp.apply(ctx.profile.subquery_count, *value),
        Atom::JoinCount { cmp, value } => cmp.apply(ctx.profile.join_count, *value),
        Atom::ConnectorCount { cmp, value } => {
            cmp.apply(ctx.profile.logical_connector_count, *value)
        }
        Atom::HasOrderBy { value } => ctx.profile.has_order_by == *value,
        Atom::Keyword { keyword } => ctx.profile.keyword_set.contains(keyword),
        Atom::Domain { name } => match ctx.domain {
            Some(domain) => domain == name,
            None => return Err(FilterError::UnknownDomain(ctx.db_id.to_string())),
        },
        Atom::QvtEligible { value } => ctx.qvt_eligible == *value,
    })
}

/// The named slices used in the experiments: presence/absence pairs for
/// subqueries, logical connectors, ORDER BY, and JOINs, plus the four
/// hardness tiers.
pub fn builtin_scenarios() -> Vec<(&'static str, ScenarioSpec)> {
    use ScenarioSpec::Atom as A;
    vec![
        (
            "has_subquery",
            A(Atom::SubqueryCount {
                cmp: Cmp::Ge,
                value: 1,
            }),
        ),
        (
            "no_subquery",
            A(Atom::SubqueryCount {
                cmp: Cmp::Eq,
                value: 0,
            }),
        ),
        (
            "has_connector",
            A(Atom::ConnectorCount {
                cmp: Cmp::Ge,
                value: 1,
            }),
        ),
        (
            "no_connector",
            A(Atom::ConnectorCount {
                cmp: Cmp::Eq,
                value: 0,
            }),
        ),
        ("has_orderby", A(Atom::HasOrderBy { value: true })),
        ("no_orderby", A(Atom::HasOrderBy { value: false })),
        (
            "has_join",
            A(Atom::JoinCount {
                cmp: Cmp::Ge,
                value: 1,
            }),
        ),
        (
            "no_join",
            A(Atom::JoinCount {
                cmp: Cmp::Eq,
                value: 0,
            }),
        ),
        (
            "easy",
            A(Atom::Hardness {
                tier: Hardness::Easy,
            }),
        ),
        (
            "medium",
            A(Atom::Hardness {
                tier: Hardness::Medium,
            }),
        ),
        (
            "hard",
            A(Atom::Hardness {
                tier: Hardness::Hard,
            }),
        ),
        (
            "extra",
            A(Atom::Hardness {
                tier: Hardness::Extra,
            }),
        ),
    ]
}

pub fn builtin_scenario(name: &str) -> Option<ScenarioSpec> {
    builtin_scenarios()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, spec)| spec)
}
