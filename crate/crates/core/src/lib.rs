//! NL2SQL360 core: a multi-angle evaluation testbed for NL2SQL systems.
//!
//! The pipeline runs in five stages, each usable on its own:
//!
//! 1. [`benchmark`] loads Spider/BIRD-format datasets (questions, gold SQL,
//!    schemas, domain labels) and computes schema statistics.
//! 2. [`sql`] parses gold and predicted SQL, profiles structural
//!    characteristics, and classifies Spider-style hardness.
//! 3. [`filter`] slices a benchmark into scenario subsets (complexity,
//!    characteristics, domains, variance groups) via a predicate language.
//! 4. [`exec`] runs a system adapter over a subset against the SQLite
//!    databases and persists append-only run logs.
//! 5. [`metrics`] and [`report`] turn run logs into EX/EM/VES/QVT/latency/
//!    cost numbers and leaderboard-style tables.
//!
//! [`search`] adds a genetic architecture search over a modular NL2SQL
//! design space, scored by any of the metrics above.

pub mod benchmark;
pub mod exec;
pub mod filter;
pub mod fixtures;
pub mod metrics;
pub mod report;
pub mod search;
pub mod sql;
