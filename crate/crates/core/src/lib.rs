//! Waterfall, V-Model and Agile software processes as coordination scaffolds
//! for teams of LLM role agents, with an experiment harness over the
//! project × process × model matrix and the size, cost and quality analytics
//! computed from its runs.

pub mod agents;
pub mod analytics;
pub mod domain;
pub mod engine;
pub mod gateway;
pub mod harness;
pub mod pool;
pub mod workspace;

pub use domain::{
    parse_process_model, roles_for, Phase, ProcessModel, ProjectSpec, RoleKind, RunConfig, RunLimits, RunRecord,
    RunStatus, Stage,
};

/// Exact ratio type used for S3 and the bug rates.
pub type Ratio = num_rational::Ratio<u64>;
/// Descriptive summary in double precision.
pub type Summary = analytics::Summary<f64>;
/// One-way ANOVA outcome in double precision.
pub type OneWayAnova = analytics::OneWayAnova<f64>;
/// Labelled metric × factor ANOVA in double precision.
pub type AnovaResult = analytics::AnovaResult<f64>;
