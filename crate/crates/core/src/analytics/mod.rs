//! Quality-metric ingestion, descriptive statistics and one-way ANOVA over
//! run records, plus the report files built from them.
//!
//! The numeric core (`special`, `stats`) is generic over [`num_traits::Float`];
//! record-level analysis works in `f64`.

pub mod ingest;
pub mod report;
pub mod special;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::RunRecord;

pub use ingest::{apply_issues, apply_manual_session, Issue, IssueReport, ManualTestSession, Severity};
pub use report::{emit_report, format_f, format_p, ReportFiles, RUNS_CSV_COLUMNS};
pub use special::{f_survival, ln_gamma, regularized_incomplete_beta};
pub use stats::{anova_oneway, descriptive, OneWayAnova, Summary};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite observation")]
    NonFinite,
    #[error("insufficient data: {groups} group(s), {observations} observation(s)")]
    InsufficientData { groups: usize, observations: usize },
    #[error("continued fraction did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("no run records")]
    NoRecords,
}

/// The S, C and Q metrics a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Files,
    Loc,
    TokensPerLoc,
    TotalTokens,
    WallTime,
    CodeSmells,
    Vulnerabilities,
    AiBugRate,
    HumanBugRate,
    ArtifactFiles,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::Files,
        Metric::Loc,
        Metric::TokensPerLoc,
        Metric::TotalTokens,
        Metric::WallTime,
        Metric::CodeSmells,
        Metric::Vulnerabilities,
        Metric::AiBugRate,
        Metric::HumanBugRate,
        Metric::ArtifactFiles,
    ];

    pub fn parse(name: &str) -> Result<Metric, AnalyticsError> {
        let m = match name.trim().to_ascii_lowercase().as_str() {
            "s1" | "files" => Metric::Files,
            "s2" | "loc" => Metric::Loc,
            "s3" | "tokens_per_loc" => Metric::TokensPerLoc,
            "c1" | "total_tokens" | "tokens" => Metric::TotalTokens,
            "c2" | "wall_time" | "execution_time" => Metric::WallTime,
            "q1" | "code_smells" => Metric::CodeSmells,
            "q2" | "vulnerabilities" => Metric::Vulnerabilities,
            "q3" | "ai_bug_rate" => Metric::AiBugRate,
            "q4" | "human_bug_rate" => Metric::HumanBugRate,
            "artifact_files" => Metric::ArtifactFiles,
            _ => return Err(AnalyticsError::UnknownMetric(name.to_string())),
        };
        Ok(m)
    }

    pub fn code(self) -> &'static str {
        match self {
            Metric::Files => "s1",
            Metric::Loc => "s2",
            Metric::TokensPerLoc => "s3",
            Metric::TotalTokens => "c1",
            Metric::WallTime => "c2",
            Metric::CodeSmells => "q1",
            Metric::Vulnerabilities => "q2",
            Metric::AiBugRate => "q3",
            Metric::HumanBugRate => "q4",
            Metric::ArtifactFiles => "artifact_files",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Files => "Number of Files",
            Metric::Loc => "Lines of Code (LOC)",
            Metric::TokensPerLoc => "Tokens per LOC",
            Metric::TotalTokens => "Token Cost",
            Metric::WallTime => "Execution Time",
            Metric::CodeSmells => "Code Smells",
            Metric::Vulnerabilities => "Vulnerabilities",
            Metric::AiBugRate => "Failed Test Cases (by tester)",
            Metric::HumanBugRate => "Failure rate of manual tests",
            Metric::ArtifactFiles => "Number of Artifacts",
        }
    }

    pub fn value(self, r: &RunRecord) -> Option<f64> {
        match self {
            Metric::Files => Some(r.size.files as f64),
            Metric::Loc => Some(r.size.loc as f64),
            Metric::TokensPerLoc => r.size.tokens_per_loc,
            Metric::TotalTokens => Some(r.cost.total_tokens as f64),
            Metric::WallTime => Some(r.cost.wall_time),
            Metric::CodeSmells => r.quality.code_smells.map(|v| v as f64),
            Metric::Vulnerabilities => r.quality.vulnerabilities.map(|v| v as f64),
            Metric::AiBugRate => r.quality.ai_bug_rate,
            Metric::HumanBugRate => r.quality.human_bug_rate,
            Metric::ArtifactFiles => Some(r.size.artifact_files as f64),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Metrics tested against the process-model factor.
pub const PROCESS_METRICS: [Metric; 5] =
    [Metric::Files, Metric::Loc, Metric::WallTime, Metric::TotalTokens, Metric::HumanBugRate];
/// Metrics tested against the model factor.
pub const MODEL_METRICS: [Metric; 5] = [Metric::Files, Metric::Loc, Metric::WallTime, Metric::TotalTokens, Metric::AiBugRate];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    ProcessModel,
    ModelLabel,
}

impl Factor {
    pub fn level(self, r: &RunRecord) -> String {
        match self {
            Factor::ProcessModel => r.config.process.label().to_string(),
            Factor::ModelLabel => r.config.model_label.clone(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Factor::ProcessModel => "Process Model",
            Factor::ModelLabel => "GPT Model",
        }
    }

    pub fn metrics(self) -> [Metric; 5] {
        match self {
            Factor::ProcessModel => PROCESS_METRICS,
            Factor::ModelLabel => MODEL_METRICS,
        }
    }
}

/// Metric values partitioned by factor level, levels in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    pub factor: Factor,
    pub metric: Metric,
    pub levels: Vec<(String, Vec<f64>)>,
}

impl Groups {
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.levels.iter().map(|(_, v)| v.clone()).collect()
    }
}

/// Groups completed runs by factor level. Levels with no value for the
/// metric stay present but empty.
pub fn group_runs(records: &[RunRecord], factor: Factor, metric_name: &str) -> Result<Groups, AnalyticsError> {
    let metric = Metric::parse(metric_name)?;
    if records.is_empty() {
        return Err(AnalyticsError::NoRecords);
    }
    Ok(group_by(records, factor, metric))
}

pub fn group_by(records: &[RunRecord], factor: Factor, metric: Metric) -> Groups {
    let mut levels: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status.is_completed()) {
        let slot = levels.entry(factor.level(r)).or_default();
        if let Some(v) = metric.value(r) {
            slot.push(v);
        }
    }
    Groups { factor, metric, levels: levels.into_iter().collect() }
}

/// One metric × factor ANOVA with labelled group summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult<T> {
    pub metric_name: String,
    pub factor: Factor,
    pub f_stat: T,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: T,
    pub group_summaries: Vec<(String, Summary<T>)>,
}

impl<T: Float> AnovaResult<T> {
    pub fn from_groups(metric_name: &str, factor: Factor, levels: &[(String, Vec<T>)]) -> Result<Self, StatsError> {
        let values: Vec<Vec<T>> = levels.iter().map(|(_, v)| v.clone()).collect();
        let r = anova_oneway(&values)?;
        Ok(AnovaResult {
            metric_name: metric_name.to_string(),
            factor,
            f_stat: r.f_stat,
            df_between: r.df_between,
            df_within: r.df_within,
            p_value: r.p_value,
            group_summaries: levels.iter().map(|(l, _)| l.clone()).zip(r.groups).collect(),
        })
    }
}

/// A report row: the test for one metric and factor, or why it could not run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRow {
    pub metric: Metric,
    pub factor: Factor,
    pub outcome: Result<AnovaResult<f64>, StatsError>,
}

/// Every (factor, metric) test the report includes: process-model rows
/// first, then model rows.
pub fn anova_table(records: &[RunRecord]) -> Vec<AnovaRow> {
    [Factor::ProcessModel, Factor::ModelLabel]
        .into_iter()
        .flat_map(|factor| factor.metrics().into_iter().map(move |metric| (factor, metric)))
        .map(|(factor, metric)| {
            let groups = group_by(records, factor, metric);
            AnovaRow { metric, factor, outcome: AnovaResult::from_groups(metric.code(), factor, &groups.levels) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProcessModel, ProjectSpec, RunConfig, RunStatus};

    pub(crate) fn record(project: &str, process: ProcessModel, model: &str, files: u64) -> RunRecord {
        let spec = ProjectSpec {
            id: project.into(),
            title: project.into(),
            requirement_text: "req".into(),
            target_language_label: "JavaScript".into(),
        };
        let mut r = RunRecord {
            config: RunConfig::new(spec, process, model),
            status: RunStatus::Completed,
            size: Default::default(),
            cost: Default::default(),
            quality: Default::default(),
            transcript_path: "transcript.jsonl".into(),
        };
        r.cost.total_tokens = 1000 + files * 10;
        r.set_size(files, files * 20, files + 2);
        r
    }

    fn matrix() -> Vec<RunRecord> {
        let models = ["gpt-4o-mini", "gpt-4.1-nano", "deepseek-chat", "deepseek-reasoner"];
        let mut out = Vec::new();
        for (i, p) in ProcessModel::ALL.into_iter().enumerate() {
            for (j, m) in models.iter().enumerate() {
                out.push(record("snake", p, m, (i * 4 + j) as u64));
            }
        }
        out
    }

    #[test]
    fn process_factor_gives_three_groups_of_four() {
        let g = group_runs(&matrix(), Factor::ProcessModel, "files").unwrap();
        assert_eq!(g.levels.len(), 3);
        assert!(g.levels.iter().all(|(_, v)| v.len() == 4));
        let names: Vec<_> = g.levels.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(names, ["Agile", "Vmodel", "Waterfall"]);
    }

    #[test]
    fn model_factor_gives_four_groups_of_three() {
        let g = group_runs(&matrix(), Factor::ModelLabel, "s2").unwrap();
        assert_eq!(g.levels.len(), 4);
        assert!(g.levels.iter().all(|(_, v)| v.len() == 3));
    }

    #[test]
    fn missing_q4_propagates_insufficient_data() {
        let g = group_runs(&matrix(), Factor::ProcessModel, "q4").unwrap();
        assert!(g.levels.iter().all(|(_, v)| v.is_empty()));
        let r = AnovaResult::from_groups("q4", Factor::ProcessModel, &g.levels);
        assert!(matches!(r, Err(StatsError::InsufficientData { .. })));
    }

    #[test]
    fn unknown_metric() {
        assert_eq!(
            group_runs(&matrix(), Factor::ProcessModel, "happiness"),
            Err(AnalyticsError::UnknownMetric("happiness".into()))
        );
    }

    #[test]
    fn failed_runs_are_left_out() {
        let mut recs = matrix();
        recs[0].status = RunStatus::Failed("boom".into());
        let g = group_by(&recs, Factor::ProcessModel, Metric::Files);
        let total: usize = g.levels.iter().map(|(_, v)| v.len()).sum();
        assert_eq!(total, 11);
    }

    #[test]
    fn table_has_five_rows_per_factor() {
        let rows = anova_table(&matrix());
        assert_eq!(rows.len(), 10);
        assert_eq!(rows.iter().filter(|r| r.factor == Factor::ProcessModel).count(), 5);
        let files = &rows[0];
        let res = files.outcome.as_ref().unwrap();
        assert_eq!((res.df_between, res.df_within), (2, 9));
        assert_eq!(res.group_summaries.len(), 3);
    }
}
