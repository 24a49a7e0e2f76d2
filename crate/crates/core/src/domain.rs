//! Shared vocabulary: process models, roles, lifecycle stages, run identity
//! and the metric record each experimental unit produces.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("unknown process model `{0}`")]
    UnknownProcessModel(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("invalid project spec: {0}")]
    InvalidProject(String),
}

/// The coordination scaffold a run follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessModel {
    Waterfall,
    VModel,
    Agile,
}

impl ProcessModel {
    pub const ALL: [ProcessModel; 3] = [ProcessModel::Waterfall, ProcessModel::VModel, ProcessModel::Agile];

    /// Stable lowercase slug, used for directory names and template lookup.
    pub fn slug(self) -> &'static str {
        match self {
            ProcessModel::Waterfall => "waterfall",
            ProcessModel::VModel => "vmodel",
            ProcessModel::Agile => "agile",
        }
    }

    /// Label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ProcessModel::Waterfall => "Waterfall",
            ProcessModel::VModel => "Vmodel",
            ProcessModel::Agile => "Agile",
        }
    }
}

impl fmt::Display for ProcessModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ProcessModel {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_process_model(s)
    }
}

/// Case-insensitive; `v-model` and `vmodel` are both accepted.
pub fn parse_process_model(name: &str) -> Result<ProcessModel, DomainError> {
    match name.trim().to_ascii_lowercase().as_str() {
        "waterfall" => Ok(ProcessModel::Waterfall),
        "vmodel" | "v-model" => Ok(ProcessModel::VModel),
        "agile" => Ok(ProcessModel::Agile),
        _ => Err(DomainError::UnknownProcessModel(name.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleKind {
    ProjectManager,
    Designer,
    Developer,
    Tester,
    Deployer,
    SprintManager,
    UnitTestExecutor,
    IntegrationTestExecutor,
    AcceptanceTestExecutor,
}

impl RoleKind {
    pub const ALL: [RoleKind; 9] = [
        RoleKind::ProjectManager,
        RoleKind::Designer,
        RoleKind::Developer,
        RoleKind::Tester,
        RoleKind::Deployer,
        RoleKind::SprintManager,
        RoleKind::UnitTestExecutor,
        RoleKind::IntegrationTestExecutor,
        RoleKind::AcceptanceTestExecutor,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            RoleKind::ProjectManager => "project_manager",
            RoleKind::Designer => "designer",
            RoleKind::Developer => "developer",
            RoleKind::Tester => "tester",
            RoleKind::Deployer => "deployer",
            RoleKind::SprintManager => "sprint_manager",
            RoleKind::UnitTestExecutor => "unit_test_executor",
            RoleKind::IntegrationTestExecutor => "integration_test_executor",
            RoleKind::AcceptanceTestExecutor => "acceptance_test_executor",
        }
    }
}

impl fmt::Display for RoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for RoleKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleKind::ALL
            .into_iter()
            .find(|r| r.slug() == s)
            .ok_or_else(|| DomainError::UnknownRole(s.to_string()))
    }
}

/// Canonical activation order of the roles a process instantiates.
pub fn roles_for(process: ProcessModel) -> &'static [RoleKind] {
    use RoleKind::*;
    match process {
        ProcessModel::Waterfall => &[
            ProjectManager,
            Designer,
            Developer,
            UnitTestExecutor,
            IntegrationTestExecutor,
            AcceptanceTestExecutor,
            Deployer,
        ],
        ProcessModel::Agile => &[ProjectManager, SprintManager, Designer, Developer, Tester, Deployer],
        ProcessModel::VModel => &[
            ProjectManager,
            Designer,
            Developer,
            UnitTestExecutor,
            IntegrationTestExecutor,
            AcceptanceTestExecutor,
        ],
    }
}

/// Lifecycle stage, without the sprint counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Requirements,
    Design,
    Implementation,
    UnitTesting,
    IntegrationTesting,
    AcceptanceTesting,
    Testing,
    Deployment,
    SprintPlanning,
    SprintReview,
}

impl Stage {
    pub fn slug(self) -> &'static str {
        match self {
            Stage::Requirements => "requirements",
            Stage::Design => "design",
            Stage::Implementation => "implementation",
            Stage::UnitTesting => "unit_testing",
            Stage::IntegrationTesting => "integration_testing",
            Stage::AcceptanceTesting => "acceptance_testing",
            Stage::Testing => "testing",
            Stage::Deployment => "deployment",
            Stage::SprintPlanning => "sprint_planning",
            Stage::SprintReview => "sprint_review",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// A stage together with its sprint counter. The counter is present exactly
/// when the owning run is Agile; the one-off backlog step is sprint 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Phase {
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprint: Option<u32>,
}

impl Phase {
    pub const fn new(stage: Stage) -> Self {
        Phase { stage, sprint: None }
    }

    pub const fn in_sprint(stage: Stage, sprint: u32) -> Self {
        Phase { stage, sprint: Some(sprint) }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sprint {
            Some(s) => write!(f, "{}#{}", self.stage, s),
            None => write!(f, "{}", self.stage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub id: String,
    pub title: String,
    pub requirement_text: String,
    /// Informational only; generated code is never built or executed.
    pub target_language_label: String,
}

impl ProjectSpec {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.id.trim().is_empty() {
            return Err(DomainError::InvalidProject("empty id".into()));
        }
        if self.requirement_text.trim().is_empty() {
            return Err(DomainError::InvalidProject(format!("{}: empty requirement_text", self.id)));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, DomainError> {
        let spec: ProjectSpec =
            serde_json::from_str(text).map_err(|e| DomainError::InvalidProject(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunLimits {
    pub max_sprints: u32,
    pub max_repair_attempts: u32,
    pub max_context_chars: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        RunLimits { max_sprints: 3, max_repair_attempts: 1, max_context_chars: 48_000 }
    }
}

/// One experimental unit: project × process × model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub project: ProjectSpec,
    pub process: ProcessModel,
    pub model_label: String,
    pub seed: u64,
    #[serde(default)]
    pub limits: RunLimits,
    #[serde(default)]
    pub temperature: f64,
}

impl RunConfig {
    pub fn new(project: ProjectSpec, process: ProcessModel, model_label: impl Into<String>) -> Self {
        RunConfig {
            project,
            process,
            model_label: model_label.into(),
            seed: 0,
            limits: RunLimits::default(),
            temperature: 0.0,
        }
    }

    /// `{project}/{process}/{model}`, also the run directory below the runs root.
    pub fn run_id(&self) -> String {
        format!("{}/{}/{}", self.project.id, self.process.slug(), sanitize_label(&self.model_label))
    }
}

/// Makes a model label safe to use as a single path component.
pub fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "reason", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// S1–S3. `tokens_per_loc` is `None` when no code lines were produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SizeMetrics {
    pub files: u64,
    pub loc: u64,
    pub tokens_per_loc: Option<f64>,
    /// Every artifact in the workspace, documents included.
    #[serde(default)]
    pub artifact_files: u64,
}

/// C1–C2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostMetrics {
    pub total_tokens: u64,
    pub wall_time: f64,
}

/// Q1–Q4. Q1/Q2/Q4 are filled in by ingestion after the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QualityMetrics {
    pub code_smells: Option<u64>,
    pub vulnerabilities: Option<u64>,
    pub ai_bug_rate: Option<f64>,
    pub human_bug_rate: Option<f64>,
}

/// Exact tokens-per-line ratio. `None` when `loc` is zero.
pub fn tokens_per_loc(total_tokens: u64, loc: u64) -> Option<Ratio<u64>> {
    (loc > 0).then(|| Ratio::new(total_tokens, loc))
}

/// Failed over total, `None` for an empty denominator.
pub fn failure_ratio(failed: u64, total: u64) -> Option<Ratio<u64>> {
    (total > 0).then(|| Ratio::new(failed.min(total), total))
}

pub(crate) fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub status: RunStatus,
    pub size: SizeMetrics,
    pub cost: CostMetrics,
    pub quality: QualityMetrics,
    pub transcript_path: String,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        self.config.run_id()
    }

    pub fn set_size(&mut self, files: u64, loc: u64, artifact_files: u64) {
        self.size = SizeMetrics {
            files,
            loc,
            tokens_per_loc: tokens_per_loc(self.cost.total_tokens, loc).map(ratio_to_f64),
            artifact_files,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn parses_process_names() {
        assert_eq!(parse_process_model("agile").unwrap(), ProcessModel::Agile);
        assert_eq!(parse_process_model("V-Model").unwrap(), ProcessModel::VModel);
        assert_eq!(parse_process_model("VMODEL").unwrap(), ProcessModel::VModel);
        assert_eq!(parse_process_model("Waterfall").unwrap(), ProcessModel::Waterfall);
        assert_eq!(
            parse_process_model("scrumfall"),
            Err(DomainError::UnknownProcessModel("scrumfall".into()))
        );
    }

    #[test]
    fn role_sets_per_process() {
        use RoleKind::*;
        let agile = roles_for(ProcessModel::Agile);
        assert!(agile.contains(&SprintManager));
        for r in [UnitTestExecutor, IntegrationTestExecutor, AcceptanceTestExecutor] {
            assert!(!agile.contains(&r));
        }
        assert!(!roles_for(ProcessModel::VModel).contains(&Deployer));
        let wf = roles_for(ProcessModel::Waterfall);
        assert!(wf.contains(&UnitTestExecutor) && wf.contains(&AcceptanceTestExecutor));
        assert!(!wf.contains(&Tester) && !wf.contains(&SprintManager));
    }

    #[test]
    fn role_lists_are_deterministic_and_duplicate_free() {
        let mut seen = HashSet::new();
        for p in ProcessModel::ALL {
            let roles = roles_for(p);
            assert_eq!(roles, roles_for(p));
            let uniq: HashSet<_> = roles.iter().collect();
            assert_eq!(uniq.len(), roles.len());
            seen.extend(roles.iter().copied());
        }
        for r in RoleKind::ALL {
            assert!(seen.contains(&r), "{r} never instantiated");
        }
    }

    #[test]
    fn role_slug_round_trip() {
        for r in RoleKind::ALL {
            assert_eq!(r.slug().parse::<RoleKind>().unwrap(), r);
        }
    }

    #[test]
    fn tokens_per_loc_never_divides_by_zero() {
        assert_eq!(tokens_per_loc(100, 0), None);
        assert_eq!(tokens_per_loc(100, 8), Some(Ratio::new(25, 2)));
    }

    #[test]
    fn empty_requirement_rejected() {
        let spec = ProjectSpec {
            id: "x".into(),
            title: "X".into(),
            requirement_text: "  ".into(),
            target_language_label: "Python".into(),
        };
        assert!(spec.validate().is_err());
    }
}
