//! `{name}` placeholder templates with `{{` / `}}` escapes.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::domain::{ProcessModel, RoleKind, Stage};

/// Every placeholder a template may use.
pub const PLACEHOLDERS: [&str; 6] =
    ["project_name", "requirement", "prd", "detailed_design", "sprint_context", "prior_artifacts"];

const PRIOR: &str = "prior_artifacts";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("missing binding for {{{0}}}")]
    MissingBinding(String),
    #[error("template {template} uses undeclared placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("no template for {0}")]
    Missing(String),
    #[error("rendered prompt needs {needed} chars without prior artifacts, cap is {cap}")]
    ContextOverflow { needed: usize, cap: usize },
    #[error("template io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub role: RoleKind,
    pub process: ProcessModel,
    pub phase: Stage,
    pub body: String,
    segments: Vec<Segment>,
}

fn is_ident(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

fn tokenize(body: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("{{") {
            text.push('{');
            rest = &rest[2..];
        } else if rest.starts_with("}}") {
            text.push('}');
            rest = &rest[2..];
        } else if c == '{' {
            let name_len = rest[1..].find(|ch: char| !is_ident(ch)).unwrap_or(rest.len() - 1);
            if name_len > 0 && rest[1 + name_len..].starts_with('}') {
                if !text.is_empty() {
                    out.push(Segment::Text(std::mem::take(&mut text)));
                }
                out.push(Segment::Slot(rest[1..1 + name_len].to_string()));
                rest = &rest[name_len + 2..];
            } else {
                text.push('{');
                rest = &rest[1..];
            }
        } else {
            text.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    out
}

impl PromptTemplate {
    pub fn new(role: RoleKind, process: ProcessModel, phase: Stage, body: impl Into<String>) -> Result<Self, TemplateError> {
        let body = body.into();
        let segments = tokenize(&body);
        for seg in &segments {
            if let Segment::Slot(name) = seg {
                if !PLACEHOLDERS.contains(&name.as_str()) {
                    return Err(TemplateError::UnknownPlaceholder {
                        template: format!("{}/{}_{}", process.slug(), role.slug(), phase.slug()),
                        name: name.clone(),
                    });
                }
            }
        }
        Ok(PromptTemplate { role, process, phase, body, segments })
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(n) => Some(n.as_str()),
            Segment::Text(_) => None,
        })
    }

    /// Substitutes bindings. When `max_chars` is set and the result would be
    /// longer, prior artifacts are dropped oldest-first (then the newest one
    /// is cut from the front) behind an ellipsis marker.
    pub fn render(&self, bindings: &Bindings, max_chars: Option<usize>) -> Result<String, TemplateError> {
        let mut fixed = 0usize;
        let mut prior_slots = 0usize;
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => fixed += t.chars().count(),
                Segment::Slot(n) if n == PRIOR => {
                    if bindings.prior.is_none() {
                        return Err(TemplateError::MissingBinding(n.clone()));
                    }
                    prior_slots += 1;
                }
                Segment::Slot(n) => {
                    let v = bindings.values.get(n).ok_or_else(|| TemplateError::MissingBinding(n.clone()))?;
                    fixed += v.chars().count();
                }
            }
        }

        let prior = bindings.prior.as_deref().unwrap_or(&[]);
        let mut prior_text = format_prior(prior);
        if let Some(cap) = max_chars {
            let total = fixed + prior_slots * prior_text.chars().count();
            if total > cap {
                if fixed > cap {
                    return Err(TemplateError::ContextOverflow { needed: fixed, cap });
                }
                let budget = if prior_slots == 0 { 0 } else { (cap - fixed) / prior_slots };
                prior_text = truncate_prior(prior, budget);
            }
        }

        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(n) if n == PRIOR => out.push_str(&prior_text),
                Segment::Slot(n) => out.push_str(&bindings.values[n]),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorArtifact {
    pub label: String,
    pub content: String,
}

impl PriorArtifact {
    pub fn new(label: impl Into<String>, content: impl Into<String>) -> Self {
        PriorArtifact { label: label.into(), content: content.into() }
    }

    fn formatted(&self) -> String {
        format!("--- {} ---\n{}\n", self.label, self.content.trim_end_matches('\n'))
    }
}

/// Values for a render call. Prior artifacts are kept oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings {
    values: BTreeMap<String, String>,
    prior: Option<Vec<PriorArtifact>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, name: &str, value: impl Into<String>) -> Self {
        self.values.insert(name.to_string(), value.into());
        self
    }

    pub fn prior(mut self, artifacts: Vec<PriorArtifact>) -> Self {
        self.prior = Some(artifacts);
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.values.get(name).map(String::as_str)
    }
}

fn format_prior(prior: &[PriorArtifact]) -> String {
    if prior.is_empty() {
        return "(none)".to_string();
    }
    prior.iter().map(PriorArtifact::formatted).collect()
}

fn marker(dropped: usize) -> String {
    format!("[... {dropped} earlier artifact(s) truncated ...]\n")
}

fn truncate_prior(prior: &[PriorArtifact], budget: usize) -> String {
    let pieces: Vec<String> = prior.iter().map(PriorArtifact::formatted).collect();
    // Keep the longest suffix (newest artifacts) that fits with its marker.
    for keep in (1..pieces.len()).rev() {
        let dropped = pieces.len() - keep;
        let kept: String = pieces[dropped..].concat();
        let m = marker(dropped);
        if m.chars().count() + kept.chars().count() <= budget {
            return m + &kept;
        }
    }
    let m = marker(pieces.len().saturating_sub(1));
    let newest = pieces.last().map(String::as_str).unwrap_or("");
    let room = budget.saturating_sub(m.chars().count() + 1);
    if room == 0 {
        return "…".chars().take(budget).collect();
    }
    let n = newest.chars().count();
    let tail: String = newest.chars().skip(n.saturating_sub(room)).collect();
    format!("{m}…{tail}")
}

/// Templates for every (process, role, stage), with optional per-project
/// overrides.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    generic: HashMap<(ProcessModel, RoleKind, Stage), PromptTemplate>,
    project: HashMap<(String, ProcessModel, RoleKind, Stage), PromptTemplate>,
}

macro_rules! tpl {
    ($dir:literal, $stem:literal) => {
        ($dir, $stem, include_str!(concat!("../../templates/", $dir, "/", $stem, ".txt")))
    };
}

/// (`{process}[/{project}]`, `{role}_{phase}`, body)
const BUILTIN: &[(&str, &str, &str)] = &[
    tpl!("waterfall", "project_manager_requirements"),
    tpl!("waterfall", "designer_design"),
    tpl!("waterfall", "developer_implementation"),
    tpl!("waterfall", "unit_test_executor_unit_testing"),
    tpl!("waterfall", "integration_test_executor_integration_testing"),
    tpl!("waterfall", "acceptance_test_executor_acceptance_testing"),
    tpl!("waterfall", "deployer_deployment"),
    tpl!("vmodel", "project_manager_requirements"),
    tpl!("vmodel", "acceptance_test_executor_requirements"),
    tpl!("vmodel", "designer_design"),
    tpl!("vmodel", "integration_test_executor_design"),
    tpl!("vmodel", "developer_implementation"),
    tpl!("vmodel", "unit_test_executor_implementation"),
    tpl!("vmodel", "unit_test_executor_unit_testing"),
    tpl!("vmodel", "integration_test_executor_integration_testing"),
    tpl!("vmodel", "acceptance_test_executor_acceptance_testing"),
    tpl!("vmodel/expense-tracker", "project_manager_requirements"),
    tpl!("vmodel/expense-tracker", "designer_design"),
    tpl!("vmodel/expense-tracker", "acceptance_test_executor_requirements"),
    tpl!("vmodel/expense-tracker", "developer_implementation"),
    tpl!("agile", "project_manager_requirements"),
    tpl!("agile", "sprint_manager_sprint_planning"),
    tpl!("agile", "designer_design"),
    tpl!("agile", "developer_implementation"),
    tpl!("agile", "tester_testing"),
    tpl!("agile", "deployer_deployment"),
];

const STAGES: [Stage; 10] = [
    Stage::Requirements,
    Stage::Design,
    Stage::Implementation,
    Stage::UnitTesting,
    Stage::IntegrationTesting,
    Stage::AcceptanceTesting,
    Stage::Testing,
    Stage::Deployment,
    Stage::SprintPlanning,
    Stage::SprintReview,
];

/// Splits `{role}_{phase}` into its parts.
fn parse_file_stem(stem: &str) -> Option<(RoleKind, Stage)> {
    RoleKind::ALL.into_iter().find_map(|role| {
        let rest = stem.strip_prefix(role.slug())?.strip_prefix('_')?;
        STAGES.into_iter().find(|s| s.slug() == rest).map(|stage| (role, stage))
    })
}

impl TemplateSet {
    /// The templates compiled into the crate.
    pub fn builtin() -> Self {
        let mut set = TemplateSet::default();
        for &(dir, stem, body) in BUILTIN {
            let (process, project) = match dir.split_once('/') {
                Some((p, proj)) => (p, Some(proj)),
                None => (dir, None),
            };
            let process = crate::domain::parse_process_model(process).expect("builtin process dir");
            let (role, stage) = parse_file_stem(stem).expect("builtin template name");
            let t = PromptTemplate::new(role, process, stage, body).expect("builtin template is valid");
            set.insert(project, t);
        }
        set
    }

    pub fn insert(&mut self, project: Option<&str>, template: PromptTemplate) {
        let key = (template.process, template.role, template.phase);
        match project {
            Some(p) => {
                self.project.insert((p.to_string(), key.0, key.1, key.2), template);
            }
            None => {
                self.generic.insert(key, template);
            }
        }
    }

    /// Builtins overlaid with `templates/{process}/[{project}/]{role}_{phase}.txt`
    /// files found under `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for process in ProcessModel::ALL {
            let pdir = dir.join(process.slug());
            if !pdir.is_dir() {
                continue;
            }
            for entry in walkdir::WalkDir::new(&pdir).min_depth(1).max_depth(2).sort_by_file_name() {
                let entry = entry.map_err(|e| TemplateError::Io(e.to_string()))?;
                let path = entry.path();
                if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                    continue;
                }
                let Some((role, stage)) = path.file_stem().and_then(|s| s.to_str()).and_then(parse_file_stem) else {
                    continue;
                };
                let body = std::fs::read_to_string(path).map_err(|e| TemplateError::Io(e.to_string()))?;
                let project = (entry.depth() == 2)
                    .then(|| path.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str()))
                    .flatten();
                set.insert(project, PromptTemplate::new(role, process, stage, body)?);
            }
        }
        Ok(set)
    }

    pub fn get(
        &self,
        project: &str,
        process: ProcessModel,
        role: RoleKind,
        stage: Stage,
    ) -> Result<&PromptTemplate, TemplateError> {
        self.project
            .get(&(project.to_string(), process, role, stage))
            .or_else(|| self.generic.get(&(process, role, stage)))
            .ok_or_else(|| TemplateError::Missing(format!("{}/{}_{}", process.slug(), role.slug(), stage.slug())))
    }
}
