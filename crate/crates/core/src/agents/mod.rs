//! Role agents: render a template, call the gateway, parse the reply.
//!
//! An agent holds no state between calls. A reply that fails to parse is
//! sent back once per remaining repair attempt with the parse error appended.

pub mod parse;
pub mod template;

use thiserror::Error;

use crate::domain::{Phase, ProcessModel, RoleKind, RunConfig};
use crate::gateway::{complete_with_retry, CompletionBackend, CompletionRequest, GatewayError, PlaybackKey, RetryPolicy, TokenLedger};
use crate::pool::MessageKind;

pub use parse::{
    parse_code_bundle, parse_structured_doc, parse_test_report, CodeBundle, CodeFile, ParseError, StructuredDoc,
    TestCase, TestReport, Verdict,
};
pub use template::{Bindings, PriorArtifact, PromptTemplate, TemplateError, TemplateSet, PLACEHOLDERS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unusable output after {attempts} attempt(s): {error}")]
    Output { attempts: u32, error: ParseError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parsed {
    Doc(StructuredDoc),
    Code(CodeBundle),
    Report(TestReport),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutput {
    pub kind: MessageKind,
    pub parsed: Parsed,
}

/// Parses raw model text according to the kind of message it should become.
pub fn parse_output(kind: MessageKind, text: &str) -> Result<AgentOutput, ParseError> {
    let parsed = match kind {
        MessageKind::CodeBundle => Parsed::Code(parse_code_bundle(text)?),
        MessageKind::TestReport => Parsed::Report(parse_test_report(text)?),
        _ => Parsed::Doc(parse_structured_doc(text)?),
    };
    Ok(AgentOutput { kind, parsed })
}

/// One completed agent activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub output: AgentOutput,
    /// The first rendered user prompt.
    pub prompt: String,
    /// Raw text of the accepted reply.
    pub raw: String,
    pub attempts: u32,
}

pub fn system_prompt(role: RoleKind, process: ProcessModel) -> String {
    let duty = match role {
        RoleKind::ProjectManager => "You turn the customer's requirement into a product requirements document.",
        RoleKind::Designer => "You produce the system design that developers implement.",
        RoleKind::Developer => "You write complete, working source code for every file the design needs.",
        RoleKind::Tester => "You validate the sprint's code against its requirements and report a verdict per test case.",
        RoleKind::Deployer => "You prepare the release notes and deployment instructions for the delivered code.",
        RoleKind::SprintManager => "You plan each sprint's scope and keep the sprint context focused.",
        RoleKind::UnitTestExecutor => "You plan and execute unit tests for individual functions and components.",
        RoleKind::IntegrationTestExecutor => "You plan and execute integration tests across components.",
        RoleKind::AcceptanceTestExecutor => "You plan and execute acceptance tests against the product requirements.",
    };
    format!("You are the {} agent in a {} software development team. {duty}", role.slug().replace('_', " "), process.label())
}

const REPAIR_NOTE: &str = "Your previous response could not be used: ";

/// Shared per-run settings for agent calls.
pub struct AgentContext<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub config: &'a RunConfig,
    pub retry: RetryPolicy,
    pub max_output_tokens: u32,
}

impl<'a> AgentContext<'a> {
    pub fn new(backend: &'a dyn CompletionBackend, config: &'a RunConfig) -> Self {
        AgentContext {
            backend,
            config,
            retry: RetryPolicy::new(config.limits.max_repair_attempts),
            max_output_tokens: 8192,
        }
    }

    /// Runs `template` for `role`, recording every completion in `ledger`.
    pub fn invoke(
        &self,
        role: RoleKind,
        phase: Phase,
        kind: MessageKind,
        template: &PromptTemplate,
        bindings: &Bindings,
        ledger: &mut TokenLedger,
    ) -> Result<Turn, AgentError> {
        let cfg = self.config;
        let prompt = template.render(bindings, Some(cfg.limits.max_context_chars))?;
        let system = system_prompt(role, cfg.process);
        let max_attempts = cfg.limits.max_repair_attempts + 1;
        let mut user = prompt.clone();
        let mut attempt = 0;
        loop {
            let key = PlaybackKey {
                project: cfg.project.id.clone(),
                process: cfg.process,
                role,
                phase: phase.stage,
                sprint: phase.sprint,
                attempt,
            };
            let req = CompletionRequest {
                model_label: cfg.model_label.clone(),
                system_prompt: system.clone(),
                user_prompt: user.clone(),
                temperature: cfg.temperature,
                max_output_tokens: self.max_output_tokens,
                seed: Some(cfg.seed),
            };
            let resp = complete_with_retry(self.backend, &key, &req, self.retry)?;
            ledger.record(role, phase, &resp);
            attempt += 1;
            match parse_output(kind, &resp.text) {
                Ok(output) => return Ok(Turn { output, prompt, raw: resp.text, attempts: attempt }),
                Err(error) if attempt >= max_attempts => return Err(AgentError::Output { attempts: attempt, error }),
                Err(error) => {
                    log::debug!("{role} {phase}: repairing after {error}");
                    user = format!("{prompt}\n\n{REPAIR_NOTE}{error}\nReturn the corrected output only, in exactly the format requested above.");
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProjectSpec, Stage};
    use crate::gateway::{PlaybackBackend, PlaybackEntry, PlaybackFile};

    fn config(repairs: u32) -> RunConfig {
        let project = ProjectSpec {
            id: "snake".into(),
            title: "Snake Game".into(),
            requirement_text: "A snake game.".into(),
            target_language_label: "JavaScript".into(),
        };
        let mut c = RunConfig::new(project, ProcessModel::Waterfall, "mock");
        c.limits.max_repair_attempts = repairs;
        c
    }

    fn entry(attempt: u32, text: &str) -> PlaybackEntry {
        PlaybackEntry {
            project: "snake".into(),
            process: ProcessModel::Waterfall,
            role: RoleKind::Designer,
            phase: Stage::Design,
            sprint: None,
            attempt,
            text: text.into(),
            prompt_tokens: Some(10),
            completion_tokens: Some(5),
            latency: Some(0.5),
        }
    }

    fn template() -> PromptTemplate {
        PromptTemplate::new(RoleKind::Designer, ProcessModel::Waterfall, Stage::Design, "Design {project_name}").unwrap()
    }

    #[test]
    fn repair_round_trip_accrues_tokens() {
        let backend = PlaybackBackend::new(PlaybackFile { entries: vec![entry(0, "{oops"), entry(1, r#"{"ok": true}"#)] });
        let cfg = config(1);
        let ctx = AgentContext::new(&backend, &cfg);
        let mut ledger = TokenLedger::new();
        let b = Bindings::new().set("project_name", "Snake");
        let turn = ctx
            .invoke(RoleKind::Designer, Phase::new(Stage::Design), MessageKind::DesignDoc, &template(), &b, &mut ledger)
            .unwrap();
        assert_eq!(turn.attempts, 2);
        assert_eq!(turn.prompt, "Design Snake");
        assert_eq!(ledger.entries().len(), 2);
        assert_eq!(ledger.total_tokens(), 30);
        assert_eq!(ledger.total_latency(), 1.0);
    }

    #[test]
    fn no_repairs_means_first_parse_error_is_final() {
        let backend = PlaybackBackend::new(PlaybackFile { entries: vec![entry(0, "{oops")] });
        let cfg = config(0);
        let ctx = AgentContext::new(&backend, &cfg);
        let mut ledger = TokenLedger::new();
        let b = Bindings::new().set("project_name", "Snake");
        let err = ctx
            .invoke(RoleKind::Designer, Phase::new(Stage::Design), MessageKind::DesignDoc, &template(), &b, &mut ledger)
            .unwrap_err();
        assert!(matches!(err, AgentError::Output { attempts: 1, error: ParseError::MalformedDoc { .. } }));
        assert_eq!(ledger.entries().len(), 1);
    }

    #[test]
    fn system_prompts_name_the_role() {
        assert!(system_prompt(RoleKind::SprintManager, ProcessModel::Agile).contains("sprint manager"));
    }
}
