//! Agile: one backlog, then sprints of plan, design, build, test, deploy.
//!
//! Failed test cases of a sprint are carried into the next sprint's context.
//! The loop stops after `max_sprints`, or earlier once a sprint passes every
//! test with nothing left in the backlog.

use std::collections::BTreeMap;

use serde_json::json;

use super::backlog::{backlog_from_prd, BacklogItem};
use super::{failed, EngineError, RunContext};
use crate::agents::{Parsed, PriorArtifact};
use crate::domain::{Phase, RoleKind, Stage};
use crate::pool::{Draft, MessageKind};
use crate::workspace::Artifact;

/// Sprint-context cache: formatted artifacts keyed by path, reused while the
/// content hash is unchanged.
#[derive(Debug, Default)]
pub(crate) struct ContextCache {
    entries: BTreeMap<String, (String, PriorArtifact)>,
    pub reused: u64,
    pub rebuilt: u64,
}

impl ContextCache {
    /// Context artifacts, unchanged ones first so truncation drops them first.
    fn assemble<'w>(&mut self, artifacts: impl Iterator<Item = &'w Artifact>) -> Vec<PriorArtifact> {
        let mut unchanged = Vec::new();
        let mut changed = Vec::new();
        for a in artifacts {
            match self.entries.get(&a.path) {
                Some((hash, cached)) if *hash == a.content_hash => {
                    self.reused += 1;
                    unchanged.push(cached.clone());
                }
                _ => {
                    self.rebuilt += 1;
                    let p = PriorArtifact::new(format!("{} (v{})", a.path, a.version), a.text());
                    self.entries.insert(a.path.clone(), (a.content_hash.clone(), p.clone()));
                    changed.push(p);
                }
            }
        }
        unchanged.extend(changed);
        unchanged
    }
}

fn sprint_context(sprint: u32, max: u32, scope: &[BacklogItem], carry: &[String], remaining: usize) -> String {
    let mut out = format!("Sprint {sprint} of {max}.\nSelected backlog items:\n");
    if scope.is_empty() {
        out.push_str("- none (fix carried-over failures and polish)\n");
    }
    for item in scope {
        out.push_str(&format!("- {item}\n"));
    }
    if sprint > 1 {
        out.push_str(&format!("Failed test cases from sprint {} to fix:\n", sprint - 1));
        if carry.is_empty() {
            out.push_str("- none\n");
        }
        for name in carry {
            out.push_str(&format!("- {name}\n"));
        }
    }
    out.push_str(&format!("Backlog items left after this sprint: {remaining}"));
    out
}

fn is_context_doc(a: &Artifact) -> bool {
    a.path == "docs/prd.json" || a.path == "docs/design.json"
}

/// `deterministic` selects a logical snapshot clock (the sprint index) in
/// place of wall-clock seconds.
pub fn run_agile(r: &mut RunContext<'_>, deterministic: bool) -> Result<(), EngineError> {
    let max = r.cfg.limits.max_sprints.max(1);

    let phase = Phase::in_sprint(Stage::Requirements, 0);
    r.state.enter(phase)?;
    let bindings = r.base_bindings(RoleKind::ProjectManager);
    let turn = r.activate(RoleKind::ProjectManager, phase, MessageKind::RequirementDoc, &bindings).map_err(|e| failed(phase, e))?;
    let mut backlog = match &turn.output.parsed {
        Parsed::Doc(prd) => backlog_from_prd(prd),
        _ => Vec::new(),
    };
    r.store(RoleKind::ProjectManager, phase, &turn, Vec::new())?;
    let chunk = backlog.len().div_ceil(max as usize).max(1);

    let mut cache = ContextCache::default();
    let mut carry: Vec<String> = Vec::new();
    for sprint in 1..=max {
        let scope: Vec<BacklogItem> = backlog.drain(..chunk.min(backlog.len())).collect();
        let context = sprint_context(sprint, max, &scope, &carry, backlog.len());

        // Sprint planning from cached workspace context.
        let phase = Phase::in_sprint(Stage::SprintPlanning, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::SprintManager)?;
        let docs: Vec<&Artifact> = r.ws.latest_all().filter(|a| is_context_doc(a) || a.is_code()).collect();
        let prior = cache.assemble(docs.into_iter());
        let bindings = r.base_bindings(RoleKind::SprintManager).set("sprint_context", context.clone()).prior(prior);
        let turn = r.activate(RoleKind::SprintManager, phase, MessageKind::SprintPlan, &bindings).map_err(|e| failed(phase, e))?;
        r.store(RoleKind::SprintManager, phase, &turn, Vec::new())?;

        let phase = Phase::in_sprint(Stage::Design, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::Designer)?;
        let mut prior = Vec::new();
        if let Some(m) = r.latest(RoleKind::Designer, MessageKind::DesignDoc) {
            prior.push(PriorArtifact::new("current design", m.content.clone()));
        }
        if let Some(m) = r.latest(RoleKind::Designer, MessageKind::SprintPlan) {
            prior.push(PriorArtifact::new(format!("sprint {sprint} plan"), m.content.clone()));
        }
        let bindings = r.base_bindings(RoleKind::Designer).set("sprint_context", context.clone()).prior(prior);
        let turn = r.activate(RoleKind::Designer, phase, MessageKind::DesignDoc, &bindings).map_err(|e| failed(phase, e))?;
        r.store(RoleKind::Designer, phase, &turn, Vec::new())?;

        let phase = Phase::in_sprint(Stage::Implementation, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::Developer)?;
        let bindings = r.base_bindings(RoleKind::Developer).set("sprint_context", context.clone()).prior(r.code_prior());
        let turn = r.activate(RoleKind::Developer, phase, MessageKind::CodeBundle, &bindings).map_err(|e| failed(phase, e))?;
        r.store(RoleKind::Developer, phase, &turn, Vec::new())?;

        let phase = Phase::in_sprint(Stage::Testing, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::Tester)?;
        let bindings = r.base_bindings(RoleKind::Tester).set("sprint_context", context.clone()).prior(r.code_prior());
        let turn = r.activate(RoleKind::Tester, phase, MessageKind::TestReport, &bindings).map_err(|e| failed(phase, e))?;
        let Parsed::Report(report) = turn.output.parsed.clone() else {
            return Err(failed(phase, "tester returned no report"));
        };
        let report_msg = r.store(RoleKind::Tester, phase, &turn, Vec::new())?;

        let phase = Phase::in_sprint(Stage::Deployment, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::Deployer)?;
        let files: String = r.ws.code_files().map(|a| format!("{}\n", a.path)).collect();
        let prior = vec![
            PriorArtifact::new("code files", files),
            PriorArtifact::new(format!("sprint {sprint} test report"), report_msg.content.clone()),
        ];
        let bindings = r.base_bindings(RoleKind::Deployer).set("sprint_context", context.clone()).prior(prior);
        let turn = r.activate(RoleKind::Deployer, phase, MessageKind::DeploymentNote, &bindings).map_err(|e| failed(phase, e))?;
        r.store(RoleKind::Deployer, phase, &turn, Vec::new())?;

        let created_at = if deterministic {
            sprint as u64
        } else {
            std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
        };
        r.ws.snapshot(sprint, created_at).map_err(|e| failed(phase, e))?;

        // Review: assembled by the engine, no model call.
        let phase = Phase::in_sprint(Stage::SprintReview, sprint);
        r.state.enter(phase)?;
        r.sync(RoleKind::SprintManager)?;
        carry = report.failed().map(|c| c.name.clone()).collect();
        let retro = json!({
            "sprint": sprint,
            "passed": report.total() - report.failed_count(),
            "failed": carry,
            "backlog_remaining": backlog.len(),
            "context_cache": {"reused": cache.reused, "rebuilt": cache.rebuilt},
        });
        let text = serde_json::to_string_pretty(&retro)?;
        let path = r.write_doc(MessageKind::SprintRetro, phase, text.clone())?;
        let draft = Draft::new(RoleKind::SprintManager, phase, MessageKind::SprintRetro, text)
            .to(r.recipients(MessageKind::SprintRetro))
            .with_refs(vec![path]);
        let mut draft = draft;
        draft.references = vec![report_msg.id];
        r.publish(draft)?;

        if report.all_pass() && backlog.is_empty() {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_lists_scope_and_carry() {
        let scope = [BacklogItem { priority: 0, text: "Move".into() }];
        let ctx = sprint_context(2, 3, &scope, &["wall collision".into(), "score reset".into()], 4);
        assert!(ctx.contains("Sprint 2 of 3."));
        assert!(ctx.contains("- [P0] Move"));
        assert!(ctx.contains("- wall collision\n- score reset"));
        assert!(ctx.ends_with("left after this sprint: 4"));
        assert!(!sprint_context(1, 3, &scope, &[], 0).contains("Failed test cases"));
    }

    #[test]
    fn cache_reuses_unchanged() {
        let mut ws = crate::workspace::Workspace::in_memory();
        ws.write("a.js", MessageKind::CodeBundle, "a").unwrap();
        ws.write("b.js", MessageKind::CodeBundle, "b").unwrap();
        let mut cache = ContextCache::default();
        cache.assemble(ws.latest_all());
        assert_eq!((cache.reused, cache.rebuilt), (0, 2));
        ws.write("b.js", MessageKind::CodeBundle, "b2").unwrap();
        let got = cache.assemble(ws.latest_all());
        assert_eq!((cache.reused, cache.rebuilt), (1, 3));
        assert_eq!(got[0].label, "a.js (v1)");
        assert_eq!(got[1].label, "b.js (v2)");
    }
}
