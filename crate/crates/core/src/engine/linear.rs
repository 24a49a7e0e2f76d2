//! Single-pass engines: Waterfall and V-Model.
//!
//! Both walk their schedule once with no backward edges. A failing test
//! report is recorded and the run moves on.

use super::{failed, EngineError, PhasePlan, RunContext};
use crate::agents::PriorArtifact;
use crate::domain::{ProcessModel, RoleKind};
use crate::pool::MessageKind;

fn label(role: RoleKind, kind: MessageKind, stage: impl std::fmt::Display) -> String {
    let what = match kind {
        MessageKind::TestPlan => "test plan",
        MessageKind::TestReport => "test report",
        _ => "artifact",
    };
    format!("{} {what} ({stage})", role.slug())
}

fn run_step(r: &mut RunContext<'_>, step: &PhasePlan) -> Result<(), EngineError> {
    let phase = step.phase;
    r.state.enter(phase)?;
    r.sync(step.actor)?;
    let drafting_plan = step.produces == MessageKind::TestPlan;

    let mut references = Vec::new();
    let mut prior = Vec::new();
    if let (Some(pair), false) = (step.validation_pair, drafting_plan) {
        let plan = r
            .inbox(step.actor)
            .iter()
            .rev()
            .find(|m| m.kind == MessageKind::TestPlan && m.phase.stage == pair.stage)
            .ok_or(EngineError::MissingPlan(phase.stage))?;
        references.push(plan.id);
        prior.push(PriorArtifact::new(label(plan.sender, plan.kind, phase.stage), plan.content.clone()));
    }
    if step.consumes.contains(&MessageKind::CodeBundle) {
        prior.extend(r.code_prior());
    }
    if step.consumes.contains(&MessageKind::TestReport) {
        prior.extend(
            r.inbox(step.actor)
                .iter()
                .filter(|m| m.kind == MessageKind::TestReport)
                .map(|m| PriorArtifact::new(label(m.sender, m.kind, m.phase.stage), m.content.clone())),
        );
    }
    let bindings = r.base_bindings(step.actor).prior(prior);

    match r.activate(step.actor, phase, step.produces, &bindings) {
        Ok(turn) => {
            r.store(step.actor, phase, &turn, references)?;
            Ok(())
        }
        // A plan that cannot be drafted surfaces when its execution starts.
        Err(e) if drafting_plan => {
            log::warn!("{} {phase}: no test plan drafted: {e}", step.actor);
            Ok(())
        }
        Err(e) => Err(failed(phase, e)),
    }
}

fn run_linear(r: &mut RunContext<'_>, process: ProcessModel) -> Result<(), EngineError> {
    debug_assert_eq!(r.cfg.process, process);
    for step in super::schedule(process) {
        run_step(r, step)?;
    }
    Ok(())
}

/// Requirements, design, implementation, three test levels, deployment.
pub fn run_waterfall(r: &mut RunContext<'_>) -> Result<(), EngineError> {
    run_linear(r, ProcessModel::Waterfall)
}

/// Descending leg drafts a test plan after each development stage; the
/// ascending leg executes the plans from unit up to acceptance.
pub fn run_vmodel(r: &mut RunContext<'_>) -> Result<(), EngineError> {
    run_linear(r, ProcessModel::VModel)
}
