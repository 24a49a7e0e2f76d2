//! External quality inputs: static-analysis issue exports (Q1/Q2) and manual
//! test sessions (Q4).

use serde::{Deserialize, Serialize};

use crate::agents::{TestCase, Verdict};
use crate::domain::{failure_ratio, ratio_to_f64, RunRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    #[serde(alias = "smell", alias = "code_smell", alias = "CODE_SMELL", alias = "Smell")]
    Smell,
    #[serde(alias = "vulnerability", alias = "VULNERABILITY", alias = "Vulnerability")]
    Vulnerability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub path: String,
    pub rule_id: String,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueReport {
    pub run_id: String,
    pub issues: Vec<Issue>,
}

impl IssueReport {
    /// Q1.
    pub fn code_smells(&self) -> u64 {
        self.issues.iter().filter(|i| i.severity == Severity::Smell).count() as u64
    }

    /// Q2.
    pub fn vulnerabilities(&self) -> u64 {
        self.issues.iter().filter(|i| i.severity == Severity::Vulnerability).count() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualTestSession {
    pub run_id: String,
    pub tester_label: String,
    pub cases: Vec<TestCase>,
}

impl ManualTestSession {
    /// Q4, `None` for a session with no cases.
    pub fn failure_rate(&self) -> Option<f64> {
        let failed = self.cases.iter().filter(|c| c.verdict == Verdict::Fail).count() as u64;
        failure_ratio(failed, self.cases.len() as u64).map(ratio_to_f64)
    }
}

/// Sets Q1 and Q2 from an issue export. Replaces earlier values.
pub fn apply_issues(record: &mut RunRecord, report: &IssueReport) {
    record.quality.code_smells = Some(report.code_smells());
    record.quality.vulnerabilities = Some(report.vulnerabilities());
}

/// Sets Q4. Returns false, leaving the record untouched, for an empty session.
pub fn apply_manual_session(record: &mut RunRecord, session: &ManualTestSession) -> bool {
    match session.failure_rate() {
        Some(rate) => {
            record.quality.human_bug_rate = Some(rate);
            true
        }
        None => false,
    }
}
