use serde::{Deserialize, Serialize};

use super::CompletionResponse;
use crate::domain::{Phase, RoleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub role: RoleKind,
    pub phase: Phase,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency: f64,
}

/// Per-run token and latency accounting. Every completion is recorded,
/// including repair round-trips.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenLedger {
    entries: Vec<LedgerEntry>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, role: RoleKind, phase: Phase, resp: &CompletionResponse) {
        self.entries.push(LedgerEntry {
            role,
            phase,
            prompt_tokens: resp.prompt_tokens,
            completion_tokens: resp.completion_tokens,
            latency: resp.latency,
        });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    /// C1.
    pub fn total_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.prompt_tokens + e.completion_tokens).sum()
    }

    /// C2, in seconds.
    pub fn total_latency(&self) -> f64 {
        self.entries.iter().map(|e| e.latency).sum()
    }
}
