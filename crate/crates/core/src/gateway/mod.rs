//! Completion providers and token accounting.
//!
//! Two backends sit behind [`CompletionBackend`]: [`OpenAiBackend`] speaks the
//! OpenAI-compatible chat-completions protocol, [`PlaybackBackend`] replays
//! canned responses keyed by the run schedule.

mod ledger;
mod openai;
mod playback;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ProcessModel, RoleKind, Stage};

pub use ledger::{LedgerEntry, TokenLedger};
pub use openai::{OpenAiBackend, OpenAiConfig};
pub use playback::{estimate_tokens, PlaybackBackend, PlaybackEntry, PlaybackFile, WILDCARD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("provider returned {status}: {body}")]
    ProviderError { status: u16, body: String },
    #[error("no playback entry for {0}")]
    PlaybackMiss(PlaybackKey),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors worth retrying: rate limits, server errors, timeouts, dropped connections.
    pub fn is_transient(&self) -> bool {
        match self {
            GatewayError::ProviderError { status, .. } => *status == 429 || *status >= 500,
            GatewayError::Timeout(_) | GatewayError::Transport(_) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_label: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Seconds.
    pub latency: f64,
}

/// Schedule position of a completion call. The playback backend looks up
/// responses by this key; live backends ignore it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaybackKey {
    pub project: String,
    pub process: ProcessModel,
    pub role: RoleKind,
    pub phase: Stage,
    #[serde(default)]
    pub sprint: Option<u32>,
    #[serde(default)]
    pub attempt: u32,
}

impl std::fmt::Display for PlaybackKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {}, ", self.project, self.process, self.role, self.phase)?;
        match self.sprint {
            Some(s) => write!(f, "sprint {s}, ")?,
            None => f.write_str("-, ")?,
        }
        write!(f, "attempt {})", self.attempt)
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, key: &PlaybackKey, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;

    /// True when identical inputs always give identical outputs and latencies.
    fn is_deterministic(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn new(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::from_millis(500) }
    }
}

/// Calls the backend, retrying transient failures with exponential backoff.
pub fn complete_with_retry(
    backend: &dyn CompletionBackend,
    key: &PlaybackKey,
    req: &CompletionRequest,
    policy: RetryPolicy,
) -> Result<CompletionResponse, GatewayError> {
    req.validate()?;
    let mut attempt = 0;
    loop {
        match backend.complete(key, req) {
            Err(e) if e.is_transient() && attempt < policy.max_retries => {
                let delay = policy.base_delay.saturating_mul(1 << attempt.min(16));
                log::warn!("transient provider error on {key}: {e}; retrying in {delay:?}");
                thread::sleep(delay);
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl CompletionBackend for Flaky {
        fn complete(&self, _: &PlaybackKey, _: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(GatewayError::ProviderError { status: 503, body: "busy".into() })
            } else {
                Ok(CompletionResponse { text: "ok".into(), prompt_tokens: 1, completion_tokens: 1, latency: 0.0 })
            }
        }
    }

    fn key() -> PlaybackKey {
        PlaybackKey {
            project: "p".into(),
            process: ProcessModel::Waterfall,
            role: RoleKind::Designer,
            phase: Stage::Design,
            sprint: None,
            attempt: 0,
        }
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            model_label: "m".into(),
            system_prompt: "sys".into(),
            user_prompt: "user".into(),
            temperature: 0.0,
            max_output_tokens: 16,
            seed: None,
        }
    }

    #[test]
    fn retries_transient_errors_up_to_budget() {
        let policy = RetryPolicy { max_retries: 2, base_delay: Duration::ZERO };
        let ok = Flaky { failures: 2, calls: AtomicU32::new(0) };
        assert!(complete_with_retry(&ok, &key(), &req(), policy).is_ok());
        let bad = Flaky { failures: 3, calls: AtomicU32::new(0) };
        let err = complete_with_retry(&bad, &key(), &req(), policy).unwrap_err();
        assert!(matches!(err, GatewayError::ProviderError { status: 503, .. }));
        assert_eq!(bad.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn empty_prompt_rejected() {
        let mut r = req();
        r.user_prompt.clear();
        let b = Flaky { failures: 0, calls: AtomicU32::new(0) };
        assert!(matches!(
            complete_with_retry(&b, &key(), &r, RetryPolicy::new(0)),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn client_errors_are_not_transient() {
        assert!(!GatewayError::ProviderError { status: 400, body: String::new() }.is_transient());
        assert!(GatewayError::ProviderError { status: 429, body: String::new() }.is_transient());
    }
}
