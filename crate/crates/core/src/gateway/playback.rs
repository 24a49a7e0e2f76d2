use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError, PlaybackKey};
use crate::domain::{ProcessModel, RoleKind, Stage};

/// Project id that matches any project.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackEntry {
    pub project: String,
    pub process: ProcessModel,
    pub role: RoleKind,
    pub phase: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprint: Option<u32>,
    #[serde(default)]
    pub attempt: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_tokens: Option<u64>,
    /// Simulated latency in seconds; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<f64>,
}

impl PlaybackEntry {
    pub fn key(&self) -> PlaybackKey {
        PlaybackKey {
            project: self.project.clone(),
            process: self.process,
            role: self.role,
            phase: self.phase,
            sprint: self.sprint,
            attempt: self.attempt,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlaybackFile {
    pub entries: Vec<PlaybackEntry>,
}

impl PlaybackFile {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))
    }
}

/// chars/4, rounded up. Used only when a playback entry has no counts.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Replays canned completions. Lookup tries the exact project first, then
/// the `*` wildcard entry for the same schedule position.
#[derive(Debug, Clone, Default)]
pub struct PlaybackBackend {
    entries: HashMap<PlaybackKey, PlaybackEntry>,
}

impl PlaybackBackend {
    pub fn new(file: PlaybackFile) -> Self {
        // Later entries win, like a map literal.
        let entries = file.entries.into_iter().map(|e| (e.key(), e)).collect();
        PlaybackBackend { entries }
    }

    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(PlaybackFile::load(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, key: &PlaybackKey) -> Option<&PlaybackEntry> {
        self.entries.get(key).or_else(|| {
            let wild = PlaybackKey { project: WILDCARD.to_string(), ..key.clone() };
            self.entries.get(&wild)
        })
    }
}

impl CompletionBackend for PlaybackBackend {
    fn complete(&self, key: &PlaybackKey, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let entry = self.lookup(key).ok_or_else(|| GatewayError::PlaybackMiss(key.clone()))?;
        let prompt_tokens = entry
            .prompt_tokens
            .unwrap_or_else(|| estimate_tokens(&req.system_prompt) + estimate_tokens(&req.user_prompt));
        Ok(CompletionResponse {
            text: entry.text.clone(),
            prompt_tokens,
            completion_tokens: entry.completion_tokens.unwrap_or_else(|| estimate_tokens(&entry.text)),
            latency: entry.latency.unwrap_or(0.0),
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(project: &str, text: &str, tokens: Option<(u64, u64)>) -> PlaybackEntry {
        PlaybackEntry {
            project: project.into(),
            process: ProcessModel::Agile,
            role: RoleKind::Tester,
            phase: Stage::Testing,
            sprint: Some(1),
            attempt: 0,
            text: text.into(),
            prompt_tokens: tokens.map(|t| t.0),
            completion_tokens: tokens.map(|t| t.1),
            latency: None,
        }
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            model_label: "mock".into(),
            system_prompt: "abcd".into(),
            user_prompt: "abcdefgh".into(),
            temperature: 0.0,
            max_output_tokens: 10,
            seed: None,
        }
    }

    #[test]
    fn direct_playback() {
        let e = entry("snake", "hello", Some((5, 2)));
        let b = PlaybackBackend::new(PlaybackFile { entries: vec![e.clone()] });
        let r = b.complete(&e.key(), &req()).unwrap();
        assert_eq!((r.text.as_str(), r.prompt_tokens, r.completion_tokens), ("hello", 5, 2));
    }

    #[test]
    fn char_heuristic_when_counts_absent() {
        let e = entry("snake", "12345678", None);
        let b = PlaybackBackend::new(PlaybackFile { entries: vec![e.clone()] });
        let r = b.complete(&e.key(), &req()).unwrap();
        assert_eq!(r.completion_tokens, 2);
        assert_eq!(r.prompt_tokens, 1 + 2);
        assert_eq!(estimate_tokens("123456789"), 3);
    }

    #[test]
    fn unknown_key_misses() {
        let e = entry("snake", "x", None);
        let b = PlaybackBackend::new(PlaybackFile { entries: vec![e.clone()] });
        let mut k = e.key();
        k.attempt = 1;
        assert_eq!(b.complete(&k, &req()), Err(GatewayError::PlaybackMiss(k)));
    }

    #[test]
    fn wildcard_project_fallback() {
        let specific = entry("snake", "specific", None);
        let wild = entry(WILDCARD, "generic", None);
        let b = PlaybackBackend::new(PlaybackFile { entries: vec![specific.clone(), wild] });
        assert_eq!(b.complete(&specific.key(), &req()).unwrap().text, "specific");
        let mut other = specific.key();
        other.project = "tetris".into();
        assert_eq!(b.complete(&other, &req()).unwrap().text, "generic");
    }
}
