use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError, PlaybackKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    /// e.g. `https://api.openai.com/v1`; `/chat/completions` is appended.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub credential_env: String,
    /// Model name sent to the provider. Defaults to the run's model label.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    300
}

/// Client for any OpenAI-compatible `/chat/completions` endpoint.
pub struct OpenAiBackend {
    endpoint: String,
    api_key: String,
    model: Option<String>,
    timeout: Duration,
    http: reqwest::blocking::Client,
}

impl std::fmt::Debug for OpenAiBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiBackend")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiBackend {
    /// Reads the credential from the configured environment variable.
    pub fn from_config(cfg: &OpenAiConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&cfg.credential_env)
            .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", cfg.credential_env)))?;
        Self::with_key(cfg, api_key)
    }

    pub fn with_key(cfg: &OpenAiConfig, api_key: String) -> Result<Self, GatewayError> {
        let timeout = Duration::from_secs(cfg.timeout_secs.max(1));
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(OpenAiBackend {
            endpoint: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key,
            model: cfg.model.clone(),
            timeout,
            http,
        })
    }

    fn body(&self, req: &CompletionRequest) -> serde_json::Value {
        let mut body = json!({
            "model": self.model.as_deref().unwrap_or(&req.model_label),
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_prompt},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

impl CompletionBackend for OpenAiBackend {
    fn complete(&self, _key: &PlaybackKey, req: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let started = Instant::now();
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&self.body(req))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    GatewayError::Timeout(self.timeout)
                } else {
                    GatewayError::Transport(e.without_url().to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout(self.timeout)
            } else {
                GatewayError::Transport(e.without_url().to_string())
            }
        })?;
        if !status.is_success() {
            return Err(GatewayError::ProviderError { status: status.as_u16(), body: text });
        }
        let latency = started.elapsed().as_secs_f64();
        let parsed: ChatResponse = serde_json::from_str(&text).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::BadResponse("no choices[0].message.content".into()))?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(CompletionResponse {
            text: content,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            latency,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ProcessModel, RoleKind, Stage};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves one canned HTTP response and hands back the raw request.
    fn serve_once(status: &str, body: &str) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            head.push_str(&String::from_utf8(body).unwrap());
            let mut stream = stream;
            stream.write_all(response.as_bytes()).unwrap();
            tx.send(head).unwrap();
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn key() -> PlaybackKey {
        PlaybackKey {
            project: "snake".into(),
            process: ProcessModel::Waterfall,
            role: RoleKind::Developer,
            phase: Stage::Implementation,
            sprint: None,
            attempt: 0,
        }
    }

    fn req() -> CompletionRequest {
        CompletionRequest {
            model_label: "gpt-4o-mini".into(),
            system_prompt: "You are a developer.".into(),
            user_prompt: "Write code.".into(),
            temperature: 0.0,
            max_output_tokens: 64,
            seed: Some(7),
        }
    }

    fn backend(base_url: String) -> OpenAiBackend {
        let cfg = OpenAiConfig { base_url, credential_env: "UNUSED".into(), model: None, timeout_secs: 10 };
        OpenAiBackend::with_key(&cfg, "sk-test".into()).unwrap()
    }

    #[test]
    fn reads_content_and_usage() {
        let (url, rx) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}],"usage":{"prompt_tokens":12,"completion_tokens":3,"total_tokens":15}}"#,
        );
        let resp = backend(url).complete(&key(), &req()).unwrap();
        assert_eq!(resp.text, "hi there");
        assert_eq!((resp.prompt_tokens, resp.completion_tokens), (12, 3));
        assert!(resp.latency >= 0.0);

        let raw = rx.recv().unwrap();
        assert!(raw.starts_with("POST /v1/chat/completions"));
        assert!(raw.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let body: serde_json::Value = serde_json::from_str(raw.split("\r\n\r\n").nth(1).unwrap()).unwrap();
        assert_eq!(body["model"], "gpt-4o-mini");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "Write code.");
        assert_eq!(body["seed"], 7);
    }

    #[test]
    fn non_success_is_provider_error() {
        let (url, _rx) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
        let err = backend(url).complete(&key(), &req()).unwrap_err();
        assert_eq!(err, GatewayError::ProviderError { status: 429, body: r#"{"error":"slow down"}"#.into() });
        assert!(err.is_transient());
    }

    #[test]
    fn missing_credential_is_config_error() {
        let cfg = OpenAiConfig {
            base_url: "http://localhost".into(),
            credential_env: "SDLC_AGENTS_SURELY_UNSET_KEY".into(),
            model: None,
            timeout_secs: 1,
        };
        assert!(matches!(OpenAiBackend::from_config(&cfg), Err(GatewayError::Config(_))));
    }
}
