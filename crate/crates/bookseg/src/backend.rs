//! Chat backends: an OpenAI-compatible HTTP client plus transcript
//! recording and replay for offline, reproducible runs.

use std::path::Path;
use std::thread;
use std::time::Duration;

use bookseg_core::refiner::{BackendError, ChatBackend, Prompt, RefinerConfig, PROMPT_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Client for a `/chat/completions` endpoint.
///
/// Transport failures, 429 and 5xx responses are retried with exponential
/// backoff; other statuses fail immediately.
pub struct HttpBackend {
    agent: ureq::Agent,
    api_key: Option<String>,
    base_delay: Duration,
}

impl HttpBackend {
    /// Reads the API key from the environment variable named in the config.
    /// A missing key is allowed for local endpoints.
    pub fn from_env(cfg: &RefinerConfig) -> Self {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending requests without authorization", cfg.api_key_env);
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            api_key,
            base_delay: Duration::from_millis(500),
        }
    }

    pub fn with_base_delay(mut self, delay: Duration) -> Self {
        self.base_delay = delay;
        self
    }

    fn request_body(prompt: &Prompt, cfg: &RefinerConfig) -> Value {
        json!({
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
        })
    }

    fn send_once(&self, body: &str, cfg: &RefinerConfig) -> Result<String, (bool, BackendError)> {
        let mut req = self
            .agent
            .post(&cfg.endpoint_url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body)
            .map_err(|e| (true, BackendError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| (true, BackendError::Transport(e.to_string())))?;
        if !(200..300).contains(&status) {
            let retry = status == 429 || status >= 500;
            return Err((retry, BackendError::Status { status, body: text }));
        }
        extract_content(&text).map_err(|e| (false, e))
    }
}

/// Pulls `choices[0].message.content` out of a chat-completions reply.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BackendError::Shape(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Shape("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<String, BackendError> {
        let body = Self::request_body(prompt, cfg).to_string();
        let mut delay = self.base_delay;
        let mut attempt = 0;
        loop {
            match self.send_once(&body, cfg) {
                Ok(content) => return Ok(content),
                Err((true, err)) if attempt < cfg.max_retries => {
                    log::warn!("request failed ({err}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err((_, err)) => return Err(err),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub system: String,
    pub user: String,
    pub response: String,
}

/// Prompt/response pairs captured from a live run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub prompt_version: String,
    pub model_name: String,
    pub exchanges: Vec<Exchange>,
}

impl Transcript {
    pub fn new(model_name: &str) -> Self {
        Transcript {
            prompt_version: PROMPT_VERSION.to_string(),
            model_name: model_name.to_string(),
            exchanges: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let t: Transcript = serde_json::from_str(&text)?;
        Ok(t)
    }
}

/// Wraps a backend and keeps every exchange.
pub struct RecordingBackend<B> {
    inner: B,
    pub transcript: Transcript,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn new(inner: B, model_name: &str) -> Self {
        RecordingBackend {
            inner,
            transcript: Transcript::new(model_name),
        }
    }
}

impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    fn complete(&mut self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<String, BackendError> {
        let response = self.inner.complete(prompt, cfg)?;
        self.transcript.exchanges.push(Exchange {
            system: prompt.system.clone(),
            user: prompt.user.clone(),
            response: response.clone(),
        });
        Ok(response)
    }
}

/// Answers prompts from a transcript, in order. A prompt that differs from
/// the recorded one is an error, so a stale transcript cannot silently
/// drive a changed pipeline.
pub struct ReplayBackend {
    transcript: Transcript,
    next: usize,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Result<Self, BackendError> {
        if transcript.prompt_version != PROMPT_VERSION {
            return Err(BackendError::Replay(format!(
                "transcript has prompt version {}, this build uses {}",
                transcript.prompt_version, PROMPT_VERSION
            )));
        }
        Ok(ReplayBackend { transcript, next: 0 })
    }

    pub fn remaining(&self) -> usize {
        self.transcript.exchanges.len() - self.next
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, prompt: &Prompt, _cfg: &RefinerConfig) -> Result<String, BackendError> {
        let Some(ex) = self.transcript.exchanges.get(self.next) else {
            return Err(BackendError::Replay(format!(
                "transcript exhausted after {} exchanges",
                self.next
            )));
        };
        if ex.system != prompt.system || ex.user != prompt.user {
            return Err(BackendError::Replay(format!(
                "prompt {} differs from the recorded one",
                self.next
            )));
        }
        self.next += 1;
        Ok(ex.response.clone())
    }
}
