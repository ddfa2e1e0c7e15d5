//! Candidate refinement with a chat-style language model.
//!
//! Candidates are sent in document-order batches. Every batch carries the
//! headings confirmed so far so the model can keep levels consistent.
//! Transport lives behind [`ChatBackend`]; anything that can turn a batch
//! into verdicts directly (such as a rule-based mock) implements
//! [`BatchRefiner`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::candidates::HeadingCandidate;
use crate::model::squeeze_whitespace;
use crate::toc::{DetectedHeading, HeadingSource};

/// Bumped whenever the prompt wording changes.
pub const PROMPT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub batch_size: usize,
    pub max_level: u32,
    pub temperature: f64,
    pub max_retries: u32,
    /// How many of the most recent confirmed headings to send as context.
    pub context_window: usize,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            endpoint_url: "http://localhost:8000/v1/chat/completions".to_string(),
            model_name: "gpt-4o".to_string(),
            api_key_env: "BOOKSEG_API_KEY".to_string(),
            batch_size: 40,
            max_level: 10,
            temperature: 0.0,
            max_retries: 3,
            context_window: 50,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if !(1..=10).contains(&self.max_level) {
            return Err(RefineError::Config(format!(
                "max_level must be within 1..=10, got {}",
                self.max_level
            )));
        }
        if self.batch_size == 0 {
            return Err(RefineError::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinerVerdict {
    pub candidate_index: usize,
    pub is_heading: bool,
    #[serde(default)]
    pub cleaned_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmedHeading {
    pub text: String,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

impl Prompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response shape: {0}")]
    Shape(String),
    #[error("replay error: {0}")]
    Replay(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("response contains no JSON array")]
    NoArray,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("verdict index {index} is outside the batch of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate verdict for candidate {0}")]
    Duplicate(usize),
    #[error("candidate {0} is a heading but has no level")]
    MissingLevel(usize),
    #[error("candidate {0} is not a heading but has a level")]
    UnexpectedLevel(usize),
    #[error("candidate {index} has level {level}, allowed 1..={max}")]
    LevelRange { index: usize, level: u32, max: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RefineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("batch {batch}: backend failed: {source}")]
    Backend { batch: usize, source: BackendError },
    #[error("batch {batch}: invalid response after {attempts} attempts: {reason}; raw response: {raw}")]
    InvalidResponse {
        batch: usize,
        attempts: u32,
        reason: SchemaError,
        raw: String,
    },
}

/// Sends one prompt and returns the model's reply text.
pub trait ChatBackend {
    fn complete(&mut self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &mut B {
    fn complete(&mut self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<String, BackendError> {
        (**self).complete(prompt, cfg)
    }
}

/// Turns one batch of candidates into verdicts.
pub trait BatchRefiner {
    fn refine_batch(
        &mut self,
        batch_index: usize,
        batch: &[HeadingCandidate],
        context: &[ConfirmedHeading],
        cfg: &RefinerConfig,
    ) -> Result<Vec<RefinerVerdict>, RefineError>;
}

const SYSTEM_PROMPT: &str = "You identify section titles in book pages. \
You receive heading candidates extracted from a PDF together with layout features \
and the text that follows each candidate.";

fn write_features(out: &mut String, c: &HeadingCandidate) {
    let f = &c.features;
    let _ = write!(out, "page:{} top:{} left:{} width:{} height:{}", c.page, f.top, f.left, f.width, f.height);
    if let Some(id) = &f.font_id {
        let _ = write!(out, " font_id:{id}");
    }
    if let Some(size) = f.font_size {
        let _ = write!(out, " font_size:{size}");
    }
    if let Some(bold) = f.bold {
        let _ = write!(out, " bold:{bold}");
    }
}

/// Builds the prompt for one batch. Candidates are numbered from 0 and the
/// model must answer with a JSON array of verdicts only.
pub fn build_prompt(batch: &[HeadingCandidate], context: &[ConfirmedHeading], cfg: &RefinerConfig) -> Prompt {
    let mut user = String::new();
    let _ = writeln!(user, "Tasks:");
    let _ = writeln!(
        user,
        "1. Clean each candidate: remove noise such as fragmented text or special characters."
    );
    let _ = writeln!(
        user,
        "2. Decide whether each candidate is a true section heading or noise, using its text, its layout features and the text that follows it."
    );
    let _ = writeln!(
        user,
        "3. Assign each heading a hierarchy level (typically 2-3 levels, up to {} if needed), consistent with the previously identified headings listed below.",
        cfg.max_level
    );
    let _ = writeln!(
        user,
        "4. Respond ONLY with a JSON array containing one object per candidate: \
{{\"candidate_index\": <number>, \"is_heading\": <true|false>, \"cleaned_text\": <string>, \"level\": <number, only when is_heading is true>}}. No other text."
    );
    let _ = writeln!(user);
    let _ = writeln!(user, "Previously identified headings (text | level):");
    if context.is_empty() {
        let _ = writeln!(user, "(none)");
    }
    for h in context {
        let _ = writeln!(user, "- {} | {}", h.text, h.level);
    }
    let _ = writeln!(user);
    let _ = writeln!(user, "Candidates:");
    for (i, c) in batch.iter().enumerate() {
        let _ = writeln!(user, "[{i}] text: {}", c.text);
        let mut feats = String::new();
        write_features(&mut feats, c);
        let _ = writeln!(user, "    features: {feats}");
        let _ = writeln!(user, "    following_text: {}", c.trailing_text);
    }
    Prompt {
        system: SYSTEM_PROMPT.to_string(),
        user,
    }
}

/// Pulls the JSON array out of a reply that may be wrapped in prose or a
/// Markdown code fence.
pub fn extract_json_array(raw: &str) -> Option<&str> {
    let mut text = raw.trim();
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let after = after.strip_prefix("json").unwrap_or(after);
        if let Some(end) = after.find("```") {
            text = after[..end].trim();
        }
    }
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    (end > start).then(|| &text[start..=end])
}

/// Parses and validates the verdicts for a batch of `len` candidates.
pub fn parse_verdicts(raw: &str, len: usize, max_level: u32) -> Result<Vec<RefinerVerdict>, SchemaError> {
    let json = extract_json_array(raw).ok_or(SchemaError::NoArray)?;
    let verdicts: Vec<RefinerVerdict> =
        serde_json::from_str(json).map_err(|e| SchemaError::Json(e.to_string()))?;
    let mut seen = alloc::vec![false; len];
    for v in &verdicts {
        let index = v.candidate_index;
        if index >= len {
            return Err(SchemaError::IndexOutOfRange { index, len });
        }
        if seen[index] {
            return Err(SchemaError::Duplicate(index));
        }
        seen[index] = true;
        match (v.is_heading, v.level) {
            (true, None) => return Err(SchemaError::MissingLevel(index)),
            (false, Some(_)) => return Err(SchemaError::UnexpectedLevel(index)),
            (true, Some(level)) if !(1..=max_level).contains(&level) => {
                return Err(SchemaError::LevelRange { index, level, max: max_level })
            }
            _ => {}
        }
    }
    Ok(verdicts)
}

/// Refines batches by prompting a chat model, retrying replies that fail
/// to parse or validate.
pub struct LlmRefiner<B> {
    backend: B,
}

impl<B: ChatBackend> LlmRefiner<B> {
    pub fn new(backend: B) -> Self {
        LlmRefiner { backend }
    }

    pub fn into_inner(self) -> B {
        self.backend
    }
}

impl<B: ChatBackend> BatchRefiner for LlmRefiner<B> {
    fn refine_batch(
        &mut self,
        batch_index: usize,
        batch: &[HeadingCandidate],
        context: &[ConfirmedHeading],
        cfg: &RefinerConfig,
    ) -> Result<Vec<RefinerVerdict>, RefineError> {
        let prompt = build_prompt(batch, context, cfg);
        let attempts = cfg.max_retries + 1;
        let mut last = None;
        for _ in 0..attempts {
            let raw = self
                .backend
                .complete(&prompt, cfg)
                .map_err(|source| RefineError::Backend { batch: batch_index, source })?;
            match parse_verdicts(&raw, batch.len(), cfg.max_level) {
                Ok(v) => return Ok(v),
                Err(reason) => last = Some((reason, raw)),
            }
        }
        let (reason, raw) = last.expect("at least one attempt");
        Err(RefineError::InvalidResponse {
            batch: batch_index,
            attempts,
            reason,
            raw,
        })
    }
}

/// Runs every candidate through `refiner` and returns the confirmed
/// headings in candidate order.
pub fn refine<R: BatchRefiner + ?Sized>(
    candidates: &[HeadingCandidate],
    cfg: &RefinerConfig,
    refiner: &mut R,
) -> Result<Vec<DetectedHeading>, RefineError> {
    cfg.validate()?;
    let mut confirmed: Vec<ConfirmedHeading> = Vec::new();
    let mut out = Vec::new();
    for (batch_index, batch) in candidates.chunks(cfg.batch_size).enumerate() {
        let context_start = confirmed.len().saturating_sub(cfg.context_window);
        let mut verdicts = refiner.refine_batch(batch_index, batch, &confirmed[context_start..], cfg)?;
        verdicts.sort_by_key(|v| v.candidate_index);
        for v in verdicts {
            if !v.is_heading {
                continue;
            }
            let Some(level) = v.level else { continue };
            let candidate = &batch[v.candidate_index];
            let mut text = squeeze_whitespace(&v.cleaned_text);
            if text.is_empty() {
                text = squeeze_whitespace(&candidate.text);
            }
            if text.is_empty() {
                continue;
            }
            confirmed.push(ConfirmedHeading { text: text.clone(), level });
            out.push(DetectedHeading {
                level,
                text,
                page: candidate.page,
                source: HeadingSource::Llm,
            });
        }
    }
    Ok(out)
}
