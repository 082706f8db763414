//! The language-model boundary.
//!
//! [`Provider::complete`] routes each [`LlmRequest`] to the cheap or strong
//! model tier according to a [`CascadePolicy`] and the failure history kept
//! in a [`CascadeSession`], then hands it to a [`ChatBackend`]: a live HTTP
//! endpoint, a cassette (record or replay), a scripted queue for tests, or
//! the deterministic offline analyst.

mod cassette;
mod http;
pub mod offline;
mod scripted;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cassette::{Cassette, CassetteBackend, CassetteEntry, CassetteMode};
pub use http::{HttpBackend, ENV_API_KEY, ENV_BASE_URL};
pub use offline::OfflineBackend;
pub use scripted::ScriptedBackend;

/// Request purpose labels used across the pipeline.
pub mod tags {
    pub const SUMMARY: &str = "summary";
    pub const SUBGOAL: &str = "subgoal";
    pub const SUBQUESTION: &str = "subquestion";
    pub const FOLLOWUP: &str = "followup";
    pub const CODEGEN: &str = "codegen";
    pub const OBSERVE: &str = "observe";
    pub const SYNTHESIZE: &str = "synthesize";
    pub const JUDGE: &str = "judge";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tier {
    Cheap,
    Strong,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Cheap => "CHEAP",
            Tier::Strong => "STRONG",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub tier_hint: Tier,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("endpoint returned status {status}: {message}")]
    Api { status: u16, message: String },
    #[error("cassette has no recorded response for {tag} request {fingerprint}")]
    ReplayMiss { fingerprint: String, tag: String },
    #[error("prompt needs about {estimated} tokens, limit is {limit}")]
    TokenLimit { estimated: usize, limit: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend has no response queued for tag {tag}")]
    ScriptExhausted { tag: String },
    #[error("backend cannot serve {tag} requests")]
    Unsupported { tag: String },
    #[error("cassette i/o: {0}")]
    Cassette(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::Timeout(_))
    }
}

/// Anything that can answer a chat-completion request for a given model id.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, model: &str, request: &LlmRequest) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadePolicy {
    pub cheap_model: String,
    pub strong_model: String,
    pub escalation_failure_count: u32,
    pub always_strong_tags: BTreeSet<String>,
}

impl Default for CascadePolicy {
    fn default() -> Self {
        Self {
            cheap_model: "cheap-model".to_string(),
            strong_model: "strong-model".to_string(),
            escalation_failure_count: 2,
            always_strong_tags: BTreeSet::new(),
        }
    }
}

impl CascadePolicy {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.escalation_failure_count < 1 {
            return Err(ProviderError::Config("escalation_failure_count must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_for(&self, tier: Tier) -> &str {
        match tier {
            Tier::Cheap => &self.cheap_model,
            Tier::Strong => &self.strong_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub sequence: usize,
    pub tag: String,
    pub tier: Tier,
    pub model: String,
    pub ok: bool,
}

#[derive(Debug, Default)]
struct SessionState {
    consecutive_failures: BTreeMap<String, u32>,
    escalated: BTreeSet<String>,
    log: Vec<RouteRecord>,
}

/// Per-analysis routing state: consecutive failures per tag, the tags that
/// have been escalated, and a log of every routed request.
#[derive(Debug, Default)]
pub struct CascadeSession {
    state: Mutex<SessionState>,
}

impl CascadeSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Picks the tier for `request`. Escalation is sticky: once a tag has
    /// reached the failure threshold it stays on the strong tier.
    pub fn route(&self, request: &LlmRequest, policy: &CascadePolicy) -> Tier {
        let mut state = self.state.lock().expect("cascade session poisoned");
        let tag = &request.request_tag;
        if request.tier_hint == Tier::Strong || policy.always_strong_tags.contains(tag) {
            return Tier::Strong;
        }
        if state.escalated.contains(tag) {
            return Tier::Strong;
        }
        let failures = state.consecutive_failures.get(tag).copied().unwrap_or(0);
        if failures >= policy.escalation_failure_count {
            state.escalated.insert(tag.clone());
            return Tier::Strong;
        }
        Tier::Cheap
    }

    /// Reports a failed use of a response for `tag` (invalid output, failing
    /// program). Reaching the threshold escalates the tag.
    pub fn record_failure(&self, tag: &str, policy: &CascadePolicy) {
        let mut state = self.state.lock().expect("cascade session poisoned");
        let count = state.consecutive_failures.entry(tag.to_string()).or_insert(0);
        *count += 1;
        if *count >= policy.escalation_failure_count {
            state.escalated.insert(tag.to_string());
        }
    }

    pub fn record_success(&self, tag: &str) {
        let mut state = self.state.lock().expect("cascade session poisoned");
        state.consecutive_failures.insert(tag.to_string(), 0);
    }

    pub fn consecutive_failures(&self, tag: &str) -> u32 {
        let state = self.state.lock().expect("cascade session poisoned");
        state.consecutive_failures.get(tag).copied().unwrap_or(0)
    }

    pub fn is_escalated(&self, tag: &str) -> bool {
        self.state.lock().expect("cascade session poisoned").escalated.contains(tag)
    }

    fn log_route(&self, tag: &str, tier: Tier, model: &str, ok: bool) {
        let mut state = self.state.lock().expect("cascade session poisoned");
        let sequence = state.log.len();
        state.log.push(RouteRecord { sequence, tag: tag.to_string(), tier, model: model.to_string(), ok });
    }

    pub fn log(&self) -> Vec<RouteRecord> {
        self.state.lock().expect("cascade session poisoned").log.clone()
    }

    /// Clears failure counters, escalations and the log.
    pub fn reset(&self) {
        *self.state.lock().expect("cascade session poisoned") = SessionState::default();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff_ms: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderSettings {
    pub default_temperature: f64,
    /// Per-tag overrides of `default_temperature`.
    pub temperatures: BTreeMap<String, f64>,
    pub max_tokens: u32,
    pub max_temperature: f64,
    pub max_tokens_limit: u32,
    pub context_token_limit: usize,
    pub retry: RetryPolicy,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            default_temperature: 0.0,
            temperatures: BTreeMap::new(),
            max_tokens: 2048,
            max_temperature: 2.0,
            max_tokens_limit: 32_768,
            context_token_limit: 128_000,
            retry: RetryPolicy::default(),
        }
    }
}

impl ProviderSettings {
    pub fn temperature_for(&self, tag: &str) -> f64 {
        self.temperatures.get(tag).copied().unwrap_or(self.default_temperature)
    }
}

/// A completed request together with where it was routed.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub tier: Tier,
    pub model: String,
}

#[derive(Clone)]
pub struct Provider {
    backend: Arc<dyn ChatBackend>,
    policy: CascadePolicy,
    settings: ProviderSettings,
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provider").field("policy", &self.policy).field("settings", &self.settings).finish()
    }
}

impl Provider {
    pub fn new(backend: Arc<dyn ChatBackend>, policy: CascadePolicy, settings: ProviderSettings) -> Self {
        Self { backend, policy, settings }
    }

    /// A provider backed by the deterministic offline analyst.
    pub fn offline() -> Self {
        Self::new(Arc::new(OfflineBackend::new()), CascadePolicy::default(), ProviderSettings::default())
    }

    pub fn policy(&self) -> &CascadePolicy {
        &self.policy
    }

    pub fn settings(&self) -> &ProviderSettings {
        &self.settings
    }

    /// Builds a request with the configured temperature for `tag`.
    pub fn request(&self, tag: &str, system_prompt: &str, user_prompt: impl Into<String>) -> LlmRequest {
        LlmRequest {
            tier_hint: Tier::Cheap,
            system_prompt: system_prompt.to_string(),
            user_prompt: user_prompt.into(),
            temperature: self.settings.temperature_for(tag),
            max_tokens: self.settings.max_tokens,
            request_tag: tag.to_string(),
        }
    }

    fn check_bounds(&self, request: &LlmRequest) -> Result<(), ProviderError> {
        let s = &self.settings;
        if !(0.0..=s.max_temperature).contains(&request.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, {}]",
                request.temperature, s.max_temperature
            )));
        }
        if request.max_tokens == 0 || request.max_tokens > s.max_tokens_limit {
            return Err(ProviderError::InvalidRequest(format!(
                "max_tokens {} outside [1, {}]",
                request.max_tokens, s.max_tokens_limit
            )));
        }
        let chars = request.system_prompt.chars().count() + request.user_prompt.chars().count();
        let estimated = chars.div_ceil(4) + request.max_tokens as usize;
        if estimated > s.context_token_limit {
            return Err(ProviderError::TokenLimit { estimated, limit: s.context_token_limit });
        }
        Ok(())
    }

    /// Routes and sends `request`, retrying retryable failures with
    /// exponential backoff.
    pub fn complete(&self, request: &LlmRequest, session: &CascadeSession) -> Result<Completion, ProviderError> {
        self.check_bounds(request)?;
        let tier = session.route(request, &self.policy);
        let model = self.policy.model_for(tier).to_string();
        let attempts = self.settings.retry.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            match self.backend.chat(&model, request) {
                Ok(text) => {
                    session.log_route(&request.request_tag, tier, &model, true);
                    return Ok(Completion { text, tier, model });
                }
                Err(e) if e.is_retryable() && attempt + 1 < attempts => {
                    tracing::warn!(tag = %request.request_tag, attempt, error = %e, "retrying provider request");
                    let backoff = self.settings.retry.base_backoff_ms.saturating_mul(1 << attempt);
                    if backoff > 0 {
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                    last = Some(e);
                }
                Err(e) => {
                    last = Some(e);
                    break;
                }
            }
        }
        session.log_route(&request.request_tag, tier, &model, false);
        Err(last.expect("at least one attempt"))
    }
}

/// Line-ending and trailing-whitespace normalization applied before hashing.
pub fn normalize_prompt(text: &str) -> String {
    let unified = text.replace("\r\n", "\n");
    let lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    lines.join("\n").trim_end().to_string()
}

/// Stable digest of everything that determines a response.
pub fn fingerprint(request: &LlmRequest, model: &str) -> String {
    #[derive(Serialize)]
    struct Material<'a> {
        model: &'a str,
        request_tag: &'a str,
        system_prompt: String,
        temperature: String,
        user_prompt: String,
    }
    let material = Material {
        model,
        request_tag: &request.request_tag,
        system_prompt: normalize_prompt(&request.system_prompt),
        temperature: format!("{}", request.temperature),
        user_prompt: normalize_prompt(&request.user_prompt),
    };
    let bytes = serde_json::to_vec(&material).expect("fingerprint material serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str) -> LlmRequest {
        LlmRequest {
            tier_hint: Tier::Cheap,
            system_prompt: "sys".into(),
            user_prompt: "user".into(),
            temperature: 0.0,
            max_tokens: 100,
            request_tag: tag.into(),
        }
    }

    fn scripted_provider(backend: Arc<ScriptedBackend>, policy: CascadePolicy) -> Provider {
        let settings = ProviderSettings { retry: RetryPolicy { max_attempts: 3, base_backoff_ms: 0 }, ..Default::default() };
        Provider::new(backend, policy, settings)
    }

    #[test]
    fn fresh_session_routes_subquestions_cheap() {
        let session = CascadeSession::new();
        assert_eq!(session.route(&req(tags::SUBQUESTION), &CascadePolicy::default()), Tier::Cheap);
    }

    #[test]
    fn repeated_failures_escalate_and_stay_escalated() {
        let policy = CascadePolicy::default();
        let session = CascadeSession::new();
        session.record_failure(tags::CODEGEN, &policy);
        assert_eq!(session.route(&req(tags::CODEGEN), &policy), Tier::Cheap);
        session.record_failure(tags::CODEGEN, &policy);
        assert_eq!(session.route(&req(tags::CODEGEN), &policy), Tier::Strong);
        session.record_success(tags::CODEGEN);
        assert_eq!(session.route(&req(tags::CODEGEN), &policy), Tier::Strong);
        // other tags are unaffected
        assert_eq!(session.route(&req(tags::OBSERVE), &policy), Tier::Cheap);
        session.reset();
        assert_eq!(session.route(&req(tags::CODEGEN), &policy), Tier::Cheap);
    }

    #[test]
    fn always_strong_tags_never_go_cheap() {
        let mut policy = CascadePolicy::default();
        policy.always_strong_tags.insert(tags::SYNTHESIZE.to_string());
        let session = CascadeSession::new();
        assert_eq!(session.route(&req(tags::SYNTHESIZE), &policy), Tier::Strong);
        let mut hinted = req(tags::OBSERVE);
        hinted.tier_hint = Tier::Strong;
        assert_eq!(session.route(&hinted, &policy), Tier::Strong);
    }

    #[test]
    fn fingerprints_cover_fields_and_ignore_trailing_whitespace() {
        let a = req("x");
        assert_eq!(fingerprint(&a, "m"), fingerprint(&a.clone(), "m"));
        let mut hot = a.clone();
        hot.temperature = 0.7;
        assert_ne!(fingerprint(&a, "m"), fingerprint(&hot, "m"));
        assert_ne!(fingerprint(&a, "m"), fingerprint(&a, "other"));
        let mut newline = a.clone();
        newline.user_prompt.push('\n');
        assert_eq!(fingerprint(&a, "m"), fingerprint(&newline, "m"));
        let mut crlf = a.clone();
        crlf.user_prompt = "user  \r\n".into();
        assert_eq!(fingerprint(&a, "m"), fingerprint(&crlf, "m"));
    }

    #[test]
    fn transport_failures_are_retried() {
        let backend = Arc::new(ScriptedBackend::new());
        backend.push_error("t", ProviderError::Transport("reset".into()));
        backend.push_error("t", ProviderError::Transport("reset".into()));
        backend.push("t", "ok");
        let provider = scripted_provider(backend.clone(), CascadePolicy::default());
        let session = CascadeSession::new();
        let out = provider.complete(&req("t"), &session).unwrap();
        assert_eq!(out.text, "ok");
        assert_eq!(backend.calls().len(), 3);
    }

    #[test]
    fn retries_stop_after_three_attempts() {
        let backend = Arc::new(ScriptedBackend::new());
        for _ in 0..4 {
            backend.push_error("t", ProviderError::Timeout("slow".into()));
        }
        let provider = scripted_provider(backend.clone(), CascadePolicy::default());
        let session = CascadeSession::new();
        let err = provider.complete(&req("t"), &session).unwrap_err();
        assert!(matches!(err, ProviderError::Timeout(_)));
        assert_eq!(backend.calls().len(), 3);
        assert!(!session.log()[0].ok);
    }

    #[test]
    fn bounds_are_enforced() {
        let backend = Arc::new(ScriptedBackend::new());
        let provider = scripted_provider(backend, CascadePolicy::default());
        let session = CascadeSession::new();
        let mut hot = req("t");
        hot.temperature = 3.0;
        assert!(matches!(provider.complete(&hot, &session), Err(ProviderError::InvalidRequest(_))));
        let mut huge = req("t");
        huge.user_prompt = "x".repeat(600_000);
        assert!(matches!(provider.complete(&huge, &session), Err(ProviderError::TokenLimit { .. })));
    }

    #[test]
    fn zero_escalation_threshold_is_rejected() {
        let policy = CascadePolicy { escalation_failure_count: 0, ..Default::default() };
        assert!(policy.validate().is_err());
    }
}
