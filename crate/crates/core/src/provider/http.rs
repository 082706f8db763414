use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, LlmRequest, ProviderError};

pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";

/// OpenAI-style chat-completion endpoint (`POST {base}/chat/completions`).
pub struct HttpBackend {
    base_url: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self { base_url: base_url.into().trim_end_matches('/').to_string(), api_key: api_key.into(), agent }
    }

    pub fn from_env(timeout: Duration) -> Result<Self, ProviderError> {
        let key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
        let base = std::env::var(ENV_BASE_URL).ok().filter(|b| !b.is_empty());
        match (key, base) {
            (Some(key), Some(base)) => Ok(Self::new(base, key, timeout)),
            (None, _) => Err(ProviderError::Config(format!("live mode needs {ENV_API_KEY} set to an API key"))),
            (_, None) => Err(ProviderError::Config(format!("live mode needs {ENV_BASE_URL} set to the endpoint base URL"))),
        }
    }
}

impl ChatBackend for HttpBackend {
    fn chat(&self, model: &str, request: &LlmRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
        });
        let response = self
            .agent
            .post(&format!("{}/chat/completions", self.base_url))
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        let value: Value = match response {
            Ok(r) => r.into_json().map_err(|e| ProviderError::Transport(e.to_string()))?,
            Err(ureq::Error::Status(status, r)) => {
                let message = r.into_string().unwrap_or_default();
                return Err(if status == 429 || status >= 500 {
                    ProviderError::Transport(format!("status {status}: {message}"))
                } else {
                    ProviderError::Api { status, message }
                });
            }
            Err(ureq::Error::Transport(t)) => {
                let text = t.to_string();
                return Err(if text.contains("timed out") {
                    ProviderError::Timeout(text)
                } else {
                    ProviderError::Transport(text)
                });
            }
        };
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Api { status: 200, message: format!("unexpected response shape: {value}") })
    }
}
