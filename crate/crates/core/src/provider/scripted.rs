use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use super::{ChatBackend, LlmRequest, ProviderError};

/// Serves queued responses per request tag, in order. Used to script
/// provider behaviour (including failures) in tests and examples.
#[derive(Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<String, VecDeque<Result<String, ProviderError>>>>,
    calls: Mutex<Vec<(String, String)>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, tag: &str, response: impl Into<String>) -> &Self {
        self.queues.lock().unwrap().entry(tag.to_string()).or_default().push_back(Ok(response.into()));
        self
    }

    pub fn push_error(&self, tag: &str, error: ProviderError) -> &Self {
        self.queues.lock().unwrap().entry(tag.to_string()).or_default().push_back(Err(error));
        self
    }

    /// `(tag, model)` of every call received so far.
    pub fn calls(&self) -> Vec<(String, String)> {
        self.calls.lock().unwrap().clone()
    }

    /// User prompt of every call received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat(&self, model: &str, request: &LlmRequest) -> Result<String, ProviderError> {
        self.calls.lock().unwrap().push((request.request_tag.clone(), model.to_string()));
        self.prompts.lock().unwrap().push(request.user_prompt.clone());
        self.queues
            .lock()
            .unwrap()
            .get_mut(&request.request_tag)
            .and_then(VecDeque::pop_front)
            .unwrap_or_else(|| Err(ProviderError::ScriptExhausted { tag: request.request_tag.clone() }))
    }
}
