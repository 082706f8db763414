//! Record/replay of provider exchanges.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{fingerprint, ChatBackend, LlmRequest, ProviderError};
use crate::util::to_canonical_json;

const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request_tag: String,
    pub model: String,
    pub temperature: f64,
    pub system_prompt: String,
    pub user_prompt: String,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Cassette {
    pub version: u32,
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Self { version: CASSETTE_VERSION, entries: Vec::new() }
    }

    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Cassette(format!("cannot read {}: {e}", path.display())))?;
        let cassette: Cassette = serde_json::from_str(&text)
            .map_err(|e| ProviderError::Cassette(format!("cannot parse {}: {e}", path.display())))?;
        if cassette.version != CASSETTE_VERSION {
            return Err(ProviderError::Cassette(format!(
                "{} has version {}, expected {CASSETTE_VERSION}",
                path.display(),
                cassette.version
            )));
        }
        Ok(cassette)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        let text = to_canonical_json(self).map_err(|e| ProviderError::Cassette(e.to_string()))?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| ProviderError::Cassette(e.to_string()))?;
        }
        std::fs::write(path, text).map_err(|e| ProviderError::Cassette(format!("cannot write {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CassetteMode {
    Record,
    Replay,
}

struct State {
    cassette: Cassette,
    index: HashMap<String, Vec<usize>>,
    cursors: HashMap<String, usize>,
}

/// Wraps another backend (RECORD) or stands in for one (REPLAY).
///
/// Replay returns recorded responses for a fingerprint in recording order;
/// once they are used up, the last one is repeated.
pub struct CassetteBackend {
    mode: CassetteMode,
    inner: Option<Arc<dyn ChatBackend>>,
    state: Mutex<State>,
}

impl CassetteBackend {
    pub fn replay(cassette: Cassette) -> Self {
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in cassette.entries.iter().enumerate() {
            index.entry(e.fingerprint.clone()).or_default().push(i);
        }
        Self {
            mode: CassetteMode::Replay,
            inner: None,
            state: Mutex::new(State { cassette, index, cursors: HashMap::new() }),
        }
    }

    pub fn replay_file(path: &Path) -> Result<Self, ProviderError> {
        Ok(Self::replay(Cassette::load(path)?))
    }

    pub fn record(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            mode: CassetteMode::Record,
            inner: Some(inner),
            state: Mutex::new(State { cassette: Cassette::new(), index: HashMap::new(), cursors: HashMap::new() }),
        }
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }

    /// A copy of everything recorded (or loaded) so far.
    pub fn cassette(&self) -> Cassette {
        self.state.lock().expect("cassette lock poisoned").cassette.clone()
    }

    pub fn save(&self, path: &Path) -> Result<(), ProviderError> {
        self.cassette().save(path)
    }
}

impl ChatBackend for CassetteBackend {
    fn chat(&self, model: &str, request: &LlmRequest) -> Result<String, ProviderError> {
        let fp = fingerprint(request, model);
        match self.mode {
            CassetteMode::Replay => {
                let mut state = self.state.lock().expect("cassette lock poisoned");
                let Some(positions) = state.index.get(&fp).cloned() else {
                    return Err(ProviderError::ReplayMiss { fingerprint: fp, tag: request.request_tag.clone() });
                };
                let cursor = state.cursors.entry(fp).or_insert(0);
                let pos = positions[(*cursor).min(positions.len() - 1)];
                *cursor += 1;
                Ok(state.cassette.entries[pos].response.clone())
            }
            CassetteMode::Record => {
                let inner = self.inner.as_ref().expect("record mode has an inner backend");
                // Hold the lock across the call so entries keep request order.
                let mut state = self.state.lock().expect("cassette lock poisoned");
                let response = inner.chat(model, request)?;
                let position = state.cassette.entries.len();
                state.index.entry(fp.clone()).or_default().push(position);
                state.cassette.entries.push(CassetteEntry {
                    fingerprint: fp,
                    request_tag: request.request_tag.clone(),
                    model: model.to_string(),
                    temperature: request.temperature,
                    system_prompt: request.system_prompt.clone(),
                    user_prompt: request.user_prompt.clone(),
                    response: response.clone(),
                });
                Ok(response)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ScriptedBackend, Tier};

    fn req(prompt: &str) -> LlmRequest {
        LlmRequest {
            tier_hint: Tier::Cheap,
            system_prompt: String::new(),
            user_prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: 10,
            request_tag: "t".into(),
        }
    }

    #[test]
    fn record_then_replay_is_byte_identical() {
        let scripted = Arc::new(ScriptedBackend::new());
        scripted.push("t", "first answer\n");
        scripted.push("t", "second");
        let recorder = CassetteBackend::record(scripted);
        assert_eq!(recorder.chat("m", &req("a")).unwrap(), "first answer\n");
        assert_eq!(recorder.chat("m", &req("b")).unwrap(), "second");

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        recorder.save(&path).unwrap();

        let replay = CassetteBackend::replay_file(&path).unwrap();
        assert_eq!(replay.chat("m", &req("b")).unwrap(), "second");
        assert_eq!(replay.chat("m", &req("a")).unwrap(), "first answer\n");
    }

    #[test]
    fn replay_miss_names_the_fingerprint() {
        let replay = CassetteBackend::replay(Cassette::new());
        let err = replay.chat("m", &req("x")).unwrap_err();
        match err {
            ProviderError::ReplayMiss { fingerprint: fp, .. } => assert_eq!(fp, fingerprint(&req("x"), "m")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn repeated_fingerprints_replay_in_order() {
        let scripted = Arc::new(ScriptedBackend::new());
        scripted.push("t", "one");
        scripted.push("t", "two");
        let recorder = CassetteBackend::record(scripted);
        recorder.chat("m", &req("same")).unwrap();
        recorder.chat("m", &req("same")).unwrap();
        let replay = CassetteBackend::replay(recorder.cassette());
        assert_eq!(replay.chat("m", &req("same")).unwrap(), "one");
        assert_eq!(replay.chat("m", &req("same")).unwrap(), "two");
        assert_eq!(replay.chat("m", &req("same")).unwrap(), "two");
    }

    #[test]
    fn missing_cassette_file_is_an_error() {
        assert!(matches!(
            CassetteBackend::replay_file(Path::new("/nonexistent/cassette.json")),
            Err(ProviderError::Cassette(_))
        ));
    }
}
