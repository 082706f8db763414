//! Sectioned prompt text.
//!
//! Every user prompt is a sequence of `## Heading` sections. Keeping the
//! layout uniform lets the offline backend and tests read prompts back.

use serde::de::DeserializeOwned;

#[derive(Debug, Default, Clone)]
pub struct PromptBuilder {
    sections: Vec<(String, String)>,
}

impl PromptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section(mut self, heading: &str, body: impl AsRef<str>) -> Self {
        self.sections.push((heading.to_string(), body.as_ref().trim_end().to_string()));
        self
    }

    pub fn build(&self) -> String {
        let mut out = String::new();
        for (heading, body) in &self.sections {
            out.push_str("## ");
            out.push_str(heading);
            out.push('\n');
            out.push_str(body);
            out.push_str("\n\n");
        }
        out.trim_end().to_string() + "\n"
    }
}

/// Returns the body of the first section named `heading`, if present.
pub fn section<'a>(prompt: &'a str, heading: &str) -> Option<&'a str> {
    let marker = format!("## {heading}\n");
    let start = if prompt.starts_with(&marker) {
        marker.len()
    } else {
        prompt.find(&format!("\n{marker}"))? + marker.len() + 1
    };
    let rest = &prompt[start..];
    let end = rest.find("\n## ").unwrap_or(rest.len());
    Some(rest[..end].trim_end())
}

/// Extracts the first JSON array or object embedded in a model response,
/// tolerating code fences and surrounding prose.
pub fn extract_json<T: DeserializeOwned>(response: &str) -> Option<T> {
    let mut delimiters = [('[', ']'), ('{', '}')];
    if response.find('{').unwrap_or(usize::MAX) < response.find('[').unwrap_or(usize::MAX) {
        delimiters.swap(0, 1);
    }
    for (open, close) in delimiters {
        if let (Some(start), Some(end)) = (response.find(open), response.rfind(close)) {
            if start < end {
                if let Ok(v) = serde_json::from_str(&response[start..=end]) {
                    return Some(v);
                }
            }
        }
    }
    None
}
