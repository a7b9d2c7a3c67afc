use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = include_str!("../../templates/extraction.txt");
pub const DEFAULT_QUERY_TEMPLATE: &str = include_str!("../../templates/query.txt");
pub const DEFAULT_ANSWER_TEMPLATE: &str = include_str!("../../templates/answer.txt");

/// Prompt text with `{name}` placeholders.
///
/// Substitution is single-pass, so braces inside substituted values are
/// never expanded again.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    /// Fails unless every name in `required` appears as a placeholder.
    pub fn new(text: impl Into<String>, required: &[&str]) -> Result<Self> {
        let text = text.into();
        for name in required {
            if !text.contains(&format!("{{{name}}}")) {
                return Err(Error::Template(format!("missing placeholder {{{name}}}")));
            }
        }
        Ok(Self { text })
    }

    pub fn from_file(path: impl AsRef<Path>, required: &[&str]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text, required)
    }

    pub fn extraction() -> Self {
        Self::new(DEFAULT_EXTRACTION_TEMPLATE, &["chunk_text"]).expect("bundled template")
    }

    pub fn query() -> Self {
        Self::new(DEFAULT_QUERY_TEMPLATE, &["query"]).expect("bundled template")
    }

    pub fn answer() -> Self {
        Self::new(DEFAULT_ANSWER_TEMPLATE, &["context", "question", "options"]).expect("bundled template")
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Unknown placeholders are left as written.
    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.text.len());
        let mut rest = self.text.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let close = after.find('}');
            let value = close.and_then(|c| {
                let name = &after[..c];
                vars.iter().find(|(k, _)| *k == name).map(|(_, v)| (*v, c))
            });
            match value {
                Some((v, c)) => {
                    out.push_str(v);
                    rest = &after[c + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}
