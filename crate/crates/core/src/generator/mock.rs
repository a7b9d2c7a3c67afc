use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, GeneratorRequest, GeneratorResponse};
use crate::error::{Error, Result};
use crate::util::whitespace_tokens;

/// Fires when every trigger occurs in the prompt and no forbidden string does.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub triggers: Vec<String>,
    #[serde(default)]
    pub forbidden: Vec<String>,
    pub answer: String,
}

impl MockRule {
    pub fn new<T: Into<String>>(triggers: impl IntoIterator<Item = T>, answer: impl Into<String>) -> Self {
        Self {
            triggers: triggers.into_iter().map(Into::into).collect(),
            forbidden: Vec::new(),
            answer: answer.into(),
        }
    }

    pub fn forbid<T: Into<String>>(mut self, forbidden: impl IntoIterator<Item = T>) -> Self {
        self.forbidden.extend(forbidden.into_iter().map(Into::into));
        self
    }

    pub fn matches(&self, prompt: &str) -> bool {
        self.triggers.iter().all(|t| prompt.contains(t.as_str()))
            && !self.forbidden.iter().any(|f| prompt.contains(f.as_str()))
    }
}

/// Ordered rules plus a default answer that always matches last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRuleTable {
    pub rules: Vec<MockRule>,
    pub default: String,
}

impl MockRuleTable {
    pub fn new(default: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: default.into(),
        }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn respond(&self, prompt: &str) -> &str {
        self.rules
            .iter()
            .find(|r| r.matches(prompt))
            .map_or(self.default.as_str(), |r| r.answer.as_str())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("rule table serializes");
        s.push('\n');
        s
    }
}

/// Deterministic offline backend; token counts are whitespace counts.
#[derive(Debug, Clone)]
pub struct MockBackend {
    table: MockRuleTable,
}

impl MockBackend {
    pub fn new(table: MockRuleTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &MockRuleTable {
        &self.table
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn generate(&self, req: &GeneratorRequest) -> Result<GeneratorResponse> {
        let text = self.table.respond(&req.prompt).to_string();
        Ok(GeneratorResponse {
            prompt_tokens: whitespace_tokens(&req.prompt) as u64,
            completion_tokens: whitespace_tokens(&text) as u64,
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONTEXT: &str = "pulmonary hypoplasia is risk factor for persistent pulmonary hypertension \
        in the newborn. persistent pulmonary hypertension in the newborn has risk factor oligohydramnios.";

    fn table() -> MockRuleTable {
        MockRuleTable::new("C").with_rule(MockRule::new(["persistent pulmonary hypertension"], "A"))
    }

    #[test]
    fn first_matching_rule_wins_then_default() {
        let backend = MockBackend::new(table());
        let resp = backend.generate(&GeneratorRequest::new(CONTEXT)).unwrap();
        assert_eq!(resp.text, "A");
        assert_eq!(resp.prompt_tokens, 22);
        assert_eq!(resp.completion_tokens, 1);

        let removed = "pulmonary hypoplasia is risk factor for. has risk factor oligohydramnios.";
        let resp = backend.generate(&GeneratorRequest::new(removed)).unwrap();
        assert_eq!(resp.text, "C");
    }

    #[test]
    fn forbidden_blocks_a_rule() {
        let t = MockRuleTable::new("default")
            .with_rule(MockRule::new(["x"], "first").forbid(["y"]))
            .with_rule(MockRule::new(["x"], "second"));
        assert_eq!(t.respond("x"), "first");
        assert_eq!(t.respond("x y"), "second");
        assert_eq!(t.respond("z"), "default");
    }

    #[test]
    fn pure_function_of_prompt() {
        let backend = MockBackend::new(table());
        let req = GeneratorRequest::new(CONTEXT);
        assert_eq!(backend.generate(&req).unwrap(), backend.generate(&req).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let t = table();
        let back: MockRuleTable = serde_json::from_str(&t.to_json_pretty()).unwrap();
        assert_eq!(back, t);
        let minimal: MockRuleTable = serde_json::from_str(r#"{"rules":[{"answer":"B"}],"default":"D"}"#).unwrap();
        assert_eq!(minimal.respond("anything"), "B");
    }
}
