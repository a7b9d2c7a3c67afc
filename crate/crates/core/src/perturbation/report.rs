use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    apply_perturbation, Answer, BaselineRecord, Perturbation, PerturbationKind, PerturbationOutcome, SuiteResult,
};
use crate::error::{Error, Result};
use crate::retrieval::{path_to_pseudo_paragraph, RetrievedPath};

/// One line of a suite report file. Each question is an `example` line
/// followed by its `outcome` lines in enumeration order. Contexts are not
/// stored; they are re-rendered from the path on read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum SuiteRecord {
    Example {
        question_id: String,
        question: String,
        path: RetrievedPath,
        baseline: Answer,
        response_text: String,
        tokens: u64,
        calls: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        incomplete: Option<String>,
    },
    Outcome {
        question_id: String,
        kind: PerturbationKind,
        target: usize,
        removed: String,
        normalized_position: f64,
        answer: Answer,
        changed: bool,
        tokens: u64,
        calls: u64,
    },
}

impl SuiteResult {
    pub fn records(&self) -> Vec<SuiteRecord> {
        let mut out = Vec::with_capacity(1 + self.outcomes.len());
        out.push(SuiteRecord::Example {
            question_id: self.question_id.clone(),
            question: self.question.clone(),
            path: self.path.clone(),
            baseline: self.baseline.answer,
            response_text: self.baseline.response_text.clone(),
            tokens: self.baseline.tokens_used,
            calls: self.baseline.generator_calls,
            incomplete: self.incomplete.clone(),
        });
        for o in &self.outcomes {
            out.push(SuiteRecord::Outcome {
                question_id: self.question_id.clone(),
                kind: o.perturbation.kind,
                target: o.perturbation.target,
                removed: o.perturbation.removed_description.clone(),
                normalized_position: o.perturbation.normalized_position,
                answer: o.answer,
                changed: o.changed,
                tokens: o.tokens_used,
                calls: o.generator_calls,
            });
        }
        out
    }
}

pub fn suite_records_to_jsonl(results: &[SuiteResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        for rec in r.records() {
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_suite_records(path: impl AsRef<Path>, results: &[SuiteResult]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, suite_records_to_jsonl(results)?).map_err(|e| Error::io(path, e))
}

pub fn read_suite_records(path: impl AsRef<Path>) -> Result<Vec<SuiteResult>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_suite_records(&text, path)
}

/// Parse a report; `origin` only labels errors.
pub fn parse_suite_records(text: &str, origin: &Path) -> Result<Vec<SuiteResult>> {
    let mut results: Vec<SuiteResult> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::MalformedRecord {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: SuiteRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match rec {
            SuiteRecord::Example {
                question_id,
                question,
                path,
                baseline,
                response_text,
                tokens,
                calls,
                incomplete,
            } => {
                let path = RetrievedPath::from_parts(path.nodes, path.edges).map_err(|e| bad(e.to_string()))?;
                results.push(SuiteResult {
                    question_id,
                    question,
                    baseline: BaselineRecord {
                        context: path_to_pseudo_paragraph(&path),
                        answer: baseline,
                        response_text,
                        generator_calls: calls,
                        tokens_used: tokens,
                    },
                    path,
                    outcomes: Vec::new(),
                    incomplete,
                });
            }
            SuiteRecord::Outcome {
                question_id,
                kind,
                target,
                removed,
                normalized_position,
                answer,
                changed,
                tokens,
                calls,
            } => {
                let current = results
                    .last_mut()
                    .filter(|r| r.question_id == question_id)
                    .ok_or_else(|| bad(format!("outcome for {question_id:?} without a preceding example")))?;
                let perturbation = Perturbation {
                    kind,
                    target,
                    removed_description: removed,
                    normalized_position,
                };
                let perturbed_context =
                    apply_perturbation(&current.path, &perturbation).map_err(|e| bad(e.to_string()))?;
                if changed != super::changed_from(current.baseline.answer, answer) {
                    return Err(bad("changed flag disagrees with answers".into()));
                }
                current.outcomes.push(PerturbationOutcome {
                    perturbation,
                    perturbed_context,
                    answer,
                    changed,
                    generator_calls: calls,
                    tokens_used: tokens,
                });
            }
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::PromptTemplate;
    use crate::fixtures;
    use crate::generator::GeneratorClient;
    use crate::perturbation::run_suite;

    #[test]
    fn round_trip() {
        let (graph, rules, question) = fixtures::build_worked_example();
        let p = fixtures::worked_example_path(&graph);
        let suite = run_suite(
            &question,
            &p,
            &GeneratorClient::mock(rules),
            &PromptTemplate::answer(),
            2,
        )
        .unwrap();
        let text = suite_records_to_jsonl(std::slice::from_ref(&suite)).unwrap();
        assert_eq!(text.lines().count(), 8);
        let back = parse_suite_records(&text, Path::new("mem")).unwrap();
        assert_eq!(back, vec![suite]);
        assert_eq!(suite_records_to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn orphan_outcome_is_rejected() {
        let line = r#"{"record":"outcome","question_id":"q","kind":"node","target":0,"removed":"x","normalized_position":0.0,"answer":"A","changed":false,"tokens":1,"calls":1}"#;
        let err = parse_suite_records(line, Path::new("r.jsonl")).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 1, .. }));
        assert!(parse_suite_records("{nope", Path::new("r.jsonl")).is_err());
    }
}
