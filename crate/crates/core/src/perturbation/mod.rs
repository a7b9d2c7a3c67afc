//! Node, edge and sub-path removals over a retrieved path.
//!
//! Removals are applied to the rendered pseudo-paragraph, never to the
//! graph. A suite answers the question once on the intact path and once
//! per removal, recording whether the selected option moved.

mod answer;
mod report;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analysis::{normalized_position, CostRecord};
use crate::error::{Error, Result};
use crate::extraction::PromptTemplate;
use crate::generator::{GeneratorClient, GeneratorRequest};
use crate::retrieval::{predicate_phrase, RetrievedPath};
use crate::util::parallel_map_ordered;

pub use answer::{parse_answer, Answer, AnswerOption};
pub use report::{parse_suite_records, read_suite_records, suite_records_to_jsonl, write_suite_records, SuiteRecord};

/// Edge removals join the endpoints with this separator.
pub const BARE_SEPARATOR: &str = "--";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Node,
    Edge,
    Subpath,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 3] = [
        PerturbationKind::Node,
        PerturbationKind::Edge,
        PerturbationKind::Subpath,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Node => "node",
            PerturbationKind::Edge => "edge",
            PerturbationKind::Subpath => "subpath",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    /// Node index for `Node`, edge index for `Edge` and `Subpath`.
    pub target: usize,
    pub removed_description: String,
    pub normalized_position: f64,
}

/// Text naming a path element, as used in reports.
pub fn describe(p: &RetrievedPath, kind: PerturbationKind, target: usize) -> Result<String> {
    check_target(p, kind, target)?;
    Ok(match kind {
        PerturbationKind::Node => p.nodes[target].name.clone(),
        PerturbationKind::Edge => p.edges[target].predicate.clone(),
        PerturbationKind::Subpath => {
            let (head, tail) = p.edge_endpoints(target);
            format!("{head} {} {tail}", p.edges[target].predicate)
        }
    })
}

pub(crate) fn check_target(p: &RetrievedPath, kind: PerturbationKind, target: usize) -> Result<()> {
    let limit = match kind {
        PerturbationKind::Node => p.node_count(),
        PerturbationKind::Edge | PerturbationKind::Subpath => p.edge_count(),
    };
    if target >= limit {
        return Err(Error::InvalidPerturbation(format!(
            "{kind} index {target} out of range (path has {} nodes)",
            p.node_count()
        )));
    }
    Ok(())
}

/// All nodes left to right, then all edges, then all consecutive triplets.
pub fn enumerate_perturbations(p: &RetrievedPath) -> Vec<Perturbation> {
    let mut out = Vec::with_capacity(3 * p.node_count());
    for kind in PerturbationKind::ALL {
        let count = match kind {
            PerturbationKind::Node => p.node_count(),
            _ => p.edge_count(),
        };
        for target in 0..count {
            out.push(Perturbation {
                kind,
                target,
                removed_description: describe(p, kind, target).expect("index in range"),
                normalized_position: normalized_position(kind, target, p).expect("index in range"),
            });
        }
    }
    out
}

/// Render `p` with one element removed.
pub fn apply_perturbation(p: &RetrievedPath, pert: &Perturbation) -> Result<String> {
    check_target(p, pert.kind, pert.target)?;
    if p.edges.is_empty() {
        // Only a node removal is possible and it leaves nothing.
        return Ok(String::new());
    }
    let removed_node = (pert.kind == PerturbationKind::Node).then(|| p.nodes[pert.target].id);
    let mut sentences = Vec::with_capacity(p.edge_count());
    for i in 0..p.edge_count() {
        if pert.kind == PerturbationKind::Subpath && pert.target == i {
            continue;
        }
        let edge = &p.edges[i];
        let (head, tail) = p.edge_endpoints(i);
        let head = if removed_node == Some(edge.head) { "" } else { head };
        let tail = if removed_node == Some(edge.tail) { "" } else { tail };
        let predicate = if pert.kind == PerturbationKind::Edge && pert.target == i {
            BARE_SEPARATOR.to_string()
        } else {
            predicate_phrase(&edge.predicate)
        };
        let words: Vec<&str> = [head, predicate.as_str(), tail]
            .into_iter()
            .filter(|w| !w.is_empty())
            .collect();
        sentences.push(format!("{}.", words.join(" ")));
    }
    Ok(sentences.join(" "))
}

/// A multiple-choice question as stored in question files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    #[serde(default)]
    pub id: String,
    pub question: String,
    pub options: Vec<String>,
    /// Gold letter, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl Question {
    pub fn new(id: impl Into<String>, question: impl Into<String>, options: &[&str]) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            options: options.iter().map(|o| o.to_string()).collect(),
            answer: None,
            dataset: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.question.trim().is_empty() {
            return Err(Error::InvalidInput("question text is empty".into()));
        }
        if self.options.len() < 2 || self.options.len() > AnswerOption::MAX_OPTIONS {
            return Err(Error::InvalidInput(format!(
                "question needs 2..=26 options, got {}",
                self.options.len()
            )));
        }
        Ok(())
    }

    pub fn render_options(&self) -> String {
        self.options
            .iter()
            .enumerate()
            .map(|(i, o)| format!("{}. {o}", AnswerOption::from_index(i).expect("validated").letter()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn option_text(&self, a: Answer) -> Option<&str> {
        a.as_option()
            .and_then(|o| self.options.get(o.index()))
            .map(String::as_str)
    }
}

pub const ANSWER_MAX_TOKENS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Answered {
    pub answer: Answer,
    pub response_text: String,
    pub tokens: u64,
}

/// Ask `question` over `context` and parse the selected option.
pub fn answer_question(
    question: &Question,
    context: &str,
    client: &GeneratorClient,
    template: &PromptTemplate,
) -> Result<Answered> {
    let prompt = template.render(&[
        ("context", context),
        ("question", &question.question),
        ("options", &question.render_options()),
    ]);
    let resp = client.complete(&GeneratorRequest::new(prompt).with_max_output_tokens(ANSWER_MAX_TOKENS))?;
    Ok(Answered {
        answer: parse_answer(&resp.text, &question.options),
        tokens: resp.total_tokens(),
        response_text: resp.text,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationOutcome {
    pub perturbation: Perturbation,
    pub perturbed_context: String,
    pub answer: Answer,
    /// Differs from the baseline; an unparseable answer always counts.
    pub changed: bool,
    pub generator_calls: u64,
    pub tokens_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineRecord {
    pub context: String,
    pub answer: Answer,
    pub response_text: String,
    pub generator_calls: u64,
    pub tokens_used: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub question_id: String,
    pub question: String,
    pub path: RetrievedPath,
    pub baseline: BaselineRecord,
    pub outcomes: Vec<PerturbationOutcome>,
    /// Set when the generator failed part-way; outcomes hold the prefix
    /// that completed.
    pub incomplete: Option<String>,
}

impl SuiteResult {
    pub fn cost(&self) -> CostRecord {
        let mut cost = CostRecord {
            generator_calls: self.baseline.generator_calls,
            tokens: self.baseline.tokens_used,
        };
        for o in &self.outcomes {
            cost.generator_calls += o.generator_calls;
            cost.tokens += o.tokens_used;
        }
        cost
    }

    pub fn unparseable_count(&self) -> usize {
        self.outcomes.iter().filter(|o| o.answer == Answer::Unparseable).count()
    }
}

pub fn changed_from(baseline: Answer, answer: Answer) -> bool {
    answer == Answer::Unparseable || answer != baseline
}

/// Baseline call plus one call per enumerated perturbation.
///
/// Calls run concurrently up to `in_flight`; outcomes are kept in
/// enumeration order.
pub fn run_suite(
    question: &Question,
    path: &RetrievedPath,
    client: &GeneratorClient,
    template: &PromptTemplate,
    in_flight: usize,
) -> Result<SuiteResult> {
    question.validate()?;
    let context = crate::retrieval::path_to_pseudo_paragraph(path);
    let base = answer_question(question, &context, client, template)?;
    let baseline = BaselineRecord {
        context,
        answer: base.answer,
        response_text: base.response_text,
        generator_calls: 1,
        tokens_used: base.tokens,
    };

    let perturbations = enumerate_perturbations(path);
    let results = parallel_map_ordered(&perturbations, in_flight, |_, pert| {
        let perturbed = apply_perturbation(path, pert)?;
        let got = answer_question(question, &perturbed, client, template)?;
        Ok::<_, Error>(PerturbationOutcome {
            perturbation: pert.clone(),
            perturbed_context: perturbed,
            answer: got.answer,
            changed: changed_from(baseline.answer, got.answer),
            generator_calls: 1,
            tokens_used: got.tokens,
        })
    });

    let mut outcomes = Vec::with_capacity(results.len());
    let mut incomplete = None;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e @ Error::GeneratorUnavailable { .. }) => {
                incomplete = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SuiteResult {
        question_id: question.id.clone(),
        question: question.question.clone(),
        path: path.clone(),
        baseline,
        outcomes,
        incomplete,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::generator::{Backend, GeneratorResponse, MockRule, MockRuleTable};
    use crate::kg_store::{KnowledgeGraph, Provenance, SemanticLabel, Triplet};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn chain(n: usize) -> RetrievedPath {
        let mut g = KnowledgeGraph::new();
        for i in 0..n.saturating_sub(1) {
            g.add_triplet(&Triplet::new(
                format!("n{i}"),
                SemanticLabel::Unknown,
                format!("R{i}"),
                format!("n{}", i + 1),
                SemanticLabel::Unknown,
                Provenance::new("d", i as u32),
            ))
            .unwrap();
        }
        if n == 1 {
            g.add_triplet(&Triplet::new(
                "n0",
                SemanticLabel::Unknown,
                "R",
                "other",
                SemanticLabel::Unknown,
                Provenance::new("d", 0),
            ))
            .unwrap();
        }
        let last = g.find_entity(&format!("n{}", n - 1)).unwrap();
        g.shortest_path(g.find_entity("n0").unwrap(), last).unwrap().unwrap()
    }

    #[test]
    fn enumeration_counts_and_order() {
        let p = chain(3);
        let perts = enumerate_perturbations(&p);
        assert_eq!(perts.len(), 7);
        let shape: Vec<(PerturbationKind, usize)> = perts.iter().map(|x| (x.kind, x.target)).collect();
        use PerturbationKind::*;
        assert_eq!(
            shape,
            [
                (Node, 0),
                (Node, 1),
                (Node, 2),
                (Edge, 0),
                (Edge, 1),
                (Subpath, 0),
                (Subpath, 1)
            ]
        );
        assert_eq!(enumerate_perturbations(&chain(1)).len(), 1);
        assert_eq!(enumerate_perturbations(&chain(5)).len(), 13);
    }

    #[test]
    fn worked_example_renderings() {
        let (graph, _, _) = fixtures::build_worked_example();
        let p = fixtures::worked_example_path(&graph);
        let perts = enumerate_perturbations(&p);
        let find = |kind, target| perts.iter().find(|x| x.kind == kind && x.target == target).unwrap();

        let node = find(PerturbationKind::Node, 1);
        assert_eq!(
            node.removed_description,
            "persistent pulmonary hypertension in the newborn"
        );
        assert_eq!(
            apply_perturbation(&p, node).unwrap(),
            "pulmonary hypoplasia is risk factor for. has risk factor oligohydramnios."
        );

        let edge = find(PerturbationKind::Edge, 1);
        assert_eq!(edge.removed_description, "HAS RISK FACTOR");
        assert_eq!(
            apply_perturbation(&p, edge).unwrap(),
            "pulmonary hypoplasia is risk factor for persistent pulmonary hypertension in the newborn. \
             persistent pulmonary hypertension in the newborn -- oligohydramnios."
        );

        let sub = find(PerturbationKind::Subpath, 1);
        assert_eq!(
            apply_perturbation(&p, sub).unwrap(),
            "pulmonary hypoplasia is risk factor for persistent pulmonary hypertension in the newborn."
        );
    }

    #[test]
    fn invalid_index() {
        let p = chain(3);
        let bad = Perturbation {
            kind: PerturbationKind::Edge,
            target: 2,
            removed_description: String::new(),
            normalized_position: 0.0,
        };
        assert!(matches!(
            apply_perturbation(&p, &bad),
            Err(Error::InvalidPerturbation(_))
        ));
    }

    #[test]
    fn no_perturbation_is_a_no_op() {
        for n in 1..=6 {
            let p = chain(n);
            let intact = crate::retrieval::path_to_pseudo_paragraph(&p);
            for pert in enumerate_perturbations(&p) {
                assert_ne!(apply_perturbation(&p, &pert).unwrap(), intact, "{pert:?}");
            }
        }
    }

    #[test]
    fn worked_example_suite_flips() {
        let (graph, rules, question) = fixtures::build_worked_example();
        let p = fixtures::worked_example_path(&graph);
        let client = GeneratorClient::mock(rules);
        let suite = run_suite(&question, &p, &client, &PromptTemplate::answer(), 4).unwrap();
        assert_eq!(suite.baseline.answer.to_string(), "A");
        let got = |kind, target| {
            suite
                .outcomes
                .iter()
                .find(|o| o.perturbation.kind == kind && o.perturbation.target == target)
                .unwrap()
        };
        assert_eq!(got(PerturbationKind::Node, 1).answer.to_string(), "C");
        assert!(got(PerturbationKind::Node, 1).changed);
        assert_eq!(got(PerturbationKind::Edge, 1).answer.to_string(), "C");
        assert_eq!(got(PerturbationKind::Subpath, 1).answer.to_string(), "A");
        assert!(!got(PerturbationKind::Subpath, 1).changed);
        assert_eq!(client.usage_totals().generator_calls, 8);
        assert_eq!(suite.cost(), client.usage_totals());
        assert!(suite.incomplete.is_none());
    }

    #[test]
    fn insensitive_mock_changes_nothing() {
        let p = chain(4);
        let client =
            GeneratorClient::mock(MockRuleTable::new("B").with_rule(MockRule::new(["entity absent from path"], "A")));
        let q = Question::new("q", "Which?", &["w", "x", "y", "z"]);
        let suite = run_suite(&q, &p, &client, &PromptTemplate::answer(), 2).unwrap();
        assert_eq!(suite.outcomes.len(), 10);
        assert!(suite.outcomes.iter().all(|o| !o.changed));
    }

    #[test]
    fn unparseable_counts_as_changed() {
        assert!(changed_from(Answer::Unparseable, Answer::Unparseable));
        let a = Answer::Option(AnswerOption::from_letter('A').unwrap());
        assert!(changed_from(a, Answer::Unparseable));
        assert!(!changed_from(a, a));
    }

    struct FailAfter {
        ok: AtomicUsize,
    }

    impl Backend for FailAfter {
        fn name(&self) -> &'static str {
            "fail-after"
        }

        fn generate(&self, _req: &GeneratorRequest) -> Result<GeneratorResponse> {
            if self
                .ok
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                Ok(GeneratorResponse {
                    text: "A".into(),
                    prompt_tokens: 3,
                    completion_tokens: 1,
                })
            } else {
                Err(Error::GeneratorUnavailable {
                    attempts: 3,
                    message: "down".into(),
                })
            }
        }
    }

    #[test]
    fn generator_failure_keeps_partial_results() {
        let p = chain(3);
        let client = GeneratorClient::new(FailAfter {
            ok: AtomicUsize::new(4),
        });
        let q = Question::new("q", "Which?", &["w", "x", "y", "z"]);
        let suite = run_suite(&q, &p, &client, &PromptTemplate::answer(), 1).unwrap();
        assert_eq!(suite.outcomes.len(), 3);
        assert!(suite.incomplete.as_deref().unwrap().contains("down"));

        let dead = GeneratorClient::new(FailAfter {
            ok: AtomicUsize::new(0),
        });
        assert!(matches!(
            run_suite(&q, &p, &dead, &PromptTemplate::answer(), 1),
            Err(Error::GeneratorUnavailable { .. })
        ));
    }
}
