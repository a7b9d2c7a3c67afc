//! Turn suite outcomes into element importance, explanations and sources.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::CostRecord;
use crate::error::{Error, Result};
use crate::perturbation::{check_target, describe, PerturbationKind, PerturbationOutcome, SuiteResult};
use crate::retrieval::RetrievedPath;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementImportance {
    pub kind: PerturbationKind,
    pub target: usize,
    pub description: String,
    pub change_count: usize,
    pub sources: Vec<String>,
}

/// Count thresholds for the wording of technical lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub high: usize,
    pub moderate: usize,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self { high: 2, moderate: 1 }
    }
}

/// Document ids behind a path element, first appearance order.
///
/// Edges and sub-paths give their own provenance; nodes give those of the
/// path edges touching them.
pub fn trace_sources(kind: PerturbationKind, target: usize, p: &RetrievedPath) -> Result<Vec<String>> {
    check_target(p, kind, target)
        .map_err(|_| Error::UnknownElement(format!("{kind} {target} on a path of {} nodes", p.node_count())))?;
    let edges: Vec<usize> = match kind {
        PerturbationKind::Node => [target.checked_sub(1), (target < p.edge_count()).then_some(target)]
            .into_iter()
            .flatten()
            .collect(),
        _ => vec![target],
    };
    let mut out: Vec<String> = Vec::new();
    for e in edges {
        let doc = &p.edges[e].provenance.document_id;
        if !out.contains(doc) {
            out.push(doc.clone());
        }
    }
    Ok(out)
}

/// One entry per path element in enumeration order.
///
/// Edges and sub-paths count their own changed outcome. A node also
/// collects every changed edge or sub-path outcome it is an endpoint of.
pub fn aggregate_importance(p: &RetrievedPath, outcomes: &[PerturbationOutcome]) -> Result<Vec<ElementImportance>> {
    let mut elements = Vec::with_capacity(3 * p.node_count());
    for kind in PerturbationKind::ALL {
        let count = match kind {
            PerturbationKind::Node => p.node_count(),
            _ => p.edge_count(),
        };
        for target in 0..count {
            elements.push(ElementImportance {
                kind,
                target,
                description: describe(p, kind, target)?,
                change_count: 0,
                sources: trace_sources(kind, target, p)?,
            });
        }
    }
    let offset = |kind: PerturbationKind| match kind {
        PerturbationKind::Node => 0,
        PerturbationKind::Edge => p.node_count(),
        PerturbationKind::Subpath => p.node_count() + p.edge_count(),
    };
    for o in outcomes.iter().filter(|o| o.changed) {
        let (kind, target) = (o.perturbation.kind, o.perturbation.target);
        check_target(p, kind, target)?;
        elements[offset(kind) + target].change_count += 1;
        if kind != PerturbationKind::Node {
            elements[target].change_count += 1;
            elements[target + 1].change_count += 1;
        }
    }
    Ok(elements)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationReport {
    pub question_id: String,
    pub most_influential: ElementImportance,
    /// By change count, descending; enumeration order breaks ties.
    pub ranking: Vec<ElementImportance>,
    pub user_text: String,
    pub technical_text: String,
    pub cost: CostRecord,
    pub incomplete: Option<String>,
}

impl ExplanationReport {
    pub fn from_suite(suite: &SuiteResult, bands: BandThresholds) -> Result<Self> {
        let mut ranking = aggregate_importance(&suite.path, &suite.outcomes)?;
        // Stable sort keeps enumeration order among equal counts.
        ranking.sort_by_key(|e| std::cmp::Reverse(e.change_count));
        let most_influential = ranking[0].clone();
        let mut report = Self {
            question_id: suite.question_id.clone(),
            most_influential,
            ranking,
            user_text: String::new(),
            technical_text: String::new(),
            cost: suite.cost(),
            incomplete: suite.incomplete.clone(),
        };
        report.user_text = render_user_explanation(&report);
        report.technical_text = render_technical_insight(&report, bands);
        Ok(report)
    }

    pub fn sources(&self) -> &[String] {
        &self.most_influential.sources
    }
}

pub const NO_INFLUENCE_USER_TEXT: &str =
    "No single element of the retrieved path was decisive for answering the question.";
pub const NO_INFLUENCE_TECHNICAL_TEXT: &str = "no influential elements detected";

pub fn render_user_explanation(r: &ExplanationReport) -> String {
    if r.most_influential.change_count == 0 {
        return NO_INFLUENCE_USER_TEXT.to_string();
    }
    format!(
        "The most important condition for answering the question is {}. It had the biggest impact on the result.",
        display_name(&r.most_influential)
    )
}

/// One line per entity whose removal or containment changed the answer.
pub fn render_technical_insight(r: &ExplanationReport, bands: BandThresholds) -> String {
    let lines: Vec<String> = r
        .ranking
        .iter()
        .filter(|e| e.kind == PerturbationKind::Node && e.change_count >= bands.moderate.max(1))
        .map(|e| {
            let name = display_name(e);
            let n = e.change_count;
            let times = if n == 1 { "time" } else { "times" };
            if n >= bands.high {
                format!(
                    "Removing {name} led to a different answer {n} {times}, indicating it is a highly influential entity in the reasoning path."
                )
            } else {
                format!(
                    "Removing {name} led to a different answer {n} {times}, showing it has a moderate impact on the final answer."
                )
            }
        })
        .collect();
    if lines.is_empty() {
        NO_INFLUENCE_TECHNICAL_TEXT.to_string()
    } else {
        lines.join("\n")
    }
}

fn display_name(e: &ElementImportance) -> String {
    match e.kind {
        PerturbationKind::Node => title_case(&e.description),
        _ => e.description.clone(),
    }
}

const SMALL_WORDS: [&str; 11] = ["a", "an", "and", "by", "for", "in", "of", "on", "or", "the", "to"];

/// Capitalize each word except short function words after the first.
pub fn title_case(name: &str) -> String {
    name.split_whitespace()
        .enumerate()
        .map(|(i, w)| {
            if i > 0 && SMALL_WORDS.contains(&w.to_lowercase().as_str()) {
                return w.to_lowercase();
            }
            let mut chars = w.chars();
            match chars.next() {
                Some(c) => c.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Line-delimited form of a report: one summary record, then one record
/// per ranked element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum ExplanationRecord {
    Summary {
        question_id: String,
        most_influential: String,
        user_text: String,
        technical_text: String,
        sources: Vec<String>,
        cost: CostRecord,
        incomplete: Option<String>,
    },
    Element {
        question_id: String,
        rank: usize,
        #[serde(flatten)]
        element: ElementImportance,
    },
}

impl ExplanationReport {
    pub fn records(&self) -> Vec<ExplanationRecord> {
        let mut out = vec![ExplanationRecord::Summary {
            question_id: self.question_id.clone(),
            most_influential: self.most_influential.description.clone(),
            user_text: self.user_text.clone(),
            technical_text: self.technical_text.clone(),
            sources: self.sources().to_vec(),
            cost: self.cost,
            incomplete: self.incomplete.clone(),
        }];
        out.extend(
            self.ranking
                .iter()
                .enumerate()
                .map(|(rank, e)| ExplanationRecord::Element {
                    question_id: self.question_id.clone(),
                    rank,
                    element: e.clone(),
                }),
        );
        out
    }
}

pub fn write_explanation_records(path: impl AsRef<Path>, reports: &[ExplanationReport]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in reports {
        for rec in r.records() {
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
