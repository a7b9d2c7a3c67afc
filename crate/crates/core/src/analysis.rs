//! Statistics over suite results: impact counts, positions, label
//! histograms, centrality ranks, sub-path scores and cost comparison.

use std::collections::BTreeMap;
use std::fs;
use std::ops::{Add, AddAssign};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::{KnowledgeGraph, RetrievedPath, SemanticLabel};
use crate::perturbation::{check_target, PerturbationKind, SuiteResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub generator_calls: u64,
    pub tokens: u64,
}

impl Add for CostRecord {
    type Output = CostRecord;

    fn add(self, rhs: CostRecord) -> CostRecord {
        CostRecord {
            generator_calls: self.generator_calls + rhs.generator_calls,
            tokens: self.tokens + rhs.tokens,
        }
    }
}

impl AddAssign for CostRecord {
    fn add_assign(&mut self, rhs: CostRecord) {
        *self = *self + rhs;
    }
}

/// Mean cost over a set of questions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AverageCost {
    pub generator_calls: f64,
    pub tokens: f64,
}

impl AverageCost {
    pub fn new(generator_calls: f64, tokens: f64) -> Self {
        Self {
            generator_calls,
            tokens,
        }
    }

    /// `None` for an empty slice.
    pub fn of(records: &[CostRecord]) -> Option<Self> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let total = records.iter().fold(CostRecord::default(), |a, b| a + *b);
        Some(Self {
            generator_calls: total.generator_calls as f64 / n,
            tokens: total.tokens as f64 / n,
        })
    }
}

impl From<CostRecord> for AverageCost {
    fn from(c: CostRecord) -> Self {
        Self::new(c.generator_calls as f64, c.tokens as f64)
    }
}

/// Differences are `baseline - suite`: positive means the suite is cheaper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub suite: AverageCost,
    pub baseline: AverageCost,
    pub calls_difference: f64,
    pub tokens_difference: f64,
    /// Difference over baseline; `None` when the baseline is zero.
    pub calls_relative: Option<f64>,
    pub tokens_relative: Option<f64>,
}

pub fn compare_costs(suite: AverageCost, baseline: AverageCost) -> CostComparison {
    let rel = |d: f64, base: f64| (base != 0.0).then(|| d / base);
    let calls_difference = baseline.generator_calls - suite.generator_calls;
    let tokens_difference = baseline.tokens - suite.tokens;
    CostComparison {
        suite,
        baseline,
        calls_difference,
        tokens_difference,
        calls_relative: rel(calls_difference, baseline.generator_calls),
        tokens_relative: rel(tokens_difference, baseline.tokens),
    }
}

/// Cost of the sliding-window text baseline: one call on the full context,
/// then one call per window with that window's tokens removed. Every call
/// also carries the query.
pub fn text_baseline_cost_counts(context_tokens: u64, query_tokens: u64, window: u64) -> Result<CostRecord> {
    if window == 0 {
        return Err(Error::InvalidInput("window must be at least 1".into()));
    }
    let windows = context_tokens.div_ceil(window);
    let mut tokens = context_tokens + query_tokens;
    for i in 0..windows {
        let removed = window.min(context_tokens - i * window);
        tokens += context_tokens - removed + query_tokens;
    }
    Ok(CostRecord {
        generator_calls: windows + 1,
        tokens,
    })
}

pub fn text_baseline_cost(
    context: &str,
    query: &str,
    window: usize,
    token_counter: impl Fn(&str) -> usize,
) -> Result<CostRecord> {
    text_baseline_cost_counts(
        token_counter(context) as u64,
        token_counter(query) as u64,
        window as u64,
    )
}

/// `i/(N-1)` for node `i` of `N`, `j/(E-1)` for edge or sub-path `j` of
/// `E`; zero when there is a single element.
pub fn normalized_position(kind: PerturbationKind, target: usize, p: &RetrievedPath) -> Result<f64> {
    check_target(p, kind, target)?;
    let count = match kind {
        PerturbationKind::Node => p.node_count(),
        PerturbationKind::Edge | PerturbationKind::Subpath => p.edge_count(),
    };
    Ok(if count <= 1 {
        0.0
    } else {
        target as f64 / (count - 1) as f64
    })
}

/// Edge betweenness over the summed degrees of its endpoints.
pub fn subpath_score(edge_betweenness: f64, deg1: usize, deg2: usize) -> Result<f64> {
    let sum = deg1 + deg2;
    if sum == 0 {
        return Err(Error::DegenerateSubpath);
    }
    Ok(edge_betweenness / sum as f64)
}

/// Rank of each value within the list: 0 for the largest, 1 for the
/// smallest. Equal values share a rank and distinct values are spaced
/// evenly, so both endpoints are hit whenever two values differ.
pub fn relative_ranks(values: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup_by(|a, b| a.total_cmp(b).is_eq());
    if distinct.len() <= 1 {
        return vec![0.0; values.len()];
    }
    let denom = (distinct.len() - 1) as f64;
    values
        .iter()
        .map(|v| {
            let k = distinct.binary_search_by(|d| v.total_cmp(d)).expect("value present");
            k as f64 / denom
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub examples: usize,
    /// Examples where that kind changed the answer at least once.
    pub node_impact: usize,
    pub edge_impact: usize,
    pub subpath_impact: usize,
    /// Examples where that kind had the most changes; ties credit each.
    pub node_wins: usize,
    pub edge_wins: usize,
    pub subpath_wins: usize,
    pub no_change: usize,
}

pub fn impact_summary(results: &[SuiteResult]) -> ImpactSummary {
    let mut s = ImpactSummary {
        examples: results.len(),
        ..Default::default()
    };
    for r in results {
        let mut counts = [0usize; 3];
        for o in r.outcomes.iter().filter(|o| o.changed) {
            counts[kind_slot(o.perturbation.kind)] += 1;
        }
        let best = counts.iter().copied().max().unwrap_or(0);
        if best == 0 {
            s.no_change += 1;
            continue;
        }
        let any = [&mut s.node_impact, &mut s.edge_impact, &mut s.subpath_impact];
        for (slot, counter) in any.into_iter().enumerate() {
            if counts[slot] > 0 {
                *counter += 1;
            }
        }
        let wins = [&mut s.node_wins, &mut s.edge_wins, &mut s.subpath_wins];
        for (slot, counter) in wins.into_iter().enumerate() {
            if counts[slot] == best {
                *counter += 1;
            }
        }
    }
    s
}

fn kind_slot(kind: PerturbationKind) -> usize {
    match kind {
        PerturbationKind::Node => 0,
        PerturbationKind::Edge => 1,
        PerturbationKind::Subpath => 2,
    }
}

/// Changed node removals grouped by the removed node's label.
pub fn label_histogram(results: &[SuiteResult]) -> BTreeMap<SemanticLabel, usize> {
    let mut out = BTreeMap::new();
    for r in results {
        for o in &r.outcomes {
            if o.changed && o.perturbation.kind == PerturbationKind::Node {
                let label = r.path.nodes[o.perturbation.target].label;
                *out.entry(label).or_default() += 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub examples: usize,
    pub node_impact: usize,
    pub edge_impact: usize,
    pub subpath_impact: usize,
    pub node_wins: usize,
    pub edge_wins: usize,
    pub subpath_wins: usize,
    pub no_change: usize,
    pub changed_outcomes: usize,
    pub total_outcomes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionRow {
    pub question_id: String,
    pub kind: PerturbationKind,
    pub target: usize,
    pub normalized_position: f64,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: SemanticLabel,
    pub changed_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityRankRow {
    pub question_id: String,
    pub element: PerturbationKind,
    pub target: usize,
    pub description: String,
    pub metric: String,
    pub value: f64,
    pub relative_rank: f64,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubpathScoreRow {
    pub question_id: String,
    pub target: usize,
    pub betweenness: f64,
    pub head_degree: usize,
    pub tail_degree: usize,
    pub score: f64,
    pub relative_rank: f64,
    pub changed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AnalysisTables {
    pub impact: Vec<ImpactRow>,
    pub positions: Vec<PositionRow>,
    pub labels: Vec<LabelRow>,
    pub centrality_ranks: Vec<CentralityRankRow>,
    pub subpath_scores: Vec<SubpathScoreRow>,
}

pub const TABLE_FILES: [&str; 5] = [
    "impact.csv",
    "positions.csv",
    "labels.csv",
    "centrality_ranks.csv",
    "subpath_scores.csv",
];

/// Build all tables. Degrees and betweenness come from `g`, which must
/// be the graph the paths were retrieved from.
pub fn build_tables(results: &[SuiteResult], g: &KnowledgeGraph) -> Result<AnalysisTables> {
    let summary = impact_summary(results);
    let total_outcomes = results.iter().map(|r| r.outcomes.len()).sum();
    let changed_outcomes = results.iter().flat_map(|r| &r.outcomes).filter(|o| o.changed).count();
    let mut t = AnalysisTables {
        impact: vec![ImpactRow {
            examples: summary.examples,
            node_impact: summary.node_impact,
            edge_impact: summary.edge_impact,
            subpath_impact: summary.subpath_impact,
            node_wins: summary.node_wins,
            edge_wins: summary.edge_wins,
            subpath_wins: summary.subpath_wins,
            no_change: summary.no_change,
            changed_outcomes,
            total_outcomes,
        }],
        labels: label_histogram(results)
            .into_iter()
            .map(|(label, changed_count)| LabelRow { label, changed_count })
            .collect(),
        ..Default::default()
    };

    let betweenness = g.edge_betweenness();
    for r in results {
        let changed = |kind: PerturbationKind, target: usize| {
            r.outcomes
                .iter()
                .any(|o| o.changed && o.perturbation.kind == kind && o.perturbation.target == target)
        };
        for o in &r.outcomes {
            t.positions.push(PositionRow {
                question_id: r.question_id.clone(),
                kind: o.perturbation.kind,
                target: o.perturbation.target,
                normalized_position: o.perturbation.normalized_position,
                changed: o.changed,
            });
        }

        let p = &r.path;
        let degrees = p
            .nodes
            .iter()
            .map(|n| g.node_degree(n.id).map(|d| d.total))
            .collect::<Result<Vec<usize>>>()?;
        let edge_values = p
            .edges
            .iter()
            .map(|e| {
                betweenness
                    .get(e.id.index())
                    .copied()
                    .ok_or_else(|| Error::UnknownElement(format!("relation {} not in graph", e.id.0)))
            })
            .collect::<Result<Vec<f64>>>()?;

        let degree_values: Vec<f64> = degrees.iter().map(|&d| d as f64).collect();
        for (i, rank) in relative_ranks(&degree_values).into_iter().enumerate() {
            t.centrality_ranks.push(CentralityRankRow {
                question_id: r.question_id.clone(),
                element: PerturbationKind::Node,
                target: i,
                description: p.nodes[i].name.clone(),
                metric: "degree".into(),
                value: degree_values[i],
                relative_rank: rank,
                changed: changed(PerturbationKind::Node, i),
            });
        }
        if !edge_values.is_empty() {
            for (j, rank) in relative_ranks(&edge_values).into_iter().enumerate() {
                t.centrality_ranks.push(CentralityRankRow {
                    question_id: r.question_id.clone(),
                    element: PerturbationKind::Edge,
                    target: j,
                    description: p.edges[j].predicate.clone(),
                    metric: "betweenness".into(),
                    value: edge_values[j],
                    relative_rank: rank,
                    changed: changed(PerturbationKind::Edge, j),
                });
            }
            let scores = (0..p.edge_count())
                .map(|j| subpath_score(edge_values[j], degrees[j], degrees[j + 1]))
                .collect::<Result<Vec<f64>>>()?;
            for (j, rank) in relative_ranks(&scores).into_iter().enumerate() {
                t.subpath_scores.push(SubpathScoreRow {
                    question_id: r.question_id.clone(),
                    target: j,
                    betweenness: edge_values[j],
                    head_degree: degrees[j],
                    tail_degree: degrees[j + 1],
                    score: scores[j],
                    relative_rank: rank,
                    changed: changed(PerturbationKind::Subpath, j),
                });
            }
        }
    }
    Ok(t)
}

impl AnalysisTables {
    /// Cross-table totals that must agree.
    pub fn check_consistency(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidInput(format!("inconsistent tables: {m}")));
        for row in &self.impact {
            for (name, v) in [
                ("node_impact", row.node_impact),
                ("edge_impact", row.edge_impact),
                ("subpath_impact", row.subpath_impact),
                ("no_change", row.no_change),
            ] {
                if v > row.examples {
                    return fail(format!("{name} {v} exceeds {} examples", row.examples));
                }
            }
            if row.total_outcomes != self.positions.len() {
                return fail("position rows differ from outcome count".into());
            }
            let changed = self.positions.iter().filter(|p| p.changed).count();
            if row.changed_outcomes != changed {
                return fail("changed position rows differ from changed outcomes".into());
            }
        }
        let changed_nodes = self
            .positions
            .iter()
            .filter(|p| p.changed && p.kind == PerturbationKind::Node)
            .count();
        let histogram: usize = self.labels.iter().map(|l| l.changed_count).sum();
        if histogram != changed_nodes {
            return fail(format!(
                "label histogram total {histogram} differs from {changed_nodes} changed node outcomes"
            ));
        }
        Ok(())
    }

    /// Write the five CSV tables into `dir`, returning their paths.
    pub fn write_csv(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths: Vec<PathBuf> = TABLE_FILES.iter().map(|f| dir.join(f)).collect();
        write_rows(&paths[0], &self.impact)?;
        write_rows(&paths[1], &self.positions)?;
        write_rows(&paths[2], &self.labels)?;
        write_rows(&paths[3], &self.centrality_ranks)?;
        write_rows(&paths[4], &self.subpath_scores)?;
        Ok(paths)
    }
}

fn write_rows<T: TableRow>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    // Written explicitly so empty tables still carry their columns.
    w.write_record(T::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Stable CSV column names, in field order.
pub trait TableRow: Serialize {
    const COLUMNS: &'static [&'static str];
}

impl TableRow for ImpactRow {
    const COLUMNS: &'static [&'static str] = &[
        "examples",
        "node_impact",
        "edge_impact",
        "subpath_impact",
        "node_wins",
        "edge_wins",
        "subpath_wins",
        "no_change",
        "changed_outcomes",
        "total_outcomes",
    ];
}

impl TableRow for PositionRow {
    const COLUMNS: &'static [&'static str] = &["question_id", "kind", "target", "normalized_position", "changed"];
}

impl TableRow for LabelRow {
    const COLUMNS: &'static [&'static str] = &["label", "changed_count"];
}

impl TableRow for CentralityRankRow {
    const COLUMNS: &'static [&'static str] = &[
        "question_id",
        "element",
        "target",
        "description",
        "metric",
        "value",
        "relative_rank",
        "changed",
    ];
}

impl TableRow for SubpathScoreRow {
    const COLUMNS: &'static [&'static str] = &[
        "question_id",
        "target",
        "betweenness",
        "head_degree",
        "tail_degree",
        "score",
        "relative_rank",
        "changed",
    ];
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_cost_differences() {
        let first = compare_costs(AverageCost::new(20.0, 2112.0), AverageCost::new(65.0, 4032.0));
        assert_eq!((first.calls_difference, first.tokens_difference), (45.0, 1920.0));
        let second = compare_costs(AverageCost::new(19.0, 2180.5), AverageCost::new(61.0, 3661.0));
        assert_eq!((second.calls_difference, second.tokens_difference), (42.0, 1480.5));
    }

    #[test]
    fn compare_equal_and_mixed_signs() {
        let c = compare_costs(AverageCost::new(3.0, 9.0), AverageCost::new(3.0, 9.0));
        assert_eq!((c.calls_difference, c.tokens_difference), (0.0, 0.0));
        let c = compare_costs(AverageCost::new(2.0, 100.0), AverageCost::new(5.0, 50.0));
        assert!(c.calls_difference > 0.0 && c.tokens_difference < 0.0);
        assert_eq!(c.calls_relative, Some(0.6));
        let c = compare_costs(AverageCost::new(1.0, 1.0), AverageCost::default());
        assert_eq!(c.calls_relative, None);
    }

    #[test]
    fn average_cost() {
        let records = [
            CostRecord {
                generator_calls: 8,
                tokens: 100,
            },
            CostRecord {
                generator_calls: 11,
                tokens: 301,
            },
        ];
        assert_eq!(AverageCost::of(&records), Some(AverageCost::new(9.5, 200.5)));
        assert_eq!(AverageCost::of(&[]), None);
    }

    #[test]
    fn text_baseline_calls() {
        assert_eq!(text_baseline_cost_counts(20, 0, 5).unwrap().generator_calls, 5);
        assert_eq!(text_baseline_cost_counts(1, 0, 5).unwrap().generator_calls, 2);
        assert!(text_baseline_cost_counts(1, 0, 0).is_err());
        // T = 7, window 5, q = 2: baseline 9, then 2+2 and 5+2.
        assert_eq!(
            text_baseline_cost_counts(7, 2, 5).unwrap(),
            CostRecord {
                generator_calls: 3,
                tokens: 20
            }
        );
        let c = text_baseline_cost("a b c d e f g", "q q", 5, crate::util::whitespace_tokens).unwrap();
        assert_eq!(c.tokens, 20);
    }

    #[test]
    fn subpath_score_examples() {
        assert_eq!(subpath_score(0.0, 4, 7).unwrap(), 0.0);
        assert_eq!(subpath_score(1.0, 2, 3).unwrap(), 0.2);
        assert_eq!(subpath_score(2.0, 1, 2).unwrap(), 2.0 / 3.0);
        assert!(matches!(subpath_score(1.0, 0, 0), Err(Error::DegenerateSubpath)));
    }

    #[test]
    fn rank_examples() {
        assert_eq!(relative_ranks(&[5.0, 3.0, 1.0]), [0.0, 0.5, 1.0]);
        assert_eq!(relative_ranks(&[7.0]), [0.0]);
        assert_eq!(relative_ranks(&[4.0, 4.0, 1.0]), [0.0, 0.0, 1.0]);
        assert_eq!(relative_ranks(&[2.0, 2.0]), [0.0, 0.0]);
        assert!(relative_ranks(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn ranks_hit_endpoints_and_are_monotone(values in prop::collection::vec(0u32..20, 1..30)) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let ranks = relative_ranks(&values);
            let distinct = {
                let mut d = values.clone();
                d.sort_by(f64::total_cmp);
                d.dedup();
                d.len()
            };
            if distinct >= 2 {
                prop_assert!(ranks.contains(&0.0) && ranks.contains(&1.0));
            }
            for i in 0..values.len() {
                prop_assert!((0.0..=1.0).contains(&ranks[i]));
                for j in 0..values.len() {
                    if values[i] > values[j] {
                        prop_assert!(ranks[i] < ranks[j]);
                    }
                    if values[i] == values[j] {
                        prop_assert_eq!(ranks[i], ranks[j]);
                    }
                }
            }
        }

        #[test]
        fn ranks_are_permutation_equivariant(values in prop::collection::vec(0u32..10, 1..12), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let permuted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let ranks = relative_ranks(&values);
            let permuted_ranks = relative_ranks(&permuted);
            for (k, &i) in order.iter().enumerate() {
                prop_assert_eq!(permuted_ranks[k], ranks[i]);
            }
        }

        #[test]
        fn suite_beats_text_baseline_when_context_is_long(n in 2u64..12, extra in 1u64..200, window in 1u64..8, q in 0u64..30) {
            let t = window * (3 * n - 2) + extra;
            let baseline = text_baseline_cost_counts(t, q, window).unwrap();
            prop_assert!(3 * n - 1 < baseline.generator_calls);
        }
    }
}
