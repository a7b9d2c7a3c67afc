//! Offline fixtures and brute-force oracles.
//!
//! Everything here is deterministic: corpora, mock rule tables and
//! questions are generated from fixed text or a seed, so the whole
//! pipeline can be checked without a live generator.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{chunk_document, render_triplet_line, write_corpus_jsonl, Document, RawTriplet};
use crate::generator::{MockRule, MockRuleTable};
use crate::kg_store::{EntityId, KnowledgeGraph, Provenance, RelationId, RetrievedPath, SemanticLabel, Triplet};
use crate::perturbation::Question;

/// Present in every answer prompt and no other.
pub const ANSWER_MARKER: &str = "Answer the multiple-choice question using the context.";
/// Present in every corpus extraction prompt and no other.
pub const EXTRACTION_MARKER: &str = "Extract knowledge triplets from the text below.";
/// Present in every query extraction prompt and no other.
pub const QUERY_MARKER: &str = "Extract knowledge triplets from the question below.";

pub const BRUTE_FORCE_NODE_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    AllPairsEnumeration,
    HandComputation,
    Recount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub quantity: String,
    pub value: f64,
    pub method: OracleMethod,
}

/// Constants that golden tests compare against, with how each was fixed.
pub fn oracle_constants() -> Vec<OracleResult> {
    let r = |q: &str, value: f64, method| OracleResult {
        quantity: q.into(),
        value,
        method,
    };
    vec![
        r(
            "path a-b-c: betweenness of edge a-b",
            2.0,
            OracleMethod::AllPairsEnumeration,
        ),
        r(
            "triangle: betweenness of each edge",
            1.0,
            OracleMethod::AllPairsEnumeration,
        ),
        r(
            "star with three leaves: betweenness of each spoke",
            3.0,
            OracleMethod::AllPairsEnumeration,
        ),
        r(
            "4-cycle: betweenness of each edge",
            2.0,
            OracleMethod::AllPairsEnumeration,
        ),
        r(
            "path a-b-c: sub-path score of a-b",
            2.0 / 3.0,
            OracleMethod::HandComputation,
        ),
        r(
            "worked example: change count of the middle node",
            2.0,
            OracleMethod::Recount,
        ),
        r(
            "worked example: change count of the last node",
            1.0,
            OracleMethod::Recount,
        ),
    ]
}

type PairRelations = BTreeMap<(usize, usize), Vec<RelationId>>;

/// Undirected simple adjacency, parallel relations grouped per pair.
fn simple_adjacency(g: &KnowledgeGraph) -> (Vec<Vec<usize>>, PairRelations) {
    let mut pairs = PairRelations::new();
    for r in g.relations() {
        let (a, b) = (r.head.index(), r.tail.index());
        pairs.entry((a.min(b), a.max(b))).or_default().push(r.id);
    }
    let mut adj = vec![Vec::new(); g.node_count()];
    for &(a, b) in pairs.keys() {
        adj[a].push(b);
        adj[b].push(a);
    }
    (adj, pairs)
}

/// Edge betweenness by listing every shortest simple path of every
/// unordered pair.
///
/// Paths are found by depth-limited search with the limit raised one hop
/// at a time, so every simple path of the minimum length is visited.
/// Each path adds `1 / multiplicity` to its edges; a pair's value is then
/// split evenly among parallel relations.
pub fn brute_force_betweenness(g: &KnowledgeGraph) -> Result<BTreeMap<RelationId, f64>> {
    let n = g.node_count();
    if n > BRUTE_FORCE_NODE_CAP {
        return Err(Error::GraphTooLarge {
            nodes: n,
            cap: BRUTE_FORCE_NODE_CAP,
        });
    }
    let (adj, pairs) = simple_adjacency(g);
    let mut per_pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for s in 0..n {
        for t in s + 1..n {
            let mut found: Vec<Vec<usize>> = Vec::new();
            for limit in 1..n {
                let mut stack = vec![s];
                let mut on_path = vec![false; n];
                on_path[s] = true;
                collect_paths(&adj, t, limit, &mut stack, &mut on_path, &mut found);
                if !found.is_empty() {
                    break;
                }
            }
            let share = 1.0 / found.len().max(1) as f64;
            for path in &found {
                for w in path.windows(2) {
                    *per_pair.entry((w[0].min(w[1]), w[0].max(w[1]))).or_default() += share;
                }
            }
        }
    }
    let mut out: BTreeMap<RelationId, f64> = g.relations().iter().map(|r| (r.id, 0.0)).collect();
    for (pair, rels) in &pairs {
        let value = per_pair.get(pair).copied().unwrap_or(0.0) / rels.len() as f64;
        for id in rels {
            out.insert(*id, value);
        }
    }
    Ok(out)
}

fn collect_paths(
    adj: &[Vec<usize>],
    target: usize,
    limit: usize,
    stack: &mut Vec<usize>,
    on_path: &mut [bool],
    found: &mut Vec<Vec<usize>>,
) {
    let here = *stack.last().expect("non-empty");
    if here == target {
        found.push(stack.clone());
        return;
    }
    if stack.len() > limit {
        return;
    }
    for &next in &adj[here] {
        if !on_path[next] {
            on_path[next] = true;
            stack.push(next);
            collect_paths(adj, target, limit, stack, on_path, found);
            stack.pop();
            on_path[next] = false;
        }
    }
}

/// Hop count by plain breadth-first search, `None` when disconnected.
pub fn bfs_hops(g: &KnowledgeGraph, src: EntityId, dst: EntityId) -> Option<usize> {
    let (adj, _) = simple_adjacency(g);
    let (src, dst) = (src.index(), dst.index());
    if src >= adj.len() || dst >= adj.len() {
        return None;
    }
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        if u == dst {
            return Some(dist[u]);
        }
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    None
}

const RANDOM_PREDICATES: [&str; 4] = ["CAUSES", "TREATS", "IS RISK FACTOR FOR", "HAS SYMPTOM"];

/// Random graph on up to `nodes` vertices; each unordered pair is joined
/// with probability `density`, in a random direction, and now and then by
/// a second parallel relation. Vertices left isolated never enter the graph.
pub fn random_graph(seed: u64, nodes: usize, density: f64) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = KnowledgeGraph::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            if !rng.random_bool(density) {
                continue;
            }
            let copies = if rng.random_bool(0.1) { 2 } else { 1 };
            for _ in 0..copies {
                let (h, t) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
                let label = *SemanticLabel::ALL.choose(&mut rng).expect("non-empty");
                let predicate = *RANDOM_PREDICATES.choose(&mut rng).expect("non-empty");
                g.add_triplet(&Triplet::new(
                    format!("v{h}"),
                    label,
                    predicate,
                    format!("v{t}"),
                    label,
                    Provenance::new(format!("doc-{}", rng.random_range(0..3)), 0),
                ))
                .expect("valid triplet");
            }
        }
    }
    g
}

/// A corpus with everything needed to run the pipeline on it offline.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub documents: Vec<Document>,
    pub rules: MockRuleTable,
    pub questions: Vec<Question>,
    /// Triplets each document yields, in corpus order.
    pub triplets: Vec<Triplet>,
}

impl FixtureSet {
    /// The graph the extraction pipeline builds from `documents`.
    pub fn graph(&self) -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        g.ingest(&self.triplets).expect("fixture graph is mutable");
        g
    }

    /// Write `corpus.jsonl`, `rules.json` and `questions.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let corpus = dir.join("corpus.jsonl");
        write_corpus_jsonl(&corpus, &self.documents)?;
        let rules = dir.join("rules.json");
        fs::write(&rules, self.rules.to_json_pretty()).map_err(|e| Error::io(&rules, e))?;
        let questions = dir.join("questions.jsonl");
        fs::write(&questions, questions_to_jsonl(&self.questions)?).map_err(|e| Error::io(&questions, e))?;
        Ok(vec![corpus, rules, questions])
    }
}

pub fn questions_to_jsonl(questions: &[Question]) -> Result<String> {
    let mut out = String::new();
    for q in questions {
        out.push_str(&serde_json::to_string(q)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_questions(path: impl AsRef<Path>) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let q: Question = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        q.validate().map_err(|e| bad(e.to_string()))?;
        out.push(q);
    }
    Ok(out)
}

/// Extraction rules answering each chunk with the triplets whose source
/// sentence it contains.
fn extraction_rules(
    docs: &[(Document, Vec<(String, RawTriplet)>)],
    chunk_size: usize,
) -> (Vec<MockRule>, Vec<Triplet>) {
    let mut rules = Vec::new();
    let mut triplets = Vec::new();
    for (doc, sentences) in docs {
        let mut placed = vec![false; sentences.len()];
        for chunk in chunk_document(&doc.id, &doc.text, chunk_size) {
            let mut lines = Vec::new();
            for (k, (sentence, t)) in sentences.iter().enumerate() {
                if !placed[k] && chunk.text.contains(sentence.as_str()) {
                    placed[k] = true;
                    lines.push(render_triplet_line(t));
                    triplets.push(
                        t.clone()
                            .with_provenance(Provenance::new(doc.id.clone(), chunk.chunk_index)),
                    );
                }
            }
            if !lines.is_empty() {
                rules.push(MockRule::new(
                    [EXTRACTION_MARKER, chunk.text.as_str()],
                    lines.join("\n"),
                ));
            }
        }
    }
    (rules, triplets)
}

fn raw(head: &str, head_label: SemanticLabel, predicate: &str, tail: &str, tail_label: SemanticLabel) -> RawTriplet {
    RawTriplet {
        head: head.into(),
        head_label,
        predicate: predicate.into(),
        tail: tail.into(),
        tail_label,
    }
}

pub const WORKED_QUESTION: &str = "A baby born with pulmonary hypoplasia secondary to oligohydramnios caused by renal agenesis would be classified as having";
pub const WORKED_OPTIONS: [&str; 4] = ["an association", "a dysplasia", "a sequence", "a syndrome"];
pub const WORKED_START: &str = "pulmonary hypoplasia";
pub const WORKED_MIDDLE: &str = "persistent pulmonary hypertension in the newborn";
pub const WORKED_END: &str = "oligohydramnios";

/// The worked medical example: corpus, rules and question.
///
/// The graph holds the two-hop path from the start entity through the
/// middle entity to the end entity plus distractors. The answer rules
/// answer A while the middle entity is in the context, C once the second
/// edge is reduced to its endpoints, and C by default.
pub fn worked_example_fixture_set() -> FixtureSet {
    use SemanticLabel::*;
    let docs: Vec<(Document, Vec<(String, RawTriplet)>)> = [
        (
            "article-27634.jsonl",
            vec![
                (
                    "Pulmonary hypoplasia is a risk factor for persistent pulmonary hypertension in the newborn.",
                    raw(WORKED_START, RiskFactor, "IS RISK FACTOR FOR", WORKED_MIDDLE, Disease),
                ),
                (
                    "Pulmonary hypoplasia affects the lung.",
                    raw(WORKED_START, RiskFactor, "AFFECTS", "lung", BodyPart),
                ),
            ],
        ),
        (
            "article-22355.jsonl",
            vec![
                (
                    "Persistent pulmonary hypertension in the newborn has oligohydramnios as a risk factor.",
                    raw(WORKED_MIDDLE, Disease, "HAS RISK FACTOR", WORKED_END, RiskFactor),
                ),
                (
                    "Oligohydramnios is diagnosed by ultrasound.",
                    raw(WORKED_END, RiskFactor, "IS DIAGNOSED BY", "ultrasound", DiagnosticTest),
                ),
            ],
        ),
        (
            "article-31187.jsonl",
            vec![
                (
                    "Nitric oxide treats persistent pulmonary hypertension in the newborn.",
                    raw("nitric oxide", Medication, "TREATS", WORKED_MIDDLE, Disease),
                ),
                (
                    "Aspirin treats headache.",
                    raw("aspirin", Medication, "TREATS", "headache", Symptom),
                ),
            ],
        ),
    ]
    .into_iter()
    .map(|(id, sentences)| {
        let text = sentences.iter().map(|(s, _)| *s).collect::<Vec<_>>().join(" ");
        (
            Document { id: id.into(), text },
            sentences.into_iter().map(|(s, t)| (s.to_string(), t)).collect(),
        )
    })
    .collect();

    let (extraction, triplets) = extraction_rules(&docs, crate::extraction::DEFAULT_CHUNK_SIZE);
    let query_lines = [raw(WORKED_START, RiskFactor, "SECONDARY TO", WORKED_END, RiskFactor)]
        .iter()
        .map(render_triplet_line)
        .collect::<Vec<_>>()
        .join("\n");

    let mut rules = MockRuleTable::new("C. a sequence")
        .with_rule(MockRule::new(
            [ANSWER_MARKER, "newborn -- oligohydramnios"],
            "C. a sequence",
        ))
        .with_rule(MockRule::new(
            [ANSWER_MARKER, "persistent pulmonary hypertension"],
            "A. an association",
        ))
        .with_rule(MockRule::new([QUERY_MARKER, WORKED_QUESTION], query_lines));
    rules.rules.extend(extraction);

    let mut question = Question::new("worked-example", WORKED_QUESTION, &WORKED_OPTIONS);
    question.dataset = Some("worked-example".into());
    FixtureSet {
        documents: docs.into_iter().map(|(d, _)| d).collect(),
        rules,
        questions: vec![question],
        triplets,
    }
}

/// Graph, mock rules and question of the worked example.
pub fn build_worked_example() -> (KnowledgeGraph, MockRuleTable, Question) {
    let set = worked_example_fixture_set();
    let graph = set.graph();
    (
        graph,
        set.rules,
        set.questions.into_iter().next().expect("one question"),
    )
}

/// The worked example's retrieved path.
pub fn worked_example_path(g: &KnowledgeGraph) -> RetrievedPath {
    let a = g.find_entity(WORKED_START).expect("start entity");
    let b = g.find_entity(WORKED_END).expect("end entity");
    g.shortest_path(a, b).expect("known ids").expect("connected")
}

/// Chain `c0 -> c1 -> ... -> c{n-1}` and its end-to-end path.
pub fn chain_path(nodes: usize) -> (KnowledgeGraph, RetrievedPath) {
    assert!(nodes >= 1, "a chain needs a node");
    let mut g = KnowledgeGraph::new();
    if nodes == 1 {
        // Single entity; the path is just c0.
        g.add_triplet(&Triplet::new(
            "c0",
            SemanticLabel::Disease,
            "LINKS",
            "c0 twin",
            SemanticLabel::Disease,
            Provenance::new("chain-0", 0),
        ))
        .expect("valid triplet");
    }
    for i in 0..nodes.saturating_sub(1) {
        g.add_triplet(&Triplet::new(
            format!("c{i}"),
            SemanticLabel::Disease,
            format!("LINK {i}"),
            format!("c{}", i + 1),
            SemanticLabel::Symptom,
            Provenance::new(format!("chain-{i}"), 0),
        ))
        .expect("valid triplet");
    }
    g.freeze();
    let a = g.find_entity("c0").expect("first node");
    let b = g.find_entity(&format!("c{}", nodes - 1)).expect("last node");
    let p = g.shortest_path(a, b).expect("known ids").expect("connected");
    (g, p)
}

/// Synthetic questions with one planted decisive entity each.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub seed: u64,
    pub set: FixtureSet,
    /// Name of the planted entity, per question.
    pub planted: Vec<String>,
}

pub const SYNTHETIC_SEED: u64 = 20_240_611;
pub const SYNTHETIC_QUESTIONS: usize = 50;

/// Question `i` is a chain of 3 to 5 entities between its two named
/// endpoints. The answer rule needs one interior entity (the planted one)
/// and the predicate of one of its path edges; without them the mock
/// answers C. A hub entity touches one node of every chain, and chain
/// nodes carry leaf distractors.
pub fn synthetic_benchmark(seed: u64, questions: usize, chunk_size: usize) -> SyntheticBenchmark {
    use SemanticLabel::*;
    let labels = [
        Disease,
        RiskFactor,
        Symptom,
        DiagnosticTest,
        Treatment,
        BodyPart,
        Medication,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs: Vec<(Document, Vec<(String, RawTriplet)>)> = Vec::new();
    let mut hub_sentences: Vec<(String, RawTriplet)> = Vec::new();
    let mut answer_rules = Vec::new();
    let mut query_rules = Vec::new();
    let mut qs = Vec::new();
    let mut planted = Vec::new();

    for i in 0..questions {
        let len = rng.random_range(3..=5usize);
        let names: Vec<String> = (0..len).map(|k| format!("q{i:02}n{k}")).collect();
        let node_labels: Vec<SemanticLabel> = (0..len).map(|_| *labels.choose(&mut rng).expect("labels")).collect();
        let mut sentences: Vec<(String, RawTriplet)> = Vec::new();
        for k in 0..len - 1 {
            let predicate = format!("RELATES VIA Q{i:02}E{k}");
            let (h, t) = if rng.random_bool(0.7) { (k, k + 1) } else { (k + 1, k) };
            sentences.push((
                format!("{} relates via q{i:02}e{k} {}.", names[h], names[t]),
                raw(&names[h], node_labels[h], &predicate, &names[t], node_labels[t]),
            ));
        }
        for k in 0..len {
            for leaf in 0..rng.random_range(0..=2usize) {
                let leaf_name = format!("q{i:02}l{k}{}", (b'a' + leaf as u8) as char);
                sentences.push((
                    format!("{} mentions {leaf_name}.", names[k]),
                    raw(&names[k], node_labels[k], "MENTIONS", &leaf_name, Unknown),
                ));
            }
        }
        let hub_target = rng.random_range(0..len);
        hub_sentences.push((
            format!("hub connects {}.", names[hub_target]),
            raw("hub", Unknown, "CONNECTS", &names[hub_target], node_labels[hub_target]),
        ));

        let split = sentences.len() / 2;
        let second = sentences.split_off(split.max(1));
        for (suffix, part) in [("a", sentences), ("b", second)] {
            if part.is_empty() {
                continue;
            }
            let text = part.iter().map(|(s, _)| s.as_str()).collect::<Vec<_>>().join(" ");
            docs.push((
                Document {
                    id: format!("syn-q{i:02}-{suffix}.txt"),
                    text,
                },
                part,
            ));
        }

        let key = rng.random_range(1..len - 1);
        let edge = if rng.random_bool(0.5) { key - 1 } else { key };
        answer_rules.push(MockRule::new(
            [
                ANSWER_MARKER.to_string(),
                names[key].clone(),
                format!("relates via q{i:02}e{edge}"),
            ],
            "A",
        ));
        let question = format!("Which option best relates {} to {}?", names[0], names[len - 1]);
        query_rules.push(MockRule::new(
            [QUERY_MARKER.to_string(), question.clone()],
            render_triplet_line(&raw(&names[0], Unknown, "RELATES TO", &names[len - 1], Unknown)),
        ));
        let mut q = Question::new(
            format!("syn-{i:02}"),
            question,
            &["option one", "option two", "option three", "option four"],
        );
        q.dataset = Some("synthetic".into());
        q.answer = Some("A".into());
        qs.push(q);
        planted.push(names[key].clone());
    }
    let hub_text = hub_sentences
        .iter()
        .map(|(s, _)| s.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    docs.push((
        Document {
            id: "syn-hub.txt".into(),
            text: hub_text,
        },
        hub_sentences,
    ));

    let (extraction, triplets) = extraction_rules(&docs, chunk_size);
    let mut rules = MockRuleTable::new("C");
    rules.rules.extend(answer_rules);
    rules.rules.extend(query_rules);
    rules.rules.extend(extraction);
    SyntheticBenchmark {
        seed,
        set: FixtureSet {
            documents: docs.into_iter().map(|(d, _)| d).collect(),
            rules,
            questions: qs,
            triplets,
        },
        planted,
    }
}
