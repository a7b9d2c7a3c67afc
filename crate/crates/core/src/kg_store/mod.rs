//! Directed knowledge multigraph with per-edge provenance.
//!
//! Entities are keyed by normalized name. Relations are directed and may be
//! parallel. Path and centrality queries run on the undirected view; the
//! stored direction is kept for rendering.

mod centrality;
mod io;
mod paths;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use centrality::BetweennessOptions;
pub use io::{canonical_records, GraphRecord};
pub use paths::RetrievedPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Closed set of entity categories. Anything unrecognized is `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum SemanticLabel {
    Disease,
    RiskFactor,
    Symptom,
    DiagnosticTest,
    Treatment,
    BodyPart,
    Medication,
    #[default]
    Unknown,
}

impl SemanticLabel {
    pub const ALL: [SemanticLabel; 8] = [
        SemanticLabel::Disease,
        SemanticLabel::RiskFactor,
        SemanticLabel::Symptom,
        SemanticLabel::DiagnosticTest,
        SemanticLabel::Treatment,
        SemanticLabel::BodyPart,
        SemanticLabel::Medication,
        SemanticLabel::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticLabel::Disease => "DISEASE",
            SemanticLabel::RiskFactor => "RISK_FACTOR",
            SemanticLabel::Symptom => "SYMPTOM",
            SemanticLabel::DiagnosticTest => "DIAGNOSTIC_TEST",
            SemanticLabel::Treatment => "TREATMENT",
            SemanticLabel::BodyPart => "BODY_PART",
            SemanticLabel::Medication => "MEDICATION",
            SemanticLabel::Unknown => "UNKNOWN",
        }
    }

    /// Lenient parse: case, separators and a trailing plural `s` are ignored.
    pub fn parse_lenient(raw: &str) -> SemanticLabel {
        let key: String = raw
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_uppercase)
            .collect();
        Self::lookup(&key)
            .or_else(|| key.strip_suffix('S').and_then(Self::lookup))
            .unwrap_or(SemanticLabel::Unknown)
    }

    fn lookup(key: &str) -> Option<SemanticLabel> {
        Some(match key {
            "DISEASE" => SemanticLabel::Disease,
            "RISKFACTOR" => SemanticLabel::RiskFactor,
            "SYMPTOM" => SemanticLabel::Symptom,
            "DIAGNOSTICTEST" => SemanticLabel::DiagnosticTest,
            "TREATMENT" => SemanticLabel::Treatment,
            "BODYPART" => SemanticLabel::BodyPart,
            "MEDICATION" => SemanticLabel::Medication,
            "UNKNOWN" => SemanticLabel::Unknown,
            _ => return None,
        })
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SemanticLabel {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(SemanticLabel::parse_lenient(s))
    }
}

impl Serialize for SemanticLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SemanticLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(SemanticLabel::parse_lenient(&raw))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub document_id: String,
    pub chunk_index: u32,
}

impl Provenance {
    pub fn new(document_id: impl Into<String>, chunk_index: u32) -> Self {
        Self {
            document_id: document_id.into(),
            chunk_index,
        }
    }
}

/// A `(head, predicate, tail)` fact with entity labels and source metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub head_label: SemanticLabel,
    pub predicate: String,
    pub tail: String,
    pub tail_label: SemanticLabel,
    pub provenance: Provenance,
}

impl Triplet {
    pub fn new(
        head: impl Into<String>,
        head_label: SemanticLabel,
        predicate: impl Into<String>,
        tail: impl Into<String>,
        tail_label: SemanticLabel,
        provenance: Provenance,
    ) -> Self {
        Self {
            head: head.into(),
            head_label,
            predicate: predicate.into(),
            tail: tail.into(),
            tail_label,
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub label: SemanticLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: RelationId,
    pub head: EntityId,
    pub tail: EntityId,
    pub predicate: String,
    pub provenance: Provenance,
}

impl Relation {
    /// The endpoint opposite `node`, if `node` is an endpoint.
    pub fn other_end(&self, node: EntityId) -> Option<EntityId> {
        if self.head == node {
            Some(self.tail)
        } else if self.tail == node {
            Some(self.head)
        } else {
            None
        }
    }
}

/// Lowercase, collapse internal whitespace, trim.
pub fn normalize_name(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Uppercase, underscores to spaces, collapse whitespace, trim.
pub fn normalize_predicate(raw: &str) -> String {
    raw.replace('_', " ")
        .split_whitespace()
        .map(str::to_uppercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddedTriplet {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    /// `(input index, reason)` per rejected triplet.
    pub rejections: Vec<(usize, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NodeDegree {
    pub incoming: usize,
    pub outgoing: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub avg_in_degree: f64,
    pub avg_out_degree: f64,
    pub avg_total_degree: f64,
    /// Percentage of nodes per label; labels with no nodes are omitted.
    pub label_histogram: BTreeMap<SemanticLabel, f64>,
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Total nodes            {}", self.node_count)?;
        writeln!(f, "Total edges            {}", self.edge_count)?;
        writeln!(f, "Average in-degree      {:.3}", self.avg_in_degree)?;
        writeln!(f, "Average out-degree     {:.3}", self.avg_out_degree)?;
        writeln!(f, "Average total degree   {:.3}", self.avg_total_degree)?;
        for (label, pct) in &self.label_histogram {
            writeln!(f, "  {:<16} {:>6.2}%", label.as_str(), pct)?;
        }
        Ok(())
    }
}

/// Directed multigraph of labeled entities and provenance-carrying relations.
///
/// Mutable until [`KnowledgeGraph::freeze`]; afterwards read-only and `Sync`.
#[derive(Debug, Default)]
pub struct KnowledgeGraph {
    entities: Vec<Entity>,
    by_name: HashMap<String, EntityId>,
    relations: Vec<Relation>,
    outgoing: Vec<Vec<RelationId>>,
    incoming: Vec<Vec<RelationId>>,
    frozen: bool,
    label_conflicts: usize,
    betweenness: OnceLock<Arc<Vec<f64>>>,
}

impl Clone for KnowledgeGraph {
    fn clone(&self) -> Self {
        let betweenness = OnceLock::new();
        if let Some(cached) = self.betweenness.get() {
            let _ = betweenness.set(Arc::clone(cached));
        }
        Self {
            entities: self.entities.clone(),
            by_name: self.by_name.clone(),
            relations: self.relations.clone(),
            outgoing: self.outgoing.clone(),
            incoming: self.incoming.clone(),
            frozen: self.frozen,
            label_conflicts: self.label_conflicts,
            betweenness,
        }
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Upsert both entities and append one relation.
    pub fn add_triplet(&mut self, t: &Triplet) -> Result<AddedTriplet> {
        if self.frozen {
            return Err(Error::GraphFrozen);
        }
        let head = normalize_name(&t.head);
        let tail = normalize_name(&t.tail);
        let predicate = normalize_predicate(&t.predicate);
        if head.is_empty() {
            return Err(Error::RejectedTriplet("empty head".into()));
        }
        if tail.is_empty() {
            return Err(Error::RejectedTriplet("empty tail".into()));
        }
        if !predicate.chars().any(char::is_alphanumeric) {
            return Err(Error::RejectedTriplet("empty predicate".into()));
        }
        if head == tail {
            return Err(Error::RejectedTriplet(format!("self-loop on '{head}'")));
        }
        if t.provenance.document_id.trim().is_empty() {
            return Err(Error::RejectedTriplet("empty document id".into()));
        }

        let head = self.upsert_entity(head, t.head_label);
        let tail = self.upsert_entity(tail, t.tail_label);
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(Relation {
            id,
            head,
            tail,
            predicate,
            provenance: t.provenance.clone(),
        });
        self.outgoing[head.index()].push(id);
        self.incoming[tail.index()].push(id);
        self.betweenness = OnceLock::new();
        Ok(AddedTriplet {
            head,
            relation: id,
            tail,
        })
    }

    /// Add many triplets; rejected ones are counted and skipped.
    pub fn ingest<'a, I>(&mut self, triplets: I) -> Result<IngestReport>
    where
        I: IntoIterator<Item = &'a Triplet>,
    {
        let mut report = IngestReport::default();
        for (i, t) in triplets.into_iter().enumerate() {
            match self.add_triplet(t) {
                Ok(_) => report.accepted += 1,
                Err(Error::RejectedTriplet(reason)) => {
                    report.rejected += 1;
                    report.rejections.push((i, reason));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    fn upsert_entity(&mut self, name: String, label: SemanticLabel) -> EntityId {
        if let Some(&id) = self.by_name.get(&name) {
            let entity = &mut self.entities[id.index()];
            if label != SemanticLabel::Unknown && label != entity.label {
                if entity.label == SemanticLabel::Unknown {
                    entity.label = label;
                } else {
                    self.label_conflicts += 1;
                }
            }
            return id;
        }
        let id = EntityId(self.entities.len() as u32);
        self.entities.push(Entity {
            id,
            name: name.clone(),
            label,
        });
        self.by_name.insert(name, id);
        self.outgoing.push(Vec::new());
        self.incoming.push(Vec::new());
        id
    }

    /// Make the graph read-only. Centrality is computed lazily on first use.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn node_count(&self) -> usize {
        self.entities.len()
    }

    pub fn edge_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn label_conflicts(&self) -> usize {
        self.label_conflicts
    }

    pub fn entity(&self, id: EntityId) -> Result<&Entity> {
        self.entities.get(id.index()).ok_or(Error::UnknownEntity(id.0))
    }

    pub fn relation(&self, id: RelationId) -> Option<&Relation> {
        self.relations.get(id.index())
    }

    pub fn find_entity(&self, raw_name: &str) -> Option<EntityId> {
        self.by_name.get(&normalize_name(raw_name)).copied()
    }

    pub fn outgoing(&self, id: EntityId) -> Result<&[RelationId]> {
        self.entity(id)?;
        Ok(&self.outgoing[id.index()])
    }

    pub fn incoming(&self, id: EntityId) -> Result<&[RelationId]> {
        self.entity(id)?;
        Ok(&self.incoming[id.index()])
    }

    /// Undirected neighbours with the relation that links them, one entry
    /// per incident relation (parallel edges repeat the neighbour).
    pub fn undirected_neighbors(&self, id: EntityId) -> impl Iterator<Item = (EntityId, RelationId)> + '_ {
        let out = self.outgoing[id.index()]
            .iter()
            .map(move |&r| (self.relations[r.index()].tail, r));
        let inc = self.incoming[id.index()]
            .iter()
            .map(move |&r| (self.relations[r.index()].head, r));
        out.chain(inc)
    }

    pub fn node_degree(&self, id: EntityId) -> Result<NodeDegree> {
        self.entity(id)?;
        let incoming = self.incoming[id.index()].len();
        let outgoing = self.outgoing[id.index()].len();
        Ok(NodeDegree {
            incoming,
            outgoing,
            total: incoming + outgoing,
        })
    }

    pub fn stats(&self) -> GraphStats {
        let n = self.entities.len();
        let e = self.relations.len();
        let mut label_histogram = BTreeMap::new();
        let (avg_in, avg_out, avg_total) = if n == 0 {
            (0.0, 0.0, 0.0)
        } else {
            let nf = n as f64;
            let ef = e as f64;
            let mut counts: BTreeMap<SemanticLabel, usize> = BTreeMap::new();
            for entity in &self.entities {
                *counts.entry(entity.label).or_default() += 1;
            }
            for (label, count) in counts {
                label_histogram.insert(label, 100.0 * count as f64 / nf);
            }
            (ef / nf, ef / nf, 2.0 * ef / nf)
        };
        GraphStats {
            node_count: n,
            edge_count: e,
            avg_in_degree: avg_in,
            avg_out_degree: avg_out,
            avg_total_degree: avg_total,
            label_histogram,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov(doc: &str, chunk: u32) -> Provenance {
        Provenance::new(doc, chunk)
    }

    fn t(head: &str, pred: &str, tail: &str) -> Triplet {
        Triplet::new(
            head,
            SemanticLabel::Unknown,
            pred,
            tail,
            SemanticLabel::Unknown,
            prov("doc", 0),
        )
    }

    #[test]
    fn example_triplet_creates_two_entities_one_relation() {
        let mut g = KnowledgeGraph::new();
        let added = g
            .add_triplet(&Triplet::new(
                "pulmonary hypoplasia",
                SemanticLabel::Disease,
                "IS RISK FACTOR FOR",
                "persistent pulmonary hypertension in the newborn",
                SemanticLabel::Disease,
                prov("article-27634.jsonl", 0),
            ))
            .unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let rel = g.relation(added.relation).unwrap();
        assert_eq!(rel.provenance.document_id, "article-27634.jsonl");
        assert_eq!(g.entity(added.head).unwrap().name, "pulmonary hypoplasia");
    }

    #[test]
    fn self_loop_rejected() {
        let mut g = KnowledgeGraph::new();
        let err = g.add_triplet(&t("x", "REL", "x")).unwrap_err();
        assert!(matches!(err, Error::RejectedTriplet(ref r) if r.contains("self-loop")));
        // normalization applies before the self-loop check
        assert!(g.add_triplet(&t("X ", "REL", " x")).is_err());
        assert_eq!(g.node_count(), 0);
    }

    #[test]
    fn empty_fields_rejected_and_ingest_continues() {
        let mut g = KnowledgeGraph::new();
        let batch = vec![
            t("a", "R", "b"),
            t("  ", "R", "b"),
            t("a", " ", "b"),
            t("a", "--", "c"),
            t("b", "R", "c"),
        ];
        let report = g.ingest(&batch).unwrap();
        assert_eq!(report.accepted, 2);
        assert_eq!(report.rejected, 3);
        assert_eq!(report.rejections.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn duplicate_triplets_become_parallel_edges() {
        let mut g = KnowledgeGraph::new();
        let mut a = t("a", "R", "b");
        g.add_triplet(&a).unwrap();
        a.provenance.chunk_index = 1;
        g.add_triplet(&a).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 2);
        let a_id = g.find_entity("a").unwrap();
        assert_eq!(g.node_degree(a_id).unwrap().outgoing, 2);
        let chunks: Vec<u32> = g.relations().iter().map(|r| r.provenance.chunk_index).collect();
        assert_eq!(chunks, vec![0, 1]);
    }

    #[test]
    fn label_upsert_rules() {
        let mut g = KnowledgeGraph::new();
        let mut first = t("a", "R", "b");
        first.head_label = SemanticLabel::Unknown;
        g.add_triplet(&first).unwrap();
        let mut second = t("a", "R", "c");
        second.head_label = SemanticLabel::Disease;
        g.add_triplet(&second).unwrap();
        let mut third = t("a", "R", "d");
        third.head_label = SemanticLabel::Symptom;
        g.add_triplet(&third).unwrap();
        let a = g.find_entity("a").unwrap();
        assert_eq!(g.entity(a).unwrap().label, SemanticLabel::Disease);
        assert_eq!(g.label_conflicts(), 1);
    }

    #[test]
    fn degrees() {
        let mut g = KnowledgeGraph::new();
        g.add_triplet(&t("a", "R", "b")).unwrap();
        g.add_triplet(&t("b", "R", "c")).unwrap();
        let b = g.find_entity("b").unwrap();
        let d = g.node_degree(b).unwrap();
        assert_eq!((d.incoming, d.outgoing, d.total), (1, 1, 2));
        assert!(matches!(g.node_degree(EntityId(99)), Err(Error::UnknownEntity(99))));
    }

    #[test]
    fn leaf_degree() {
        let mut g = KnowledgeGraph::new();
        g.add_triplet(&t("a", "R", "b")).unwrap();
        let a = g.find_entity("a").unwrap();
        let d = g.node_degree(a).unwrap();
        assert_eq!((d.incoming, d.outgoing, d.total), (0, 1, 1));
    }

    #[test]
    fn stats_small_graphs() {
        let g = KnowledgeGraph::new();
        let s = g.stats();
        assert_eq!((s.node_count, s.edge_count), (0, 0));
        assert_eq!(s.avg_total_degree, 0.0);
        assert!(s.label_histogram.is_empty());

        let mut g = KnowledgeGraph::new();
        g.add_triplet(&t("a", "R", "b")).unwrap();
        let s = g.stats();
        assert_eq!(s.avg_total_degree, 1.0);
        assert_eq!(s.label_histogram[&SemanticLabel::Unknown], 100.0);
    }

    #[test]
    fn frozen_graph_rejects_mutation() {
        let mut g = KnowledgeGraph::new();
        g.add_triplet(&t("a", "R", "b")).unwrap();
        g.freeze();
        assert!(matches!(g.add_triplet(&t("b", "R", "c")), Err(Error::GraphFrozen)));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("  PULMONARY   Hypoplasia "), "pulmonary hypoplasia");
        assert_eq!(normalize_predicate("is_risk  factor for"), "IS RISK FACTOR FOR");
    }

    #[test]
    fn label_parsing_is_lenient_and_closed() {
        assert_eq!(SemanticLabel::parse_lenient("DISEASE"), SemanticLabel::Disease);
        assert_eq!(SemanticLabel::parse_lenient("Diseases"), SemanticLabel::Disease);
        assert_eq!(SemanticLabel::parse_lenient("risk factor"), SemanticLabel::RiskFactor);
        assert_eq!(SemanticLabel::parse_lenient("Body-Parts"), SemanticLabel::BodyPart);
        assert_eq!(
            SemanticLabel::parse_lenient("DIAGNOSTIC_TEST"),
            SemanticLabel::DiagnosticTest
        );
        assert_eq!(SemanticLabel::parse_lenient("BANANA"), SemanticLabel::Unknown);
        for label in SemanticLabel::ALL {
            assert_eq!(SemanticLabel::parse_lenient(label.as_str()), label);
        }
    }
}
