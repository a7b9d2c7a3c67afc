//! Grounding, path retrieval, pseudo-paragraph rendering and context assembly.

mod bm25;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{DocumentChunk, QueryEntities};
use crate::kg_store::{EntityId, KnowledgeGraph};

pub use crate::kg_store::RetrievedPath;
pub use bm25::{tokenize, ChunkIndex, B as BM25_B, K1 as BM25_K1};

pub const DEFAULT_MAX_PATHS: usize = 5;
pub const DEFAULT_FALLBACK_K: usize = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Grounding {
    pub ids: Vec<EntityId>,
    pub unmatched: Vec<String>,
}

/// Exact match on normalized name; input order is kept.
pub fn ground_entities(q: &QueryEntities, g: &KnowledgeGraph) -> Grounding {
    let mut out = Grounding::default();
    for name in &q.entities {
        match g.find_entity(name) {
            Some(id) if !out.ids.contains(&id) => out.ids.push(id),
            Some(_) => {}
            None => out.unmatched.push(name.clone()),
        }
    }
    out
}

/// Shortest paths for each unordered pair `(i, j)`, `i < j`, in input order.
///
/// Stops after `max_paths` distinct node sequences.
pub fn retrieve_paths(grounded: &[EntityId], g: &KnowledgeGraph, max_paths: usize) -> Result<Vec<RetrievedPath>> {
    let mut paths: Vec<RetrievedPath> = Vec::new();
    'pairs: for (i, &a) in grounded.iter().enumerate() {
        for &b in &grounded[i + 1..] {
            if paths.len() >= max_paths {
                break 'pairs;
            }
            if a == b {
                continue;
            }
            if let Some(p) = g.shortest_path(a, b)? {
                let ids = p.node_ids();
                if !paths.iter().any(|q| q.node_ids() == ids) {
                    paths.push(p);
                }
            }
        }
    }
    if paths.is_empty() {
        return Err(Error::NoPathsFound);
    }
    Ok(paths)
}

pub fn fallback_retrieve(query: &str, index: &ChunkIndex, k: usize) -> Vec<(DocumentChunk, f64)> {
    index.top_k(query, k)
}

/// Predicate as lowercase words, e.g. `IS RISK FACTOR FOR` -> `is risk factor for`.
pub fn predicate_phrase(predicate: &str) -> String {
    predicate.to_lowercase()
}

/// One sentence per edge, `"<head> <predicate> <tail>."`, in stored direction.
pub fn path_to_pseudo_paragraph(p: &RetrievedPath) -> String {
    if p.edges.is_empty() {
        return format!("{}.", p.nodes[0].name);
    }
    (0..p.edges.len())
        .map(|i| {
            let (head, tail) = p.edge_endpoints(i);
            format!("{head} {} {tail}.", predicate_phrase(&p.edges[i].predicate))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextOrigin {
    GraphPaths,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RagContext {
    pub pseudo_paragraphs: Vec<(usize, String)>,
    pub fallback_chunks: Vec<(DocumentChunk, f64)>,
    pub assembled_text: String,
    pub origin: ContextOrigin,
}

impl RagContext {
    pub fn from_paths(paths: &[RetrievedPath]) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidInput("context needs at least one path".into()));
        }
        let pseudo_paragraphs: Vec<(usize, String)> = paths
            .iter()
            .enumerate()
            .map(|(i, p)| (i, path_to_pseudo_paragraph(p)))
            .collect();
        let assembled_text = pseudo_paragraphs
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        Ok(Self {
            pseudo_paragraphs,
            fallback_chunks: Vec::new(),
            assembled_text,
            origin: ContextOrigin::GraphPaths,
        })
    }

    pub fn from_chunks(chunks: Vec<(DocumentChunk, f64)>) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::InvalidInput("context needs at least one chunk".into()));
        }
        let assembled_text = chunks
            .iter()
            .map(|(c, _)| c.text.trim())
            .collect::<Vec<_>>()
            .join("\n\n");
        Ok(Self {
            pseudo_paragraphs: Vec::new(),
            fallback_chunks: chunks,
            assembled_text,
            origin: ContextOrigin::Fallback,
        })
    }

    /// Source documents in first-appearance order.
    pub fn sources(&self, paths: &[RetrievedPath]) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let docs: Vec<&String> = match self.origin {
            ContextOrigin::GraphPaths => paths.iter().flat_map(|p| &p.sources).collect(),
            ContextOrigin::Fallback => self.fallback_chunks.iter().map(|(c, _)| &c.document_id).collect(),
        };
        for d in docs {
            if !out.contains(d) {
                out.push(d.clone());
            }
        }
        out
    }
}

/// Everything retrieval decided for one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieval {
    pub entities: Vec<String>,
    pub grounding: Grounding,
    pub paths: Vec<RetrievedPath>,
    pub context: RagContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetrievalSettings {
    pub max_paths: usize,
    pub fallback_k: usize,
}

impl Default for RetrievalSettings {
    fn default() -> Self {
        Self {
            max_paths: DEFAULT_MAX_PATHS,
            fallback_k: DEFAULT_FALLBACK_K,
        }
    }
}

/// Graph paths when at least two entities ground and some pair connects,
/// BM25 chunks otherwise. `entities` is `None` when query extraction came
/// back empty.
pub fn retrieve(
    query: &str,
    entities: Option<&QueryEntities>,
    g: &KnowledgeGraph,
    index: &ChunkIndex,
    settings: RetrievalSettings,
) -> Result<Retrieval> {
    let grounding = entities.map(|q| ground_entities(q, g)).unwrap_or_default();
    let paths = if grounding.ids.len() >= 2 {
        match retrieve_paths(&grounding.ids, g, settings.max_paths) {
            Ok(p) => p,
            Err(Error::NoPathsFound) => Vec::new(),
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };
    let context = if paths.is_empty() {
        let chunks = fallback_retrieve(query, index, settings.fallback_k);
        if chunks.is_empty() {
            return Err(Error::NoContext);
        }
        RagContext::from_chunks(chunks)?
    } else {
        RagContext::from_paths(&paths)?
    };
    Ok(Retrieval {
        entities: entities.map(|q| q.entities.clone()).unwrap_or_default(),
        grounding,
        paths,
        context,
    })
}
