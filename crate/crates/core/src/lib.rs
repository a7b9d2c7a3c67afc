//! Explainable retrieval-augmented generation over a knowledge graph.
//!
//! The pipeline builds a provenance-annotated knowledge graph from text,
//! retrieves shortest paths between query entities, renders them as
//! pseudo-paragraphs for a text generator, and explains the generator's
//! answer by removing nodes, edges and sub-paths from the retrieved path
//! and watching for answer changes.
//!
//! Modules map onto pipeline stages:
//!
//! - [`kg_store`]: the graph, its persistence, shortest paths and centrality
//! - [`extraction`]: chunking, prompt rendering and triplet parsing
//! - [`retrieval`]: grounding, path retrieval, BM25 fallback, context assembly
//! - [`perturbation`]: enumerating and applying removals, running a suite
//! - [`explain`]: importance aggregation and explanation rendering
//! - [`analysis`]: position/label/rank statistics and cost accounting
//! - [`generator`]: live, mock and replay text-generation backends
//! - [`pipeline`]: build, ask and explain flows over the stages above
//! - [`fixtures`]: offline corpora, rule tables and brute-force oracles

pub mod analysis;
pub mod error;
pub mod explain;
pub mod extraction;
pub mod fixtures;
pub mod generator;
pub mod kg_store;
pub mod perturbation;
pub mod pipeline;
pub mod retrieval;
mod util;

pub use error::{Error, Result};
pub use util::whitespace_tokens;
