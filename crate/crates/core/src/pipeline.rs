//! End-to-end flows shared by the command line and the tests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::explain::{BandThresholds, ExplanationReport};
use crate::extraction::{
    chunk_document, extract_corpus, extract_query_entities, Document, DocumentChunk, PromptTemplate,
};
use crate::generator::GeneratorClient;
use crate::kg_store::{GraphStats, KnowledgeGraph};
use crate::perturbation::{answer_question, run_suite, Answered, Question, SuiteResult};
use crate::retrieval::{retrieve, ChunkIndex, ContextOrigin, Retrieval, RetrievalSettings};

#[derive(Debug, Clone)]
pub struct Templates {
    pub extraction: PromptTemplate,
    pub query: PromptTemplate,
    pub answer: PromptTemplate,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            extraction: PromptTemplate::extraction(),
            query: PromptTemplate::query(),
            answer: PromptTemplate::answer(),
        }
    }
}

pub fn chunk_corpus(docs: &[Document], chunk_size: usize) -> Vec<DocumentChunk> {
    docs.iter()
        .flat_map(|d| chunk_document(&d.id, &d.text, chunk_size))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub documents: usize,
    pub chunks: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub skipped_lines: usize,
    pub label_conflicts: usize,
    pub stats: GraphStats,
}

/// Chunk, extract and ingest a corpus into a frozen graph.
pub fn build_graph(
    docs: &[Document],
    client: &GeneratorClient,
    template: &PromptTemplate,
    chunk_size: usize,
    in_flight: usize,
) -> Result<(KnowledgeGraph, BuildReport)> {
    if chunk_size == 0 {
        return Err(Error::InvalidInput("chunk size must be positive".into()));
    }
    let chunks = chunk_corpus(docs, chunk_size);
    let extraction = extract_corpus(&chunks, client, template, in_flight)?;
    let mut g = KnowledgeGraph::new();
    let ingest = g.ingest(&extraction.triplets)?;
    g.freeze();
    let report = BuildReport {
        documents: docs.len(),
        chunks: chunks.len(),
        accepted: ingest.accepted,
        rejected: ingest.rejected,
        skipped_lines: extraction.skipped_lines,
        label_conflicts: g.label_conflicts(),
        stats: g.stats(),
    };
    Ok((g, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AskResult {
    pub question_id: String,
    pub retrieval: Retrieval,
    pub answer: Answered,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainResult {
    pub retrieval: Retrieval,
    pub suite: SuiteResult,
    pub report: ExplanationReport,
}

/// Question answering over a fixed graph and chunk index.
pub struct Pipeline<'a> {
    pub graph: &'a KnowledgeGraph,
    pub index: &'a ChunkIndex,
    pub client: &'a GeneratorClient,
    pub templates: &'a Templates,
    pub settings: RetrievalSettings,
    /// Concurrent generator calls within one suite.
    pub in_flight: usize,
    pub bands: BandThresholds,
}

impl Pipeline<'_> {
    /// Query extraction, grounding, then paths or lexical fallback. A query
    /// with no extractable entities goes straight to the fallback.
    pub fn retrieve(&self, q: &Question) -> Result<Retrieval> {
        q.validate()?;
        let entities = match extract_query_entities(&q.question, self.client, &self.templates.query) {
            Ok(e) => Some(e),
            Err(Error::EmptyExtraction) => None,
            Err(e) => return Err(e),
        };
        retrieve(&q.question, entities.as_ref(), self.graph, self.index, self.settings)
    }

    pub fn ask(&self, q: &Question) -> Result<AskResult> {
        let retrieval = self.retrieve(q)?;
        let answer = answer_question(
            q,
            &retrieval.context.assembled_text,
            self.client,
            &self.templates.answer,
        )?;
        Ok(AskResult {
            question_id: q.id.clone(),
            sources: retrieval.context.sources(&retrieval.paths),
            retrieval,
            answer,
        })
    }

    /// Perturbation suite over the first retrieved path. Fails with
    /// `NoPathsFound` when retrieval had to fall back to text chunks.
    pub fn explain(&self, q: &Question) -> Result<ExplainResult> {
        let retrieval = self.retrieve(q)?;
        if retrieval.context.origin == ContextOrigin::Fallback {
            return Err(Error::NoPathsFound);
        }
        let suite = run_suite(
            q,
            &retrieval.paths[0],
            self.client,
            &self.templates.answer,
            self.in_flight,
        )?;
        let report = ExplanationReport::from_suite(&suite, self.bands)?;
        Ok(ExplainResult {
            retrieval,
            suite,
            report,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn worked_example_end_to_end() {
        let set = fixtures::worked_example_fixture_set();
        let client = GeneratorClient::mock(set.rules.clone());
        let templates = Templates::default();
        let (g, report) = build_graph(&set.documents, &client, &templates.extraction, 1000, 2).unwrap();
        assert_eq!(report.accepted, set.triplets.len());
        assert_eq!(report.rejected, 0);
        assert_eq!(
            crate::kg_store::canonical_records(&g),
            crate::kg_store::canonical_records(&set.graph())
        );

        let index = ChunkIndex::new(chunk_corpus(&set.documents, 1000));
        let p = Pipeline {
            graph: &g,
            index: &index,
            client: &client,
            templates: &templates,
            settings: RetrievalSettings::default(),
            in_flight: 4,
            bands: BandThresholds::default(),
        };
        let q = &set.questions[0];
        let asked = p.ask(q).unwrap();
        assert_eq!(asked.answer.answer.to_string(), "A");
        assert_eq!(asked.sources, ["article-27634.jsonl", "article-22355.jsonl"]);

        client.reset_usage();
        let explained = p.explain(q).unwrap();
        assert_eq!(explained.report.cost.generator_calls, 8);
        // One more call for query extraction.
        assert_eq!(client.usage_totals().generator_calls, 9);
    }

    #[test]
    fn fallback_blocks_explain() {
        let set = fixtures::worked_example_fixture_set();
        let client = GeneratorClient::mock(set.rules.clone());
        let templates = Templates::default();
        let (g, _) = build_graph(&set.documents, &client, &templates.extraction, 1000, 1).unwrap();
        let index = ChunkIndex::new(chunk_corpus(&set.documents, 1000));
        let p = Pipeline {
            graph: &g,
            index: &index,
            client: &client,
            templates: &templates,
            settings: RetrievalSettings::default(),
            in_flight: 1,
            bands: BandThresholds::default(),
        };
        let q = Question::new("x", "Does aspirin help a headache?", &["yes", "no"]);
        let asked = p.ask(&q).unwrap();
        assert_eq!(asked.retrieval.context.origin, ContextOrigin::Fallback);
        assert_eq!(asked.sources[0], "article-31187.jsonl");
        assert!(matches!(p.explain(&q), Err(Error::NoPathsFound)));
    }
}
