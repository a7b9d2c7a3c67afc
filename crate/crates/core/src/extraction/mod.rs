//! From raw documents and queries to triplets, via the generator.

mod chunking;
mod corpus;
mod parse;
mod template;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{GeneratorClient, GeneratorRequest};
use crate::kg_store::{normalize_name, Provenance, Triplet};
use crate::util::parallel_map_ordered;

pub use chunking::{chunk_document, DocumentChunk, DEFAULT_CHUNK_SIZE};
pub use corpus::{load_corpus, write_corpus_jsonl, Document};
pub use parse::{parse_triplet_response, render_triplet_line, RawTriplet};
pub use template::{PromptTemplate, DEFAULT_ANSWER_TEMPLATE, DEFAULT_EXTRACTION_TEMPLATE, DEFAULT_QUERY_TEMPLATE};

/// Provenance document id given to triplets parsed from a user query.
pub const QUERY_ORIGIN: &str = "<query>";

const EXTRACTION_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChunkExtraction {
    pub triplets: Vec<Triplet>,
    pub skipped_lines: usize,
}

pub fn extract_triplets(
    chunk: &DocumentChunk,
    client: &GeneratorClient,
    template: &PromptTemplate,
) -> Result<ChunkExtraction> {
    let prompt = template.render(&[("chunk_text", &chunk.text)]);
    let resp = client.complete(&GeneratorRequest::new(prompt).with_max_output_tokens(EXTRACTION_MAX_TOKENS))?;
    let (raw, skipped_lines) = parse_triplet_response(&resp.text);
    let provenance = Provenance::new(chunk.document_id.clone(), chunk.chunk_index);
    Ok(ChunkExtraction {
        triplets: raw.into_iter().map(|t| t.with_provenance(provenance.clone())).collect(),
        skipped_lines,
    })
}

/// Extract every chunk with up to `in_flight` concurrent calls.
///
/// Output is in chunk order. The first generator error (in chunk order)
/// is returned.
pub fn extract_corpus(
    chunks: &[DocumentChunk],
    client: &GeneratorClient,
    template: &PromptTemplate,
    in_flight: usize,
) -> Result<ChunkExtraction> {
    let results = parallel_map_ordered(chunks, in_flight, |_, chunk| extract_triplets(chunk, client, template));
    let mut merged = ChunkExtraction::default();
    for r in results {
        let r = r?;
        merged.triplets.extend(r.triplets);
        merged.skipped_lines += r.skipped_lines;
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEntities {
    /// Normalized names, heads before tails, first appearance wins.
    pub entities: Vec<String>,
    pub triplets: Vec<Triplet>,
}

impl QueryEntities {
    /// Entity order: each triplet's head then tail, deduplicated after
    /// normalization.
    pub fn from_triplets(triplets: Vec<Triplet>) -> Self {
        let mut entities: Vec<String> = Vec::new();
        for t in &triplets {
            for name in [&t.head, &t.tail] {
                let name = normalize_name(name);
                if !name.is_empty() && !entities.contains(&name) {
                    entities.push(name);
                }
            }
        }
        Self { entities, triplets }
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let mut entities: Vec<String> = Vec::new();
        for n in names {
            let name = normalize_name(n.as_ref());
            if !name.is_empty() && !entities.contains(&name) {
                entities.push(name);
            }
        }
        Self {
            entities,
            triplets: Vec::new(),
        }
    }
}

pub fn extract_query_entities(
    query: &str,
    client: &GeneratorClient,
    template: &PromptTemplate,
) -> Result<QueryEntities> {
    if query.trim().is_empty() {
        return Err(Error::InvalidInput("query must be non-empty".into()));
    }
    let prompt = template.render(&[("query", query)]);
    let resp = client.complete(&GeneratorRequest::new(prompt).with_max_output_tokens(EXTRACTION_MAX_TOKENS))?;
    let (raw, _) = parse_triplet_response(&resp.text);
    let provenance = Provenance::new(QUERY_ORIGIN, 0);
    let q = QueryEntities::from_triplets(raw.into_iter().map(|t| t.with_provenance(provenance.clone())).collect());
    if q.entities.is_empty() {
        return Err(Error::EmptyExtraction);
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{MockRule, MockRuleTable};
    use crate::kg_store::SemanticLabel;

    fn extractor() -> GeneratorClient {
        GeneratorClient::mock(
            MockRuleTable::new("nothing useful here")
                .with_rule(MockRule::new(
                    ["from the text below", "smoking"],
                    "(smoking | RISK_FACTOR | IS RISK FACTOR FOR | lung cancer | DISEASE)\n\
                     (lung cancer | DISEASE | IS DETECTED BY | chest ct | DIAGNOSTIC_TEST)",
                ))
                .with_rule(MockRule::new(
                    ["from the text below", "mixed"],
                    "garbage\n(a | DISEASE | CAUSES | b | SYMPTOM)\n(broken |\n",
                ))
                .with_rule(MockRule::new(
                    ["from the question below", "hypoplasia"],
                    "(pulmonary hypoplasia | DISEASE | IS SECONDARY TO | oligohydramnios | DISEASE)\n\
                     (Oligohydramnios | DISEASE | IS CAUSED BY | renal agenesis | DISEASE)\n\
                     (pulmonary  hypoplasia | DISEASE | IS | association | UNKNOWN)",
                )),
        )
    }

    fn chunk(doc: &str, idx: u32, text: &str) -> DocumentChunk {
        DocumentChunk {
            document_id: doc.into(),
            chunk_index: idx,
            text: text.into(),
        }
    }

    #[test]
    fn triplets_follow_the_rule_table_and_carry_chunk_provenance() {
        let client = extractor();
        let out = extract_triplets(
            &chunk("article-1.jsonl", 3, "Heavy smoking raises lung cancer risk."),
            &client,
            &PromptTemplate::extraction(),
        )
        .unwrap();
        assert_eq!(out.skipped_lines, 0);
        assert_eq!(out.triplets.len(), 2);
        assert_eq!(out.triplets[0].head, "smoking");
        assert_eq!(out.triplets[0].head_label, SemanticLabel::RiskFactor);
        assert_eq!(out.triplets[1].tail, "chest ct");
        for t in &out.triplets {
            assert_eq!(t.provenance, Provenance::new("article-1.jsonl", 3));
        }
    }

    #[test]
    fn unparseable_response_counts_every_line() {
        let client = GeneratorClient::mock(MockRuleTable::new("line one\nline two\nline three"));
        let out = extract_triplets(&chunk("d", 0, "text"), &client, &PromptTemplate::extraction()).unwrap();
        assert!(out.triplets.is_empty());
        assert_eq!(out.skipped_lines, 3);
    }

    #[test]
    fn mixed_response_keeps_valid_lines() {
        let client = extractor();
        let out = extract_triplets(&chunk("d9", 1, "mixed"), &client, &PromptTemplate::extraction()).unwrap();
        assert_eq!(out.triplets.len(), 1);
        assert_eq!(out.skipped_lines, 2);
        assert_eq!(out.triplets[0].provenance, Provenance::new("d9", 1));
    }

    #[test]
    fn corpus_extraction_is_ordered_and_deterministic() {
        let client = extractor();
        let chunks = vec![
            chunk("a", 0, "mixed"),
            chunk("a", 1, "smoking"),
            chunk("b", 0, "nothing"),
        ];
        let one = extract_corpus(&chunks, &client, &PromptTemplate::extraction(), 1).unwrap();
        let many = extract_corpus(&chunks, &client, &PromptTemplate::extraction(), 3).unwrap();
        assert_eq!(one, many);
        assert_eq!(one.triplets.len(), 3);
        assert_eq!(one.triplets[0].provenance.document_id, "a");
        assert_eq!(one.skipped_lines, 2 + 1);
    }

    #[test]
    fn query_entities_ordered_and_deduplicated() {
        let client = extractor();
        let q = extract_query_entities(
            "A baby born with pulmonary hypoplasia secondary to oligohydramnios caused by renal \
             agenesis would be classified as having",
            &client,
            &PromptTemplate::query(),
        )
        .unwrap();
        assert_eq!(
            q.entities,
            [
                "pulmonary hypoplasia",
                "oligohydramnios",
                "renal agenesis",
                "association"
            ]
        );
        assert!(q.triplets.iter().all(|t| t.provenance.document_id == QUERY_ORIGIN));
    }

    #[test]
    fn query_without_entities_is_empty_extraction() {
        let client = extractor();
        assert!(matches!(
            extract_query_entities("what is love", &client, &PromptTemplate::query()),
            Err(Error::EmptyExtraction)
        ));
    }

    #[test]
    fn from_names_dedups() {
        let q = QueryEntities::from_names(&["Aspirin", "aspirin ", "fever"]);
        assert_eq!(q.entities, ["aspirin", "fever"]);
    }
}
