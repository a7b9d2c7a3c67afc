//! Line-delimited JSON graph files.
//!
//! One record per relation with both endpoint labels, in relation id
//! order. Loading replays the records in that order, so entity and relation
//! ids (and with them every path tie-break) survive a round trip.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Provenance, SemanticLabel, Triplet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub head: String,
    pub head_label: SemanticLabel,
    pub predicate: String,
    pub tail: String,
    pub tail_label: SemanticLabel,
    pub document_id: String,
    pub chunk_index: u32,
}

impl GraphRecord {
    fn sort_key(&self) -> (&str, &str, &str, &str, u32) {
        (
            &self.head,
            &self.predicate,
            &self.tail,
            &self.document_id,
            self.chunk_index,
        )
    }
}

fn records(g: &KnowledgeGraph) -> Vec<GraphRecord> {
    g.relations()
        .iter()
        .map(|r| {
            let head = &g.entities()[r.head.index()];
            let tail = &g.entities()[r.tail.index()];
            GraphRecord {
                head: head.name.clone(),
                head_label: head.label,
                predicate: r.predicate.clone(),
                tail: tail.name.clone(),
                tail_label: tail.label,
                document_id: r.provenance.document_id.clone(),
                chunk_index: r.provenance.chunk_index,
            }
        })
        .collect()
}

/// Relations as records sorted by `(head, predicate, tail, document_id,
/// chunk_index)`; equal outputs mean equal graphs up to ids.
pub fn canonical_records(g: &KnowledgeGraph) -> Vec<GraphRecord> {
    let mut records = records(g);
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.cmp(b)));
    records
}

impl KnowledgeGraph {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in records(self) {
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl().as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    /// Parse a graph file. Every record must end with a newline, so a file
    /// cut mid-record is reported rather than silently shortened.
    pub fn from_jsonl(text: &str) -> Result<KnowledgeGraph> {
        let mut g = KnowledgeGraph::new();
        let mut offset = 0usize;
        for (i, raw) in text.split_inclusive('\n').enumerate() {
            let line_no = i + 1;
            let malformed = |message: String| Error::MalformedGraphFile {
                line: line_no,
                offset,
                message,
            };
            let Some(line) = raw.strip_suffix('\n') else {
                return Err(malformed("truncated record (missing newline)".into()));
            };
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                offset += raw.len();
                continue;
            }
            let rec: GraphRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            let triplet = Triplet::new(
                rec.head,
                rec.head_label,
                rec.predicate,
                rec.tail,
                rec.tail_label,
                Provenance::new(rec.document_id, rec.chunk_index),
            );
            g.add_triplet(&triplet).map_err(|e| malformed(e.to_string()))?;
            offset += raw.len();
        }
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        for (h, hl, p, t, tl, d, c) in [
            ("b", SemanticLabel::Disease, "R", "a", SemanticLabel::Symptom, "doc2", 1),
            ("a", SemanticLabel::Symptom, "Q", "c", SemanticLabel::Unknown, "doc1", 0),
            ("a", SemanticLabel::Symptom, "Q", "c", SemanticLabel::Unknown, "doc1", 3),
        ] {
            g.add_triplet(&Triplet::new(h, hl, p, t, tl, Provenance::new(d, c)))
                .unwrap();
        }
        g
    }

    #[test]
    fn round_trip_preserves_canonical_form() {
        let g = sample();
        let text = g.to_jsonl();
        let back = KnowledgeGraph::from_jsonl(&text).unwrap();
        assert_eq!(canonical_records(&g), canonical_records(&back));
        assert_eq!(back.to_jsonl(), text);
        assert_eq!(g.stats(), back.stats());
    }

    #[test]
    fn records_keep_id_order() {
        let g = sample();
        let text = g.to_jsonl();
        let first = text.lines().next().unwrap();
        assert!(first.starts_with(r#"{"head":"b","#), "{first}");
        let back = KnowledgeGraph::from_jsonl(&text).unwrap();
        assert_eq!(back.entities(), g.entities());
        assert_eq!(back.relations(), g.relations());
    }

    #[test]
    fn empty_graph_round_trip() {
        let g = KnowledgeGraph::new();
        assert_eq!(g.to_jsonl(), "");
        let back = KnowledgeGraph::from_jsonl("").unwrap();
        assert_eq!(back.node_count(), 0);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = sample().to_jsonl();
        let cut = &text[..text.len() - 10];
        match KnowledgeGraph::from_jsonl(cut) {
            Err(Error::MalformedGraphFile { line, offset, .. }) => {
                assert_eq!(line, 3);
                let second_end = text.match_indices('\n').nth(1).unwrap().0 + 1;
                assert_eq!(offset, second_end);
            }
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn garbage_line_reports_location() {
        let text = format!("{}not json\n", sample().to_jsonl());
        assert!(matches!(
            KnowledgeGraph::from_jsonl(&text),
            Err(Error::MalformedGraphFile { line: 4, .. })
        ));
        let self_loop = r#"{"head":"x","head_label":"UNKNOWN","predicate":"R","tail":"x","tail_label":"UNKNOWN","document_id":"d","chunk_index":0}"#;
        assert!(matches!(
            KnowledgeGraph::from_jsonl(&format!("{self_loop}\n")),
            Err(Error::MalformedGraphFile { line: 1, .. })
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        let g = sample();
        g.save(&path).unwrap();
        let back = KnowledgeGraph::load(&path).unwrap();
        assert_eq!(canonical_records(&g), canonical_records(&back));
    }
}
