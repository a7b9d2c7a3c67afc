//! Okapi BM25 over document chunks, used when the graph yields no path.

use std::collections::HashMap;

use crate::extraction::DocumentChunk;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChunkIndex {
    chunks: Vec<DocumentChunk>,
    term_freqs: Vec<HashMap<String, usize>>,
    lengths: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl ChunkIndex {
    pub fn new(chunks: Vec<DocumentChunk>) -> Self {
        let mut term_freqs = Vec::with_capacity(chunks.len());
        let mut lengths = Vec::with_capacity(chunks.len());
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for chunk in &chunks {
            let tokens = tokenize(&chunk.text);
            lengths.push(tokens.len());
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for term in tf.keys() {
                *doc_freq.entry(term.clone()).or_default() += 1;
            }
            term_freqs.push(tf);
        }
        let avg_len = if chunks.is_empty() {
            0.0
        } else {
            lengths.iter().sum::<usize>() as f64 / chunks.len() as f64
        };
        Self {
            chunks,
            term_freqs,
            lengths,
            doc_freq,
            avg_len,
        }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    /// Non-negative idf: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.chunks.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Sum over query tokens, repeated tokens counting each time.
    pub fn score(&self, query_tokens: &[String], chunk: usize) -> f64 {
        let dl = self.lengths[chunk] as f64;
        let norm = if self.avg_len > 0.0 { dl / self.avg_len } else { 0.0 };
        query_tokens
            .iter()
            .map(|t| {
                let tf = self.term_freqs[chunk].get(t).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    return 0.0;
                }
                self.idf(t) * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * norm))
            })
            .sum()
    }

    /// Top `k` chunks with positive score; ties by `(document_id, chunk_index)`.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<(DocumentChunk, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let q = tokenize(query);
        let mut scored: Vec<(usize, f64)> = (0..self.chunks.len())
            .map(|i| (i, self.score(&q, i)))
            .filter(|(_, s)| *s > 0.0)
            .collect();
        scored.sort_by(|(a, sa), (b, sb)| {
            sb.total_cmp(sa).then_with(|| {
                let (ca, cb) = (&self.chunks[*a], &self.chunks[*b]);
                (&ca.document_id, ca.chunk_index).cmp(&(&cb.document_id, cb.chunk_index))
            })
        });
        scored
            .into_iter()
            .take(k)
            .map(|(i, s)| (self.chunks[i].clone(), s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chunk(doc: &str, idx: u32, text: &str) -> DocumentChunk {
        DocumentChunk {
            document_id: doc.into(),
            chunk_index: idx,
            text: text.into(),
        }
    }

    fn fixture() -> ChunkIndex {
        ChunkIndex::new(vec![
            chunk("a", 0, "renal agenesis causes oligohydramnios"),
            chunk("a", 1, "oligohydramnios oligohydramnios and lung"),
            chunk("b", 0, "aspirin treats headache and fever"),
        ])
    }

    #[test]
    fn matches_hand_computed_bm25() {
        // N = 3, lengths 4, 4, 5, avgdl = 13/3.
        // "oligohydramnios": df = 2, idf = ln(1 + 1.5/2.5) = ln 1.6
        // chunk a#1: tf = 2, dl = 4
        let idx = fixture();
        let avgdl = 13.0 / 3.0;
        let idf = 1.6f64.ln();
        let expected_a1 = idf * 2.0 * 2.2 / (2.0 + 1.2 * (0.25 + 0.75 * 4.0 / avgdl));
        let expected_a0 = idf * 1.0 * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 4.0 / avgdl));
        let q = tokenize("Oligohydramnios?");
        assert!((idx.score(&q, 1) - expected_a1).abs() < 1e-12);
        assert!((idx.score(&q, 0) - expected_a0).abs() < 1e-12);
        assert_eq!(idx.score(&q, 2), 0.0);

        // "and": df = 2, in a#1 (dl 4) and b#0 (dl 5)
        let q = tokenize("and");
        let expected_b0 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 5.0 / avgdl));
        assert!((idx.score(&q, 2) - expected_b0).abs() < 1e-12);
    }

    #[test]
    fn unique_term_ranks_first() {
        let top = fixture().top_k("aspirin aspirin aspirin", 3);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0.document_id, "b");
    }

    #[test]
    fn k_zero_and_empty_corpus() {
        assert!(fixture().top_k("oligohydramnios", 0).is_empty());
        assert!(ChunkIndex::new(vec![]).top_k("anything", 5).is_empty());
    }

    #[test]
    fn ties_broken_by_document_then_chunk() {
        let idx = ChunkIndex::new(vec![
            chunk("z", 0, "fever"),
            chunk("m", 2, "fever"),
            chunk("m", 1, "fever"),
        ]);
        let order: Vec<(String, u32)> = idx
            .top_k("fever", 3)
            .into_iter()
            .map(|(c, _)| (c.document_id, c.chunk_index))
            .collect();
        assert_eq!(order, [("m".into(), 1), ("m".into(), 2), ("z".into(), 0)]);
    }
}
