use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub document_id: String,
    pub chunk_index: u32,
    pub text: String,
}

pub const DEFAULT_CHUNK_SIZE: usize = 1000;

/// Split `text` into consecutive chunks of at most `chunk_size` characters.
///
/// Cuts prefer the last paragraph break in the window, then the last
/// sentence end (terminal punctuation followed by whitespace), then fall
/// back to a hard cut. Chunks concatenate back to the original text.
pub fn chunk_document(document_id: &str, text: &str, chunk_size: usize) -> Vec<DocumentChunk> {
    assert!(chunk_size >= 1, "chunk_size must be positive");
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < chars.len() {
        let remaining = chars.len() - start;
        let len = if remaining <= chunk_size {
            remaining
        } else {
            best_cut(&chars[start..], chunk_size)
        };
        let from = chars[start].0;
        let to = chars.get(start + len).map_or(text.len(), |c| c.0);
        chunks.push(DocumentChunk {
            document_id: document_id.to_string(),
            chunk_index: chunks.len() as u32,
            text: text[from..to].to_string(),
        });
        start += len;
    }
    chunks
}

/// Length in chars of the first chunk of `window`, in `1..=size`.
fn best_cut(window: &[(usize, char)], size: usize) -> usize {
    let mut paragraph = None;
    let mut sentence = None;
    // A cut at k splits between window[k-1] and window[k].
    for k in 2..=size {
        let prev = window[k - 1].1;
        let next = window.get(k).map(|c| c.1);
        if !prev.is_whitespace() || next.is_some_and(char::is_whitespace) {
            continue;
        }
        if prev == '\n' && window[k - 2].1 == '\n' {
            paragraph = Some(k);
        }
        let last_visible = window[..k].iter().rev().map(|c| c.1).find(|c| !c.is_whitespace());
        if matches!(last_visible, Some('.' | '!' | '?')) {
            sentence = Some(k);
        }
    }
    paragraph.or(sentence).unwrap_or(size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(chunks: &[DocumentChunk]) -> Vec<usize> {
        chunks.iter().map(|c| c.text.chars().count()).collect()
    }

    #[test]
    fn hard_cuts_without_boundaries() {
        let chunks = chunk_document("d", "abcdefghij", 4);
        assert_eq!(sizes(&chunks), [4, 4, 2]);
        assert_eq!(chunks.iter().map(|c| c.chunk_index).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn empty_text() {
        assert!(chunk_document("d", "", 10).is_empty());
    }

    #[test]
    fn prefers_sentence_boundary() {
        let text = "Alpha beta gamma. Delta epsilon.";
        let chunks = chunk_document("d", text, 20);
        assert_eq!(chunks[0].text, "Alpha beta gamma. ");
        assert_eq!(chunks[1].text, "Delta epsilon.");
    }

    #[test]
    fn prefers_paragraph_over_sentence() {
        let text = "One. Two.\n\nThree. Four five six.";
        let chunks = chunk_document("d", text, 20);
        assert_eq!(chunks[0].text, "One. Two.\n\n");
    }

    #[test]
    fn multibyte_text_is_cut_on_char_boundaries() {
        let text = "ééééé. ñññ";
        let chunks = chunk_document("d", text, 4);
        assert_eq!(chunks.iter().map(|c| c.text.as_str()).collect::<String>(), text);
        assert!(sizes(&chunks).iter().all(|&n| n <= 4));
    }

    proptest! {
        #[test]
        fn cover_in_order_without_empty_or_oversized_chunks(
            text in "[a-c .!?\n]{0,200}",
            size in 1usize..40,
        ) {
            let chunks = chunk_document("doc", &text, size);
            let joined: String = chunks.iter().map(|c| c.text.as_str()).collect();
            prop_assert_eq!(joined, text);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert!(!c.text.is_empty());
                prop_assert!(c.text.chars().count() <= size);
                prop_assert_eq!(c.chunk_index as usize, i);
                prop_assert_eq!(&c.document_id, "doc");
            }
        }
    }
}
