use serde::{Deserialize, Serialize};

use crate::kg_store::{normalize_name, normalize_predicate, Provenance, SemanticLabel, Triplet};

/// A parsed triplet before provenance is attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTriplet {
    pub head: String,
    pub head_label: SemanticLabel,
    pub predicate: String,
    pub tail: String,
    pub tail_label: SemanticLabel,
}

impl RawTriplet {
    pub fn with_provenance(self, provenance: Provenance) -> Triplet {
        Triplet {
            head: self.head,
            head_label: self.head_label,
            predicate: self.predicate,
            tail: self.tail,
            tail_label: self.tail_label,
            provenance,
        }
    }
}

/// Parse one record per line: `(head | HEAD_LABEL | predicate | tail | TAIL_LABEL)`.
///
/// Blank lines are ignored; every other line that does not parse counts
/// as skipped. Labels outside the closed set become `Unknown`.
pub fn parse_triplet_response(text: &str) -> (Vec<RawTriplet>, usize) {
    let mut triplets = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(t) => triplets.push(t),
            None => skipped += 1,
        }
    }
    (triplets, skipped)
}

fn parse_line(line: &str) -> Option<RawTriplet> {
    let inner = line.trim().strip_prefix('(')?.strip_suffix(')')?;
    let fields: Vec<&str> = inner.split('|').map(str::trim).collect();
    let [head, head_label, predicate, tail, tail_label] = fields.as_slice() else {
        return None;
    };
    let head = normalize_name(head);
    let tail = normalize_name(tail);
    let predicate = normalize_predicate(predicate);
    if head.is_empty() || tail.is_empty() || predicate.is_empty() {
        return None;
    }
    Some(RawTriplet {
        head,
        head_label: SemanticLabel::parse_lenient(head_label),
        predicate,
        tail,
        tail_label: SemanticLabel::parse_lenient(tail_label),
    })
}

/// Inverse of [`parse_triplet_response`] for a single record.
pub fn render_triplet_line(t: &RawTriplet) -> String {
    format!(
        "({} | {} | {} | {} | {})",
        t.head,
        t.head_label.as_str(),
        t.predicate,
        t.tail,
        t.tail_label.as_str()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed_line() {
        let (ts, skipped) = parse_triplet_response("(aspirin | MEDICATION | TREATS | headache | SYMPTOM)");
        assert_eq!(skipped, 0);
        assert_eq!(
            ts,
            [RawTriplet {
                head: "aspirin".into(),
                head_label: SemanticLabel::Medication,
                predicate: "TREATS".into(),
                tail: "headache".into(),
                tail_label: SemanticLabel::Symptom,
            }]
        );
    }

    #[test]
    fn unknown_label_maps_to_unknown() {
        let (ts, _) = parse_triplet_response("(a | DISEASE | R | b | BANANA)");
        assert_eq!(ts[0].tail_label, SemanticLabel::Unknown);
        assert_eq!(ts[0].head_label, SemanticLabel::Disease);
    }

    #[test]
    fn garbage_counts_as_skipped() {
        assert_eq!(parse_triplet_response("not a triplet"), (vec![], 1));
        let mixed = "  ( A |DISEASE|  is cause of | B | SYMPTOM )  \n\nfoo\n(a | b | c)\n( | X | R | b | Y)\n";
        let (ts, skipped) = parse_triplet_response(mixed);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].head, "a");
        assert_eq!(ts[0].predicate, "IS CAUSE OF");
        assert_eq!(skipped, 3);
    }

    fn name() -> impl Strategy<Value = String> {
        "[a-z]{1,8}( [a-z]{1,8}){0,2}"
    }

    fn label() -> impl Strategy<Value = SemanticLabel> {
        proptest::sample::select(SemanticLabel::ALL.to_vec())
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            items in proptest::collection::vec(
                (name(), label(), "[A-Z]{1,6}( [A-Z]{1,6}){0,2}", name(), label()),
                0..8,
            )
        ) {
            let ts: Vec<RawTriplet> = items
                .into_iter()
                .map(|(head, head_label, predicate, tail, tail_label)| RawTriplet {
                    head, head_label, predicate, tail, tail_label,
                })
                .collect();
            let text: String = ts.iter().map(|t| render_triplet_line(t) + "\n").collect();
            prop_assert_eq!(parse_triplet_response(&text), (ts, 0));
        }
    }
}
