use serde::{Deserialize, Serialize};

/// Half-open token span `[start, end)` with a label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

/// Maximal `B-X (I-X)*` runs. An `I-X` that does not continue a span of the
/// same label opens a new one. Anything other than `B-`/`I-` closes spans.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (begin, label) = match (tag.strip_prefix("B-"), tag.strip_prefix("I-")) {
            (Some(l), _) => (true, l),
            (_, Some(l)) => (false, l),
            _ => {
                spans.extend(open.take());
                continue;
            }
        };
        match &mut open {
            Some(span) if !begin && span.label == label => span.end = i + 1,
            _ => {
                spans.extend(open.take());
                open = Some(Span {
                    start: i,
                    end: i + 1,
                    label: label.to_string(),
                });
            }
        }
    }
    spans.extend(open);
    spans
}

/// BIO rendering of non-overlapping spans over `n` tokens.
pub fn render_tags(spans: &[Span], n: usize) -> Vec<String> {
    let mut tags = vec![super::OUTSIDE.to_string(); n];
    for s in spans {
        for (k, tag) in tags[s.start..s.end].iter_mut().enumerate() {
            let prefix = if k == 0 { "B" } else { "I" };
            *tag = format!("{prefix}-{}", s.label);
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, label: &str) -> Span {
        Span {
            start,
            end,
            label: label.into(),
        }
    }

    #[test]
    fn basic_runs() {
        assert_eq!(extract_spans(&["B-A", "I-A", "O"]), vec![span(0, 2, "A")]);
        assert!(extract_spans(&["O", "O"]).is_empty());
    }

    #[test]
    fn relaxed_repair() {
        assert_eq!(extract_spans(&["I-A", "O", "B-A"]), vec![span(0, 1, "A"), span(2, 3, "A")]);
        assert_eq!(extract_spans(&["B-A", "I-B", "I-B"]), vec![span(0, 1, "A"), span(1, 3, "B")]);
        assert_eq!(extract_spans(&["B-A", "B-A"]), vec![span(0, 1, "A"), span(1, 2, "A")]);
    }

    #[test]
    fn render_round_trip() {
        let spans = vec![span(0, 1, "A"), span(1, 3, "A"), span(4, 5, "B")];
        let tags = render_tags(&spans, 6);
        assert_eq!(tags, ["B-A", "B-A", "I-A", "O", "B-B", "O"]);
        assert_eq!(extract_spans(&tags), spans);
    }
}
