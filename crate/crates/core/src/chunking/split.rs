use super::{count_tokens, word_tokens, Chunk, ChunkError, ChunkPolicy, ChunkStrategy};

fn expect_strategy(policy: &ChunkPolicy, expected: ChunkStrategy) -> Result<(), ChunkError> {
    policy.validate()?;
    if policy.strategy != expected {
        return Err(ChunkError::WrongStrategy {
            expected,
            actual: policy.strategy,
        });
    }
    Ok(())
}

/// Greedy separator-aware splitting. Chunks are contiguous and their texts
/// concatenate back to `text` exactly.
pub fn split_recursive(
    source_id: &str,
    text: &str,
    policy: &ChunkPolicy,
) -> Result<Vec<Chunk>, ChunkError> {
    expect_strategy(policy, ChunkStrategy::Recursive)?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut spans = Vec::new();
    let splitter = Recursive {
        text,
        max: policy.max_tokens,
        separators: &policy.separators,
    };
    splitter.split(0, text.len(), 0, &mut spans);
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(i, (s, e))| Chunk::from_span(source_id, i, text, s, e))
        .collect())
}

struct Recursive<'a> {
    text: &'a str,
    max: usize,
    separators: &'a [String],
}

impl Recursive<'_> {
    fn tokens(&self, start: usize, end: usize) -> usize {
        count_tokens(&self.text[start..end])
    }

    fn split(&self, start: usize, end: usize, level: usize, out: &mut Vec<(usize, usize)>) {
        if self.tokens(start, end) <= self.max {
            out.push((start, end));
            return;
        }
        let Some(sep) = self.separators.get(level) else {
            self.split_chars(start, end, out);
            return;
        };

        // Pieces keep their trailing separator so nothing is lost.
        let segment = &self.text[start..end];
        let mut pieces = Vec::new();
        let mut piece_start = start;
        for (pos, m) in segment.match_indices(sep.as_str()) {
            let piece_end = start + pos + m.len();
            pieces.push((piece_start, piece_end));
            piece_start = piece_end;
        }
        if piece_start < end {
            pieces.push((piece_start, end));
        }
        if pieces.len() <= 1 {
            self.split(start, end, level + 1, out);
            return;
        }

        let mut current: Option<(usize, usize)> = None;
        for (ps, pe) in pieces {
            if self.tokens(ps, pe) > self.max {
                if let Some(c) = current.take() {
                    out.push(c);
                }
                self.split(ps, pe, level + 1, out);
                continue;
            }
            current = match current {
                Some((cs, _)) if self.tokens(cs, pe) <= self.max => Some((cs, pe)),
                Some(c) => {
                    out.push(c);
                    Some((ps, pe))
                }
                None => Some((ps, pe)),
            };
        }
        if let Some(c) = current {
            out.push(c);
        }
    }

    /// Last resort: cut at the furthest char boundary that stays in budget.
    fn split_chars(&self, start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
        let segment = &self.text[start..end];
        let mut bounds: Vec<usize> = segment.char_indices().map(|(i, _)| start + i).collect();
        bounds.push(end);
        let mut from = 0;
        while from + 1 < bounds.len() {
            let (mut lo, mut hi) = (from + 1, bounds.len() - 1);
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if self.tokens(bounds[from], bounds[mid]) <= self.max {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            out.push((bounds[from], bounds[lo]));
            from = lo;
        }
    }
}

/// Word spans; words longer than the window are cut into window-sized pieces.
fn word_spans(text: &str, max_tokens: usize) -> Vec<(usize, usize, usize)> {
    let mut words = Vec::new();
    let mut start = None;
    let push = |s: usize, e: usize, words: &mut Vec<(usize, usize, usize)>| {
        let word = &text[s..e];
        if word_tokens(word) <= max_tokens {
            words.push((s, e, word_tokens(word)));
            return;
        }
        let max_chars = max_tokens * 4;
        let mut piece_start = s;
        for (n, (i, _)) in word.char_indices().enumerate() {
            if n > 0 && n % max_chars == 0 {
                let p = s + i;
                words.push((piece_start, p, word_tokens(&text[piece_start..p])));
                piece_start = p;
            }
        }
        words.push((piece_start, e, word_tokens(&text[piece_start..e])));
    };
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                push(s, i, &mut words);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        push(s, text.len(), &mut words);
    }
    words
}

/// Overlapping windows of at most `max_tokens`, advanced on word boundaries.
/// Consecutive windows share the longest run of trailing words that fits in
/// `overlap_tokens`.
pub fn split_sliding(
    source_id: &str,
    text: &str,
    policy: &ChunkPolicy,
) -> Result<Vec<Chunk>, ChunkError> {
    expect_strategy(policy, ChunkStrategy::Sliding)?;
    let words = word_spans(text, policy.max_tokens);
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let mut end = start;
        let mut budget = 0;
        while end < words.len() && budget + words[end].2 <= policy.max_tokens {
            budget += words[end].2;
            end += 1;
        }
        chunks.push(Chunk::from_span(
            source_id,
            chunks.len(),
            text,
            words[start].0,
            words[end - 1].1,
        ));
        if end == words.len() {
            break;
        }
        let mut next = end;
        let mut shared = 0;
        while next > start + 1 && shared + words[next - 1].2 <= policy.overlap_tokens {
            shared += words[next - 1].2;
            next -= 1;
        }
        start = next;
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn rec(max: usize) -> ChunkPolicy {
        ChunkPolicy::recursive(max)
    }

    fn joined(chunks: &[Chunk]) -> String {
        chunks.iter().map(|c| c.text.as_str()).collect()
    }

    #[test]
    fn short_text_is_one_chunk() {
        let t = "A short case note.\n\nWith two paragraphs.";
        let c = split_recursive("d", t, &rec(256)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, t);
        assert_eq!((c[0].char_start, c[0].char_end), (0, t.len()));
        assert!(split_recursive("d", "", &rec(8)).unwrap().is_empty());
    }

    #[test]
    fn paragraphs_split_at_blank_line() {
        // 100 four-letter words per paragraph => 100 tokens each.
        let para = vec!["word"; 100].join(" ");
        let text = format!("{para}\n\n{para}");
        let c = split_recursive("d", &text, &rec(128)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].text, format!("{para}\n\n"));
        assert_eq!(c[1].text, para);
        assert_eq!(c[0].token_count, 100);
        assert_eq!(joined(&c), text);
    }

    #[test]
    fn unbroken_run_falls_back_to_characters() {
        let text = "x".repeat(2400); // 600 tokens
        let c = split_recursive("d", &text, &rec(256)).unwrap();
        let sizes: Vec<_> = c.iter().map(|c| c.token_count).collect();
        assert_eq!(sizes, vec![256, 256, 88]);
        assert_eq!(joined(&c), text);
    }

    #[test]
    fn multibyte_text_splits_on_char_boundaries() {
        let text = "é".repeat(37);
        let c = split_recursive("d", &text, &rec(2)).unwrap();
        assert_eq!(joined(&c), text);
        assert!(c.iter().all(|c| c.token_count <= 2));
    }

    #[test]
    fn sliding_ten_words() {
        let words: Vec<String> = (1..=10).map(|i| format!("w{i}")).collect();
        let text = words.join(" ");
        let c = split_sliding("d", &text, &ChunkPolicy::sliding(4, 2)).unwrap();
        let got: Vec<&str> = c.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(
            got,
            vec!["w1 w2 w3 w4", "w3 w4 w5 w6", "w5 w6 w7 w8", "w7 w8 w9 w10"]
        );
    }

    #[test]
    fn sliding_short_text_and_zero_overlap() {
        let c = split_sliding("d", "just three words", &ChunkPolicy::sliding(8, 2)).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].text, "just three words");

        let text = "a b c d e f g h i j";
        let c = split_sliding("d", text, &ChunkPolicy::sliding(3, 0)).unwrap();
        let got: Vec<&str> = c.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(got, vec!["a b c", "d e f", "g h i", "j"]);
    }

    #[test]
    fn wrong_strategy_rejected() {
        assert!(matches!(
            split_sliding("d", "x", &rec(4)),
            Err(ChunkError::WrongStrategy { .. })
        ));
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let word = prop_oneof![
            "[a-z]{1,12}",
            Just("the".to_string()),
            Just("with".to_string()),
            Just("without".to_string()),
            "[a-z]{20,70}",
            Just("é".repeat(9)),
        ];
        let sep = prop_oneof![
            Just(" ".to_string()),
            Just(". ".to_string()),
            Just("\n".to_string()),
            Just("\n\n".to_string()),
            Just("  \t".to_string()),
        ];
        prop::collection::vec((word, sep), 0..120)
            .prop_map(|v| v.into_iter().map(|(w, s)| w + &s).collect())
    }

    fn stop_word_counts(texts: &[&str]) -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                if ["the", "with", "without"].contains(&w) {
                    *m.entry(w.to_string()).or_default() += 1;
                }
            }
        }
        m
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn recursive_is_lossless_and_bounded(text in text_strategy(), max in 1usize..40) {
            let chunks = split_recursive("d", &text, &rec(max)).unwrap();
            prop_assert_eq!(joined(&chunks), text.clone());
            let mut pos = 0;
            for c in &chunks {
                prop_assert!(c.token_count <= max);
                prop_assert_eq!(c.char_start, pos);
                prop_assert_eq!(&text[c.char_start..c.char_end], c.text.as_str());
                prop_assert_eq!(c.token_count, count_tokens(&c.text));
                pos = c.char_end;
            }
            // A budget of one token cannot hold "without" (7 chars) unsplit.
            if max >= 2 {
                let parts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
                prop_assert_eq!(stop_word_counts(&parts), stop_word_counts(&[&text]));
            }
        }

        #[test]
        fn sliding_is_bounded_and_covering(text in text_strategy(), max in 1usize..30, overlap_frac in 0.0f64..1.0) {
            let overlap = ((max as f64) * overlap_frac) as usize;
            let overlap = overlap.min(max - 1);
            let policy = ChunkPolicy::sliding(max, overlap);
            let chunks = split_sliding("d", &text, &policy).unwrap();
            let words = word_spans(&text, max);
            let mut covered = vec![false; words.len()];
            for c in &chunks {
                prop_assert!(c.token_count <= max);
                prop_assert_eq!(&text[c.char_start..c.char_end], c.text.as_str());
                for (i, w) in words.iter().enumerate() {
                    if w.0 >= c.char_start && w.1 <= c.char_end {
                        covered[i] = true;
                    }
                }
            }
            prop_assert!(covered.iter().all(|&c| c));
            for pair in chunks.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                prop_assert!(b.char_start > a.char_start);
                let shared: usize = if b.char_start < a.char_end {
                    count_tokens(&text[b.char_start..a.char_end])
                } else {
                    0
                };
                prop_assert!(shared <= overlap);
                // Maximal: one more word from the end of `a` would bust the overlap
                // or would swallow the whole of `a`.
                let first_shared = words.iter().position(|w| w.0 >= b.char_start).unwrap();
                let a_first = words.iter().position(|w| w.0 >= a.char_start).unwrap();
                if first_shared > a_first + 1 {
                    let prev = words[first_shared - 1];
                    if prev.1 <= a.char_end {
                        prop_assert!(shared + prev.2 > overlap);
                    }
                }
            }
        }

        #[test]
        fn sliding_without_overlap_preserves_stop_words(text in text_strategy(), max in 2usize..30) {
            let chunks = split_sliding("d", &text, &ChunkPolicy::sliding(max, 0)).unwrap();
            let parts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
            prop_assert_eq!(stop_word_counts(&parts), stop_word_counts(&[&text]));
        }
    }
}
