use super::LexicalError;
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::Path;

/// Case-insensitive whole-word term list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermDictionary {
    name: String,
    terms: BTreeSet<String>,
}

impl TermDictionary {
    pub fn new<S: AsRef<str>>(
        name: impl Into<String>,
        terms: impl IntoIterator<Item = S>,
    ) -> Result<Self, LexicalError> {
        let name = name.into();
        let mut set = BTreeSet::new();
        for t in terms {
            let t = t.as_ref();
            if t.trim().is_empty() {
                return Err(LexicalError::BlankTerm(t.to_string()));
            }
            set.insert(t.trim().to_lowercase());
        }
        if set.is_empty() {
            return Err(LexicalError::EmptyDictionary(name));
        }
        Ok(Self { name, terms: set })
    }

    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(name: impl Into<String>, content: &str) -> Result<Self, LexicalError> {
        let terms = content
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(name, terms)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexicalError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| LexicalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &content)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DictionaryHit {
    pub term: String,
    /// Byte offset into the original text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlagResult {
    pub flagged: bool,
    pub hits: Vec<DictionaryHit>,
}

/// Matches `term` (already lowercase) against `text` starting at byte `at`,
/// comparing lowercased chars. Returns the end offset on success.
fn match_at(text: &str, at: usize, term: &str) -> Option<usize> {
    let want: Vec<char> = term.chars().collect();
    let mut matched = 0;
    for (i, c) in text[at..].char_indices() {
        if matched == want.len() {
            return Some(at + i);
        }
        for lc in c.to_lowercase() {
            if matched == want.len() || want[matched] != lc {
                return None;
            }
            matched += 1;
        }
    }
    (matched == want.len()).then_some(text.len())
}

fn is_boundary_before(text: &str, at: usize) -> bool {
    text[..at].chars().next_back().map_or(true, |c| !c.is_alphanumeric())
}

fn is_boundary_after(text: &str, end: usize) -> bool {
    text[end..].chars().next().map_or(true, |c| !c.is_alphanumeric())
}

/// Case-insensitive whole-word matches of every dictionary term, ordered by
/// offset then term.
pub fn dictionary_flag(dict: &TermDictionary, text: &str) -> FlagResult {
    let mut hits = Vec::new();
    for (at, _) in text.char_indices() {
        if !is_boundary_before(text, at) {
            continue;
        }
        for term in &dict.terms {
            if let Some(end) = match_at(text, at, term) {
                if is_boundary_after(text, end) {
                    hits.push(DictionaryHit {
                        term: term.clone(),
                        offset: at,
                    });
                }
            }
        }
    }
    FlagResult {
        flagged: !hits.is_empty(),
        hits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn firearms() -> TermDictionary {
        TermDictionary::new("firearms", ["gun", "firearm", "rifle"]).unwrap()
    }

    #[test]
    fn rifle_is_flagged_at_its_offset() {
        let r = dictionary_flag(&firearms(), "A rifle was found.");
        assert!(r.flagged);
        assert_eq!(
            r.hits,
            vec![DictionaryHit {
                term: "rifle".into(),
                offset: 2
            }]
        );
    }

    #[test]
    fn homonym_name_is_missed() {
        assert!(!dictionary_flag(&firearms(), "Colt attends school regularly.").flagged);
    }

    #[test]
    fn word_boundaries_are_respected() {
        assert!(!dictionary_flag(&firearms(), "shotgunner").flagged);
        assert!(!dictionary_flag(&firearms(), "guns").flagged);
        let r = dictionary_flag(&firearms(), "GUN-related; Firearm.");
        let terms: Vec<_> = r.hits.iter().map(|h| (h.term.as_str(), h.offset)).collect();
        assert_eq!(terms, vec![("gun", 0), ("firearm", 13)]);
    }

    #[test]
    fn multiword_and_unicode_terms() {
        let d = TermDictionary::new("d", ["hand gun", "straße"]).unwrap();
        let text = "Ein HAND GUN in der Straße.";
        let r = dictionary_flag(&d, text);
        assert_eq!(r.hits.len(), 2);
        for h in &r.hits {
            let found = &text[h.offset..h.offset + h.term.len()];
            assert_eq!(found.to_lowercase(), h.term);
        }
    }

    #[test]
    fn parse_skips_comments() {
        let d = TermDictionary::parse("x", "# firearm terms\ngun\n\n  Rifle \n#colt\n").unwrap();
        assert_eq!(d.terms().collect::<Vec<_>>(), vec!["gun", "rifle"]);
        assert!(TermDictionary::parse("x", "# nothing\n").is_err());
    }
}
