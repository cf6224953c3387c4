use regex::Regex;
use serde::{Deserialize, Serialize};

/// A line-level removal rule.
///
/// Serialised as a string: `"@allcaps-header"` selects the built-in header
/// detector; anything else is a regular expression a line must match to be
/// dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NoiseRule {
    /// Lines whose letters are at least 80% uppercase (minimum three letters).
    AllCapsHeader,
    Pattern(String),
}

pub const ALLCAPS_KEYWORD: &str = "@allcaps-header";

/// Date with optional clock time, alone on its line.
pub const TIMESTAMP_PATTERN: &str =
    r"^\s*\d{4}-\d{2}-\d{2}(?:[ T]\d{1,2}:\d{2}(?::\d{2}(?:\.\d+)?)?(?:Z|[+-]\d{2}:?\d{2})?)?\s*$";
pub const ROUTING_PATTERN: &str = r"^\s*Routing:";
pub const PAGE_PATTERN: &str = r"^\s*Page \d+ of \d+\s*$";

impl From<NoiseRule> for String {
    fn from(rule: NoiseRule) -> Self {
        match rule {
            NoiseRule::AllCapsHeader => ALLCAPS_KEYWORD.to_string(),
            NoiseRule::Pattern(p) => p,
        }
    }
}

impl TryFrom<String> for NoiseRule {
    type Error = regex::Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == ALLCAPS_KEYWORD {
            Ok(NoiseRule::AllCapsHeader)
        } else {
            Regex::new(&s)?;
            Ok(NoiseRule::Pattern(s))
        }
    }
}

pub fn default_noise_rules() -> Vec<NoiseRule> {
    vec![
        NoiseRule::AllCapsHeader,
        NoiseRule::Pattern(TIMESTAMP_PATTERN.into()),
        NoiseRule::Pattern(ROUTING_PATTERN.into()),
        NoiseRule::Pattern(PAGE_PATTERN.into()),
    ]
}

fn is_allcaps_header(line: &str) -> bool {
    let (mut letters, mut upper) = (0usize, 0usize);
    for c in line.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if c.is_uppercase() {
            upper += 1;
        }
    }
    letters >= 3 && upper * 5 >= letters * 4
}

enum Compiled {
    AllCaps,
    Re(Regex),
}

/// Drops every line matched by any rule; surviving lines are kept byte for byte,
/// including their terminators. Invalid patterns are skipped with a warning.
pub fn strip_noise(text: &str, rules: &[NoiseRule]) -> String {
    let compiled: Vec<Compiled> = rules
        .iter()
        .filter_map(|r| match r {
            NoiseRule::AllCapsHeader => Some(Compiled::AllCaps),
            NoiseRule::Pattern(p) => match Regex::new(p) {
                Ok(re) => Some(Compiled::Re(re)),
                Err(e) => {
                    log::warn!("ignoring invalid noise pattern {p:?}: {e}");
                    None
                }
            },
        })
        .collect();

    let mut out = String::with_capacity(text.len());
    for line in text.split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        let body = body.strip_suffix('\r').unwrap_or(body);
        let noisy = compiled.iter().any(|rule| match rule {
            Compiled::AllCaps => is_allcaps_header(body),
            Compiled::Re(re) => re.is_match(body),
        });
        if !noisy {
            out.push_str(line);
        }
    }
    out
}
