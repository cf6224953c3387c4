use super::AnalysisError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Slack allowed outside `[-1, 1]` for rounding in upstream cosine math.
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandScale {
    /// small < 0.2 <= medium < 0.5 <= large
    Cohen,
    /// low < 0.60 <= moderate <= 0.80 < very high
    Practice,
}

impl BandScale {
    pub const ALL: [BandScale; 2] = [BandScale::Cohen, BandScale::Practice];

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            BandScale::Cohen => &["small", "medium", "large"],
            BandScale::Practice => &["low", "moderate", "very high"],
        }
    }
}

impl fmt::Display for BandScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandScale::Cohen => "cohen",
            BandScale::Practice => "practice",
        })
    }
}

impl std::str::FromStr for BandScale {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cohen" => Ok(BandScale::Cohen),
            "practice" => Ok(BandScale::Practice),
            _ => Err(AnalysisError::UnknownScale(s.to_string())),
        }
    }
}

/// Label of `score` on `scale`. Scores must lie in `[-1, 1]`.
pub fn interpret(score: f64, scale: BandScale) -> Result<&'static str, AnalysisError> {
    if !(-1.0 - RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&score) {
        return Err(AnalysisError::OutOfRange(score));
    }
    let labels = scale.labels();
    let idx = match scale {
        BandScale::Cohen if score < 0.2 => 0,
        BandScale::Cohen if score < 0.5 => 1,
        BandScale::Cohen => 2,
        BandScale::Practice if score < 0.60 => 0,
        BandScale::Practice if score <= 0.80 => 1,
        BandScale::Practice => 2,
    };
    Ok(labels[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_labels() {
        assert_eq!(interpret(0.804, BandScale::Practice).unwrap(), "very high");
        assert_eq!(interpret(0.2, BandScale::Cohen).unwrap(), "medium");
        assert_eq!(interpret(-1.0, BandScale::Cohen).unwrap(), "small");
        assert_eq!(interpret(-1.0, BandScale::Practice).unwrap(), "low");
    }

    #[test]
    fn boundaries() {
        let c = |s| interpret(s, BandScale::Cohen).unwrap();
        let p = |s| interpret(s, BandScale::Practice).unwrap();
        assert_eq!(c(0.19999999), "small");
        assert_eq!(c(0.5), "large");
        assert_eq!(c(0.49999999), "medium");
        assert_eq!(p(0.60), "moderate");
        assert_eq!(p(0.5999999), "low");
        assert_eq!(p(0.80), "moderate");
        assert_eq!(p(0.8000001), "very high");
        assert_eq!(p(1.0), "very high");
    }

    #[test]
    fn out_of_range() {
        for s in [1.1, -1.5, f64::NAN, f64::INFINITY] {
            assert!(matches!(interpret(s, BandScale::Cohen), Err(AnalysisError::OutOfRange(_))));
        }
        assert!(interpret(1.0 + 1e-12, BandScale::Cohen).is_ok());
    }

    #[test]
    fn scale_names_parse() {
        assert_eq!("Cohen".parse::<BandScale>().unwrap(), BandScale::Cohen);
        assert_eq!(BandScale::Practice.to_string(), "practice");
        assert!("other".parse::<BandScale>().is_err());
    }

    proptest! {
        #[test]
        fn total_on_unit_interval(score in -1.0f64..=1.0) {
            for scale in BandScale::ALL {
                let label = interpret(score, scale).unwrap();
                prop_assert_eq!(scale.labels().iter().filter(|l| **l == label).count(), 1);
            }
        }
    }
}
