//! Rule-based stand-in for the language model.
//!
//! A rules file is a JSON object with an ordered `rules` list:
//!
//! ```json
//! {"rules": [
//!   {"pattern": "^(?i)contents$", "is_heading": false},
//!   {"pattern": "^\\d+\\.\\d+\\s", "level": 2},
//!   {"pattern": "^(Chapter|Part)\\b", "level": 1}
//! ]}
//! ```
//!
//! The first rule whose pattern matches the candidate text decides the
//! verdict. Candidates that match nothing are rejected.

use std::path::Path;

use bookseg_core::candidates::HeadingCandidate;
use bookseg_core::refiner::{BatchRefiner, ConfirmedHeading, RefineError, RefinerConfig, RefinerVerdict};
use regex::Regex;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("reading rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("rules file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("rule {index}: invalid pattern: {source}")]
    Pattern { index: usize, source: regex::Error },
    #[error("rule {index}: a heading rule needs a level")]
    MissingLevel { index: usize },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
struct RuleSpec {
    pattern: String,
    #[serde(default = "yes")]
    is_heading: bool,
    level: Option<u32>,
}

#[derive(Debug, Deserialize)]
struct RulesFile {
    rules: Vec<RuleSpec>,
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Regex,
    level: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct MockRefiner {
    rules: Vec<Rule>,
}

impl MockRefiner {
    pub fn from_json(text: &str) -> Result<Self, RulesError> {
        let file: RulesFile = serde_json::from_str(text)?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for (index, spec) in file.rules.into_iter().enumerate() {
            let pattern = Regex::new(&spec.pattern).map_err(|source| RulesError::Pattern { index, source })?;
            let level = if spec.is_heading {
                Some(spec.level.ok_or(RulesError::MissingLevel { index })?)
            } else {
                None
            };
            rules.push(Rule { pattern, level });
        }
        Ok(MockRefiner { rules })
    }

    pub fn load(path: &Path) -> Result<Self, RulesError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn verdict(&self, index: usize, text: &str, cfg: &RefinerConfig) -> Result<RefinerVerdict, RefineError> {
        let cleaned = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let level = self
            .rules
            .iter()
            .find(|r| r.pattern.is_match(&cleaned))
            .and_then(|r| r.level);
        if let Some(level) = level {
            if !(1..=cfg.max_level).contains(&level) {
                return Err(RefineError::Config(format!(
                    "mock rule level {level} is outside 1..={}",
                    cfg.max_level
                )));
            }
        }
        Ok(RefinerVerdict {
            candidate_index: index,
            is_heading: level.is_some(),
            cleaned_text: cleaned,
            level,
        })
    }
}

impl BatchRefiner for MockRefiner {
    fn refine_batch(
        &mut self,
        _batch_index: usize,
        batch: &[HeadingCandidate],
        _context: &[ConfirmedHeading],
        cfg: &RefinerConfig,
    ) -> Result<Vec<RefinerVerdict>, RefineError> {
        batch
            .iter()
            .enumerate()
            .map(|(i, c)| self.verdict(i, &c.text, cfg))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bookseg_core::candidates::{CandidateFeatures, CandidateSource};
    use bookseg_core::refiner::refine;

    fn cand(text: &str, page: u32) -> HeadingCandidate {
        HeadingCandidate {
            text: text.into(),
            page,
            features: CandidateFeatures::default(),
            trailing_text: String::new(),
            source: CandidateSource::Xml,
        }
    }

    const RULES: &str = r#"{"rules": [
        {"pattern": "(?i)^contents$", "is_heading": false},
        {"pattern": "^\\d+\\.\\d+\\s", "level": 2},
        {"pattern": "^(Chapter|Part)\\b", "level": 1}
    ]}"#;

    #[test]
    fn first_matching_rule_wins() {
        let mut mock = MockRefiner::from_json(RULES).unwrap();
        let cands = [cand("Contents", 1), cand("Chapter  1", 2), cand("1.1 Scope", 2), cand("page 7", 3)];
        let out = refine(&cands, &RefinerConfig::default(), &mut mock).unwrap();
        let got: Vec<_> = out.iter().map(|h| (h.level, h.text.as_str(), h.page)).collect();
        assert_eq!(got, vec![(1, "Chapter 1", 2), (2, "1.1 Scope", 2)]);
    }

    #[test]
    fn bad_rules_are_config_errors() {
        assert!(matches!(
            MockRefiner::from_json(r#"{"rules":[{"pattern":"(","level":1}]}"#),
            Err(RulesError::Pattern { index: 0, .. })
        ));
        assert!(matches!(
            MockRefiner::from_json(r#"{"rules":[{"pattern":"x"}]}"#),
            Err(RulesError::MissingLevel { index: 0 })
        ));
        let mut mock = MockRefiner::from_json(r#"{"rules":[{"pattern":"x","level":11}]}"#).unwrap();
        assert!(refine(&[cand("x", 1)], &RefinerConfig::default(), &mut mock).is_err());
    }
}
