//! Pipeline configuration, loaded from TOML and overridden by flags.
//!
//! ```toml
//! line_tolerance = 2
//! jobs = 4
//!
//! [match]
//! fuzzy_threshold = 80
//! min_word_len = 4
//! strategies = ["exact", "substring", "fuzzy"]
//!
//! [candidates]
//! rare_max_share = 0.10
//! min_occurrences = 3
//!
//! [refiner]
//! endpoint_url = "https://api.example.com/v1/chat/completions"
//! model_name = "gpt-4o"
//! batch_size = 40
//! ```
//!
//! Every key is optional.

use std::path::{Path, PathBuf};

use anyhow::Context;
use bookseg_core::candidates::CandidateConfig;
use bookseg_core::matching::MatchConfig;
use bookseg_core::model::DEFAULT_LINE_TOLERANCE;
use bookseg_core::refiner::RefinerConfig;
use bookseg_core::SegmentConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub line_tolerance: u32,
    pub candidates: CandidateConfig,
    pub refiner: RefinerConfig,
    /// Worker threads for multi-file commands; 0 means one per core.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            matching: MatchConfig::default(),
            line_tolerance: DEFAULT_LINE_TOLERANCE,
            candidates: CandidateConfig::default(),
            refiner: RefinerConfig::default(),
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn segment(&self) -> SegmentConfig {
        SegmentConfig {
            matching: self.matching.clone(),
            line_tolerance: self.line_tolerance,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.matching.validate()?;
        self.refiner.validate()?;
        let c = &self.candidates;
        anyhow::ensure!(
            (0.0..=1.0).contains(&c.rare_max_share),
            "candidates.rare_max_share must be within 0..=1"
        );
        anyhow::ensure!(c.merge_gap_factor >= 0.0, "candidates.merge_gap_factor must be non-negative");
        anyhow::ensure!(c.gap_factor > 0.0, "candidates.gap_factor must be positive");
        anyhow::ensure!(c.max_words > 0, "candidates.max_words must be at least 1");
        Ok(())
    }
}

/// Where a relative path in a config file should be resolved from.
pub fn resolve_relative(base: Option<&Path>, path: &Path) -> PathBuf {
    match base.and_then(Path::parent) {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bookseg_core::matching::Strategy;

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            "line_tolerance = 3\n[match]\nfuzzy_threshold = 90\nstrategies = [\"exact\"]\n[candidates]\nmin_conf = 50.0\n",
        )
        .unwrap();
        assert_eq!(cfg.line_tolerance, 3);
        assert_eq!(cfg.matching.fuzzy_threshold, 90);
        assert_eq!(cfg.matching.min_word_len, 4);
        assert_eq!(cfg.matching.strategies, vec![Strategy::Exact]);
        assert_eq!(cfg.candidates.min_conf, 50.0);
        assert_eq!(cfg.refiner.batch_size, 40);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<PipelineConfig>("typo = 1").is_err());
        let cfg: PipelineConfig = toml::from_str("[match]\nfuzzy_threshold = 101").unwrap();
        assert!(cfg.validate().is_err());
        let cfg: PipelineConfig = toml::from_str("[refiner]\nmax_level = 11").unwrap();
        assert!(cfg.validate().is_err());
    }
}
