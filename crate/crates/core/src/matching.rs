//! Heading normalization and the exact / substring / fuzzy matching cascade.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::model::squeeze_whitespace;

pub const DEFAULT_FUZZY_THRESHOLD: u8 = 80;
pub const DEFAULT_MIN_WORD_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exact,
    Substring,
    Fuzzy,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Exact, Strategy::Substring, Strategy::Fuzzy];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Exact => "exact",
            Strategy::Substring => "substring",
            Strategy::Fuzzy => "fuzzy",
        }
    }
}

impl core::str::FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(Strategy::Exact),
            "substring" => Ok(Strategy::Substring),
            "fuzzy" => Ok(Strategy::Fuzzy),
            _ => Err(ConfigError::UnknownStrategy(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("fuzzy threshold {0} is outside 0..=100")]
    Threshold(u8),
    #[error("minimum word length must be at least 1")]
    MinWordLen,
    #[error("unknown matching strategy {0:?}")]
    UnknownStrategy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub fuzzy_threshold: u8,
    pub min_word_len: usize,
    /// Enabled strategies. Evaluation order is always exact, substring, fuzzy.
    pub strategies: Vec<Strategy>,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
            min_word_len: DEFAULT_MIN_WORD_LEN,
            strategies: Strategy::ALL.to_vec(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.fuzzy_threshold > 100 {
            return Err(ConfigError::Threshold(self.fuzzy_threshold));
        }
        if self.min_word_len == 0 {
            return Err(ConfigError::MinWordLen);
        }
        Ok(())
    }

    pub fn enabled(&self, strategy: Strategy) -> bool {
        self.strategies.contains(&strategy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    /// First strategy that fired, if any.
    pub strategy: Option<Strategy>,
}

impl MatchResult {
    pub const NONE: MatchResult = MatchResult { strategy: None };

    pub fn matched(&self) -> bool {
        self.strategy.is_some()
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            get_general_category(c),
            GeneralCategory::ConnectorPunctuation
                | GeneralCategory::DashPunctuation
                | GeneralCategory::OpenPunctuation
                | GeneralCategory::ClosePunctuation
                | GeneralCategory::InitialPunctuation
                | GeneralCategory::FinalPunctuation
                | GeneralCategory::OtherPunctuation
        )
}

fn tighten_separators(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == ' ' {
            let prev = i.checked_sub(1).map(|j| chars[j]);
            let next = chars.get(i + 1).copied();
            if matches!(prev, Some('/') | Some('-')) || matches!(next, Some('/') | Some('-')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn is_single_letter(token: &str) -> bool {
    let mut it = token.chars();
    matches!((it.next(), it.next()), (Some(c), None) if c.is_alphabetic())
}

/// Joins runs of two or more single-letter tokens: "P U B L I C" -> "PUBLIC".
fn join_spaced_letters(s: &str) -> String {
    let tokens: Vec<&str> = s.split(' ').collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < tokens.len() {
        let mut j = i;
        while j < tokens.len() && is_single_letter(tokens[j]) {
            j += 1;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        if j - i >= 2 {
            for t in &tokens[i..j] {
                out.push_str(t);
            }
            i = j;
        } else {
            out.push_str(tokens[i]);
            i += 1;
        }
    }
    out
}

fn normalize_pass(text: &str) -> String {
    let squeezed = squeeze_whitespace(text);
    let tightened = tighten_separators(&squeezed);
    let joined = join_spaced_letters(&tightened);
    let stripped: String = joined.chars().filter(|&c| !is_punctuation(c)).collect();
    stripped.chars().flat_map(char::to_lowercase).collect()
}

/// Normalizes text for heading comparison.
///
/// Each pass squeezes whitespace, removes spaces around `/` and `-`, joins
/// letter-spaced words, strips punctuation and lowercases. Passes repeat
/// until the text stops changing so the result is idempotent (stripping
/// punctuation can expose new spaced-out letters or double spaces).
pub fn normalize(text: &str) -> String {
    let mut current = normalize_pass(text);
    for _ in 0..8 {
        let next = normalize_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (diag + cost).min(above + 1).min(row[j] + 1);
            diag = above;
        }
    }
    row[b.len()]
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

/// `round(100 * (len - dist) / len)` with halves rounded up.
fn ratio(dist: usize, len: usize) -> u8 {
    let kept = len - dist.min(len);
    ((200 * kept + len) / (2 * len)) as u8
}

fn partial_ratio_chars(a: &[char], b: &[char]) -> u8 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return if long.is_empty() { 100 } else { 0 };
    }
    let n = short.len();
    if long.windows(n).any(|w| w == short) {
        return 100;
    }
    let mut best = 0u8;
    for window in long.windows(n) {
        let score = ratio(levenshtein_chars(short, window), n);
        if score > best {
            best = score;
        }
    }
    best
}

/// Best similarity (0-100) between the shorter string and any same-length
/// window of the longer one.
pub fn partial_ratio(needle: &str, haystack: &str) -> u8 {
    let a: Vec<char> = needle.chars().collect();
    let b: Vec<char> = haystack.chars().collect();
    partial_ratio_chars(&a, &b)
}

/// A heading with its normalized forms computed once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedHeading {
    normalized: String,
    normalized_chars: Vec<char>,
    compact: String,
    long_words: Vec<String>,
}

impl PreparedHeading {
    pub fn new(heading: &str, cfg: &MatchConfig) -> Self {
        let normalized = normalize(heading);
        let compact = normalized.chars().filter(|c| *c != ' ').collect();
        let long_words = normalized
            .split(' ')
            .filter(|w| w.chars().count() >= cfg.min_word_len)
            .map(String::from)
            .collect();
        PreparedHeading {
            normalized_chars: normalized.chars().collect(),
            normalized,
            compact,
            long_words,
        }
    }

    pub fn normalized(&self) -> &str {
        &self.normalized
    }

    /// A heading that normalizes to nothing can never match.
    pub fn is_degenerate(&self) -> bool {
        self.compact.is_empty()
    }

    pub fn matches(&self, text: &str, cfg: &MatchConfig) -> MatchResult {
        if self.is_degenerate() {
            return MatchResult::NONE;
        }
        let norm = normalize(text);
        let compact: String = norm.chars().filter(|c| *c != ' ').collect();
        if cfg.enabled(Strategy::Exact) && compact == self.compact {
            return MatchResult { strategy: Some(Strategy::Exact) };
        }
        if cfg.enabled(Strategy::Substring) && compact.contains(self.compact.as_str()) {
            return MatchResult { strategy: Some(Strategy::Substring) };
        }
        if cfg.enabled(Strategy::Fuzzy) {
            // containment of the space-free forms counts as a ratio of 100, so
            // anything the substring strategy accepts, fuzzy accepts too
            if compact.contains(self.compact.as_str()) {
                return MatchResult { strategy: Some(Strategy::Fuzzy) };
            }
            let text_chars: Vec<char> = norm.chars().collect();
            if partial_ratio_chars(&self.normalized_chars, &text_chars) >= cfg.fuzzy_threshold {
                return MatchResult { strategy: Some(Strategy::Fuzzy) };
            }
            let hit = self
                .long_words
                .iter()
                .any(|w| norm.split(' ').any(|t| t == w));
            if hit {
                return MatchResult { strategy: Some(Strategy::Fuzzy) };
            }
        }
        MatchResult::NONE
    }
}

/// Tests whether `text` contains `heading`, reporting the first strategy
/// (exact, then substring, then fuzzy) that fires.
pub fn match_heading(text: &str, heading: &str, cfg: &MatchConfig) -> MatchResult {
    PreparedHeading::new(heading, cfg).matches(text, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;
    use super::Strategy;

    #[test]
    fn normalize_vectors() {
        assert_eq!(normalize("P U B L I C  LAW"), "public law");
        assert_eq!(normalize("Part I / Section-2:"), "part isection2");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("  \u{201c}Trusts\u{201d} \u{2014} Part  2 "), "trusts part 2");
        assert_eq!(normalize("A. B. C."), "abc");
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("a", ""), 1);
        assert_eq!(levenshtein("", ""), 0);
        assert_eq!(levenshtein("ü", "u"), 1);
    }

    // Breadth-first search over single edits from `a`, restricted to the
    // characters of both strings; finds the distance when it is <= depth.
    fn edit_search(a: &str, b: &str, depth: usize) -> Option<usize> {
        let alphabet: Vec<char> = {
            let mut v: Vec<char> = a.chars().chain(b.chars()).collect();
            v.sort();
            v.dedup();
            v
        };
        let mut frontier = vec![a.to_string()];
        let mut seen = alloc::collections::BTreeSet::new();
        seen.insert(a.to_string());
        for d in 0..=depth {
            if frontier.iter().any(|s| s == b) {
                return Some(d);
            }
            let mut next = Vec::new();
            for s in &frontier {
                let cs: Vec<char> = s.chars().collect();
                let mut push = |v: Vec<char>| {
                    let t: String = v.into_iter().collect();
                    if seen.insert(t.clone()) {
                        next.push(t);
                    }
                };
                for i in 0..=cs.len() {
                    for &c in &alphabet {
                        let mut v = cs.clone();
                        v.insert(i, c);
                        push(v);
                    }
                    if i < cs.len() {
                        let mut v = cs.clone();
                        v.remove(i);
                        push(v);
                        for &c in &alphabet {
                            let mut v = cs.clone();
                            v[i] = c;
                            push(v);
                        }
                    }
                }
            }
            frontier = next;
        }
        None
    }

    #[test]
    fn kitten_sitting_by_enumeration() {
        assert_eq!(edit_search("kitten", "sitting", 3), Some(3));
        assert_eq!(edit_search("kitten", "sitting", 2), None);
    }

    // Independent window enumeration with float ratios.
    fn brute_partial(a: &str, b: &str) -> u8 {
        let (s, l): (Vec<char>, Vec<char>) = if a.chars().count() <= b.chars().count() {
            (a.chars().collect(), b.chars().collect())
        } else {
            (b.chars().collect(), a.chars().collect())
        };
        if s.is_empty() {
            return if l.is_empty() { 100 } else { 0 };
        }
        let mut best = 0.0f64;
        for start in 0..=(l.len() - s.len()) {
            let w: String = l[start..start + s.len()].iter().collect();
            let sw: String = s.iter().collect();
            let d = levenshtein(&sw, &w) as f64;
            let r = 100.0 * (1.0 - d / s.len() as f64);
            if r > best {
                best = r;
            }
        }
        // round half up; values here are k/n * 100 so exact halves are representable
        let floor = best as u64;
        (if best - floor as f64 >= 0.5 { floor + 1 } else { floor }) as u8
    }

    #[test]
    fn partial_ratio_examples() {
        assert_eq!(partial_ratio("chapter", "chapter one"), 100);
        assert_eq!(partial_ratio("a", "a"), 100);
        assert_eq!(partial_ratio("", ""), 100);
        assert_eq!(partial_ratio("", "x"), 0);
        let expected = brute_partial("abcd", "xxabzdxx");
        assert_eq!(expected, 75);
        assert_eq!(partial_ratio("abcd", "xxabzdxx"), expected);
    }

    #[test]
    fn match_heading_examples() {
        let cfg = MatchConfig::default();
        assert_eq!(
            match_heading("CHAPTER  ONE", "Chapter One", &cfg).strategy,
            Some(Strategy::Exact)
        );
        let pr = partial_ratio(&normalize("Introduction to Law"), &normalize("1 Intraduction to Law"));
        assert_eq!(pr, 95);
        assert_eq!(
            match_heading("1 Intraduction to Law", "Introduction to Law", &cfg).strategy,
            Some(Strategy::Fuzzy)
        );
        assert_eq!(partial_ratio("references", "chapter nine"), 30);
        assert!(!match_heading("references", "Chapter Nine", &cfg).matched());
    }

    #[test]
    fn substring_and_word_clauses() {
        let cfg = MatchConfig::default();
        assert_eq!(
            match_heading("12 Duties of Care continued", "Duties of care", &cfg).strategy,
            Some(Strategy::Substring)
        );
        // partial ratio is low but "negligence" appears as a whole word
        assert_eq!(
            match_heading("the law of negligence today and tomorrow", "Zzzz Negligence", &cfg)
                .strategy,
            Some(Strategy::Fuzzy)
        );
        // word containment is whole-word only
        let strict = MatchConfig { fuzzy_threshold: 100, ..MatchConfig::default() };
        assert!(!match_heading("negligenceful", "Qqqq Negligence", &strict).matched());
    }

    #[test]
    fn disabled_strategies_do_not_fire() {
        let cfg = MatchConfig { strategies: vec![Strategy::Fuzzy], ..MatchConfig::default() };
        assert_eq!(match_heading("Torts", "Torts", &cfg).strategy, Some(Strategy::Fuzzy));
        let none = MatchConfig { strategies: vec![], ..MatchConfig::default() };
        assert!(!match_heading("Torts", "Torts", &none).matched());
    }

    #[test]
    fn degenerate_headings_never_match() {
        let cfg = MatchConfig::default();
        assert!(!match_heading("***", "***", &cfg).matched());
        assert!(PreparedHeading::new("-- . --", &cfg).is_degenerate());
    }

    #[test]
    fn config_validation() {
        assert!(MatchConfig::default().validate().is_ok());
        let bad = MatchConfig { fuzzy_threshold: 101, ..MatchConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::Threshold(101)));
        let bad = MatchConfig { min_word_len: 0, ..MatchConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::MinWordLen));
        assert_eq!("Fuzzy".parse::<Strategy>(), Ok(Strategy::Fuzzy));
        assert!("soundex".parse::<Strategy>().is_err());
    }

    fn reference_dp(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn normalize_spaced_text_is_idempotent(s in "[A-Za-z ./:,-]{0,30}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn levenshtein_is_a_metric(a in "[abc]{0,7}", b in "[abc]{0,7}", c in "[abc]{0,7}") {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, reference_dp(&a, &b));
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        }

        #[test]
        fn partial_ratio_matches_window_enumeration(a in "[abcd]{0,6}", b in "[abcd]{0,10}") {
            prop_assert_eq!(partial_ratio(&a, &b), brute_partial(&a, &b));
        }

        #[test]
        fn heading_matches_itself_exactly(s in "[A-Za-z0-9 .,:]{1,30}") {
            let cfg = MatchConfig::default();
            prop_assume!(!normalize(&s).replace(' ', "").is_empty());
            prop_assert_eq!(match_heading(&s, &s, &cfg).strategy, Some(Strategy::Exact));
        }
    }
}
