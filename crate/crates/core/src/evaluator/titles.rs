//! Edit-tolerant precision and recall of detected titles.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::GroundTruthToc;
use crate::matching::levenshtein;
use crate::toc::DetectedHeading;

pub const DEFAULT_TOLERANCE: usize = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one assignment of predictions to ground-truth titles.
///
/// Predictions are taken in order. Each looks at the unconsumed entries on
/// its own page (any page when none is left there) and picks the one with
/// the smallest edit distance between trimmed titles, earliest on ties. A
/// distance within `tolerance` is a true positive and consumes the entry.
pub fn title_pr_ed(pred: &[DetectedHeading], gt: &GroundTruthToc, tolerance: usize) -> Counts {
    let mut consumed = vec![false; gt.entries.len()];
    let mut tp = 0;
    for p in pred {
        let text = p.text.trim();
        let same_page: Vec<usize> = (0..gt.entries.len())
            .filter(|&i| !consumed[i] && gt.entries[i].page == p.page)
            .collect();
        let pool: Vec<usize> = if same_page.is_empty() {
            (0..gt.entries.len()).filter(|&i| !consumed[i]).collect()
        } else {
            same_page
        };
        let best = pool
            .into_iter()
            .map(|i| (levenshtein(text, gt.entries[i].title.trim()), i))
            .min();
        if let Some((dist, i)) = best {
            if dist <= tolerance {
                consumed[i] = true;
                tp += 1;
            }
        }
    }
    Counts {
        tp,
        fp: pred.len() - tp,
        fn_: gt.entries.len() - tp,
    }
}
