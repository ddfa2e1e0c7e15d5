//! Scoring against ground-truth tables of contents.

mod boundaries;
mod titles;
mod zss;

pub use boundaries::{default_window, linearize_boundaries, pk, window_diff, MetricError};
pub use titles::{title_pr_ed, Counts, DEFAULT_TOLERANCE};
pub use zss::{tree_edit_distance, zss_distance};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::BookDocument;
use crate::segmenter::{
    build_section_tree, segment_document, SectionTree, SegmentConfig, SegmentError,
    SegmentationResult,
};
use crate::toc::{DetectedHeading, HeadingSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub level: u32,
    pub title: String,
    pub page: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthToc {
    pub file_key: String,
    pub entries: Vec<GroundTruthEntry>,
}

impl GroundTruthToc {
    pub fn headings(&self) -> Vec<DetectedHeading> {
        self.entries
            .iter()
            .map(|e| DetectedHeading::new(e.level, &e.title, e.page, HeadingSource::External))
            .collect()
    }

    pub fn max_depth(&self) -> u32 {
        self.entries.iter().map(|e| e.level).max().unwrap_or(0)
    }

    pub fn tree(&self) -> SectionTree {
        SectionTree::from_levels(self.entries.iter().map(|e| (e.level, e.title.as_str())))
    }

    pub fn from_headings(file_key: &str, headings: &[DetectedHeading]) -> Self {
        GroundTruthToc {
            file_key: file_key.to_string(),
            entries: headings
                .iter()
                .map(|h| GroundTruthEntry {
                    level: h.level,
                    title: h.text.clone(),
                    page: h.page,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub file_key: String,
    pub max_depth: u32,
    pub precision_ed: f64,
    pub recall_ed: f64,
    pub tree_edit_distance: usize,
    pub pk: f64,
    pub window_diff: f64,
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("file key mismatch: prediction {pred:?}, ground truth {gt:?}, document {doc:?}")]
    FileKey { pred: String, gt: String, doc: String },
    #[error("segmenting ground truth: {0}")]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Scores one file: title P/R, hierarchy distance and boundary metrics.
///
/// The reference boundaries come from segmenting the same document with
/// the ground-truth headings, so both sequences share one unitization.
pub fn evaluate_file(
    pred: &SegmentationResult,
    gt: &GroundTruthToc,
    doc: &BookDocument,
    cfg: &SegmentConfig,
) -> Result<EvalReport, EvalError> {
    if pred.file_key != gt.file_key || gt.file_key != doc.file_key {
        return Err(EvalError::FileKey {
            pred: pred.file_key.clone(),
            gt: gt.file_key.clone(),
            doc: doc.file_key.clone(),
        });
    }
    let counts = title_pr_ed(&pred.headings(), gt, DEFAULT_TOLERANCE);
    let ted = zss_distance(&build_section_tree(&pred.segments), &gt.tree());

    let reference = segment_document(doc, &gt.headings(), cfg)?;
    let ref_seq = linearize_boundaries(&reference, doc, cfg)?;
    let hyp_seq = linearize_boundaries(pred, doc, cfg)?;
    let k = default_window(&ref_seq);

    Ok(EvalReport {
        file_key: gt.file_key.clone(),
        max_depth: gt.max_depth(),
        precision_ed: counts.precision(),
        recall_ed: counts.recall(),
        tree_edit_distance: ted,
        pk: pk(&ref_seq, &hyp_seq, Some(k))?,
        window_diff: window_diff(&ref_seq, &hyp_seq, Some(k))?,
        counts,
    })
}

/// Unweighted means of per-file metrics for one ground-truth depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub max_depth: u32,
    pub files: usize,
    pub precision_ed: f64,
    pub recall_ed: f64,
    pub tree_edit_distance: f64,
    pub pk: f64,
    pub window_diff: f64,
}

pub fn aggregate_by_depth(reports: &[EvalReport]) -> Vec<DepthSummary> {
    let mut groups: BTreeMap<u32, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.max_depth).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(max_depth, rs)| {
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&EvalReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            DepthSummary {
                max_depth,
                files: rs.len(),
                precision_ed: mean(&|r| r.precision_ed),
                recall_ed: mean(&|r| r.recall_ed),
                tree_edit_distance: mean(&|r| r.tree_edit_distance as f64),
                pk: mean(&|r| r.pk),
                window_diff: mean(&|r| r.window_diff),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn gt(entries: &[(u32, &str, u32)]) -> GroundTruthToc {
        GroundTruthToc {
            file_key: "k".into(),
            entries: entries
                .iter()
                .map(|&(level, title, page)| GroundTruthEntry { level, title: title.into(), page })
                .collect(),
        }
    }

    fn pred(entries: &[(u32, &str, u32)]) -> Vec<DetectedHeading> {
        entries
            .iter()
            .map(|&(l, t, p)| DetectedHeading::new(l, t, p, HeadingSource::Llm))
            .collect()
    }

    #[test]
    fn identical_lists_are_perfect() {
        let entries = [(1, "Torts", 1), (2, "Negligence", 2), (2, "Nuisance", 3)];
        let c = title_pr_ed(&pred(&entries), &gt(&entries), 0);
        assert_eq!(c, Counts { tp: 3, fp: 0, fn_: 0 });
        assert_eq!((c.precision(), c.recall()), (1.0, 1.0));
    }

    #[test]
    fn small_typos_are_tolerated() {
        let c = title_pr_ed(&pred(&[(1, "Chapter 0ne ", 1)]), &gt(&[(1, "Chapter One", 1)]), 2);
        assert_eq!(c.tp, 1);
        let c = title_pr_ed(&pred(&[(1, "Chapter Two", 1)]), &gt(&[(1, "Chapter One", 1)]), 2);
        assert_eq!(c.tp, 0);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let c = title_pr_ed(&[], &gt(&[(1, "A", 1)]), 2);
        assert_eq!((c.precision(), c.recall()), (0.0, 0.0));
        assert_eq!(c.fn_, 1);
    }

    // Exhaustive maximum matching over pairs within tolerance.
    fn best_assignment(p: &[DetectedHeading], g: &GroundTruthToc, tol: usize) -> usize {
        fn go(i: usize, p: &[DetectedHeading], g: &GroundTruthToc, tol: usize, used: &mut Vec<bool>) -> usize {
            if i == p.len() {
                return 0;
            }
            let mut best = go(i + 1, p, g, tol, used);
            for j in 0..g.entries.len() {
                if !used[j] && levenshtein_ref(p[i].text.trim(), g.entries[j].title.trim()) <= tol {
                    used[j] = true;
                    best = best.max(1 + go(i + 1, p, g, tol, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, p, g, tol, &mut vec![false; g.entries.len()])
    }

    fn levenshtein_ref(a: &str, b: &str) -> usize {
        crate::matching::levenshtein(a, b)
    }

    #[test]
    fn five_predictions_against_eight_truths() {
        let g = gt(&[
            (1, "Introduction", 1),
            (2, "Sources of Law", 2),
            (2, "Courts", 3),
            (1, "Contract", 4),
            (2, "Offer", 5),
            (2, "Acceptance", 6),
            (1, "Torts", 7),
            (2, "Negligence", 8),
        ]);
        let p = pred(&[
            (1, "Introduction", 1),
            (2, "Sources of Lav", 2),
            (1, "Contracts", 4),
            (2, "Acceptance.", 6),
            (1, "Appendix", 9),
        ]);
        let c = title_pr_ed(&p, &g, 2);
        assert_eq!(c.tp, best_assignment(&p, &g, 2));
        assert_eq!(c, Counts { tp: 4, fp: 1, fn_: 4 });
        assert_eq!(c.precision(), 0.8);
        assert_eq!(c.recall(), 0.5);
    }

    #[test]
    fn aggregate_groups_by_depth() {
        let mk = |key: &str, depth, p| EvalReport {
            file_key: key.into(),
            max_depth: depth,
            precision_ed: p,
            recall_ed: 1.0,
            tree_edit_distance: 2,
            pk: 0.0,
            window_diff: 0.5,
            counts: Counts::default(),
        };
        let s = aggregate_by_depth(&[mk("a", 3, 1.0), mk("b", 5, 0.5), mk("c", 3, 0.5)]);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].max_depth, 3);
        assert_eq!(s[0].files, 2);
        assert_eq!(s[0].precision_ed, 0.75);
        assert_eq!(s[1].precision_ed, 0.5);
    }

    #[test]
    fn file_key_mismatch_is_rejected() {
        let doc = BookDocument::new("a");
        let res = SegmentationResult { file_key: "a".into(), segments: vec![], unmatched: vec![] };
        let g = GroundTruthToc { file_key: "b".into(), entries: vec![] };
        assert!(matches!(evaluate_file(&res, &g, &doc, &SegmentConfig::default()), Err(EvalError::FileKey { .. })));
    }
}
