//! Boundary sequences over reading-order lines and the Pk / WindowDiff
//! segmentation error metrics.
//!
//! A boundary sequence marks position `i` when a segment starts at line
//! `i`. Position 0 is never marked: the document start is not a boundary.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::BookDocument;
use crate::segmenter::{SegmentConfig, SegmentationResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("reference has {reference} positions but hypothesis has {hypothesis}")]
    LengthMismatch { reference: usize, hypothesis: usize },
    #[error("sequence of length {len} is too short for window size {k}")]
    TooShort { len: usize, k: usize },
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("segments cover {covered} lines but the document has {lines}")]
    Coverage { covered: usize, lines: usize },
}

/// Marks the first line of every segment in the document's line sequence.
pub fn linearize_boundaries(
    result: &SegmentationResult,
    doc: &BookDocument,
    cfg: &SegmentConfig,
) -> Result<Vec<bool>, MetricError> {
    let lines = doc.lines(cfg.line_tolerance).len();
    let covered: usize = result.segments.iter().map(|s| s.line_count()).sum();
    if covered != lines {
        return Err(MetricError::Coverage { covered, lines });
    }
    let mut seq = vec![false; lines];
    let mut start = 0usize;
    for seg in &result.segments {
        let n = seg.line_count();
        if n > 0 && start > 0 {
            seq[start] = true;
        }
        start += n;
    }
    Ok(seq)
}

/// Half the mean reference segment length, rounded, at least 2.
pub fn default_window(reference: &[bool]) -> usize {
    let n = reference.len();
    let segments = 1 + reference.iter().skip(1).filter(|b| **b).count();
    // round(n / (2 * segments)) with halves rounded up
    let k = (n + segments) / (2 * segments);
    k.max(2)
}

fn check(reference: &[bool], hypothesis: &[bool], k: Option<usize>) -> Result<usize, MetricError> {
    if reference.len() != hypothesis.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            hypothesis: hypothesis.len(),
        });
    }
    let k = k.unwrap_or_else(|| default_window(reference));
    if k == 0 {
        return Err(MetricError::ZeroWindow);
    }
    if reference.len() < k + 1 {
        return Err(MetricError::TooShort { len: reference.len(), k });
    }
    Ok(k)
}

/// prefix[i] = number of boundaries at positions 1..=i
fn prefix_counts(seq: &[bool]) -> Vec<usize> {
    let mut prefix = Vec::with_capacity(seq.len());
    let mut total = 0;
    for (i, &b) in seq.iter().enumerate() {
        if i > 0 && b {
            total += 1;
        }
        prefix.push(total);
    }
    prefix
}

/// Fraction of position pairs `(i, i + k)` on which reference and
/// hypothesis disagree about being in the same segment.
pub fn pk(reference: &[bool], hypothesis: &[bool], k: Option<usize>) -> Result<f64, MetricError> {
    let k = check(reference, hypothesis, k)?;
    let (r, h) = (prefix_counts(reference), prefix_counts(hypothesis));
    let windows = reference.len() - k;
    let errors = (0..windows)
        .filter(|&i| (r[i + k] == r[i]) != (h[i + k] == h[i]))
        .count();
    Ok(errors as f64 / windows as f64)
}

/// Fraction of windows `(i, i + k]` whose boundary counts differ.
pub fn window_diff(reference: &[bool], hypothesis: &[bool], k: Option<usize>) -> Result<f64, MetricError> {
    let k = check(reference, hypothesis, k)?;
    let (r, h) = (prefix_counts(reference), prefix_counts(hypothesis));
    let windows = reference.len() - k;
    let errors = (0..windows)
        .filter(|&i| r[i + k] - r[i] != h[i + k] - h[i])
        .count();
    Ok(errors as f64 / windows as f64)
}
