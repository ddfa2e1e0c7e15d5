//! The two segmentation pipelines and the evaluation step, wired to the
//! configuration type.

use bookseg_core::candidates::{
    fuse_candidates, select_ocr_candidates, select_xml_candidates, HeadingCandidate, OcrLine,
};
use bookseg_core::evaluator::{evaluate_file, EvalError, EvalReport, GroundTruthToc};
use bookseg_core::refiner::{refine, BatchRefiner, RefineError};
use bookseg_core::segmenter::SegmentError;
use bookseg_core::toc::{headings_from_outline, TocError};
use bookseg_core::{segment_document, BookDocument, DetectedHeading, SegmentationResult};

use crate::config::PipelineConfig;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{file_key}: {error}; use the candidates/refine or llm-segment commands instead")]
    NoOutline { file_key: String, error: TocError },
    #[error("{file_key}: {error}")]
    Segment { file_key: String, error: SegmentError },
    #[error("{file_key}: {error}")]
    Refine { file_key: String, error: RefineError },
    #[error("{file_key}: {error}")]
    Eval { file_key: String, error: EvalError },
}

/// Segments a book at the entries of its embedded outline.
pub fn toc_segment(doc: &BookDocument, cfg: &PipelineConfig) -> Result<SegmentationResult, PipelineError> {
    let headings = headings_from_outline(doc).map_err(|error| PipelineError::NoOutline {
        file_key: doc.file_key.clone(),
        error,
    })?;
    segment_with(doc, &headings, cfg)
}

pub fn segment_with(
    doc: &BookDocument,
    headings: &[DetectedHeading],
    cfg: &PipelineConfig,
) -> Result<SegmentationResult, PipelineError> {
    let result = segment_document(doc, headings, &cfg.segment()).map_err(|error| PipelineError::Segment {
        file_key: doc.file_key.clone(),
        error,
    })?;
    for u in &result.unmatched {
        log::warn!("{}: heading {:?} not found on page {}", u.file_key, u.heading, u.page);
    }
    Ok(result)
}

/// Candidate headings from the XML layer, fused with OCR lines when given.
pub fn detect_candidates(
    doc: &BookDocument,
    ocr: Option<&[OcrLine]>,
    cfg: &PipelineConfig,
) -> Vec<HeadingCandidate> {
    let xml = select_xml_candidates(doc, &cfg.candidates);
    let ocr = ocr
        .map(|lines| select_ocr_candidates(lines, &cfg.candidates))
        .unwrap_or_default();
    log::info!(
        "{}: {} XML and {} OCR candidates",
        doc.file_key,
        xml.len(),
        ocr.len()
    );
    fuse_candidates(&xml, &ocr, &cfg.matching)
}

pub struct LlmSegmentation {
    pub candidates: Vec<HeadingCandidate>,
    pub headings: Vec<DetectedHeading>,
    pub result: SegmentationResult,
}

/// Candidates, refinement, then segmentation at the confirmed headings.
pub fn llm_segment<R: BatchRefiner + ?Sized>(
    doc: &BookDocument,
    ocr: Option<&[OcrLine]>,
    cfg: &PipelineConfig,
    refiner: &mut R,
) -> Result<LlmSegmentation, PipelineError> {
    let candidates = detect_candidates(doc, ocr, cfg);
    let headings = refine(&candidates, &cfg.refiner, refiner).map_err(|error| PipelineError::Refine {
        file_key: doc.file_key.clone(),
        error,
    })?;
    let result = segment_with(doc, &headings, cfg)?;
    Ok(LlmSegmentation {
        candidates,
        headings,
        result,
    })
}

pub fn evaluate(
    pred: &SegmentationResult,
    gt: &GroundTruthToc,
    doc: &BookDocument,
    cfg: &PipelineConfig,
) -> Result<EvalReport, PipelineError> {
    evaluate_file(pred, gt, doc, &cfg.segment()).map_err(|error| PipelineError::Eval {
        file_key: gt.file_key.clone(),
        error,
    })
}
