//! Reconstruction of the section hierarchy of book-length PDFs.
//!
//! The crate works on an in-memory [`BookDocument`] (pages of positioned
//! text nodes, a font table and optional outline metadata) and provides:
//!
//! - heading normalization and matching ([`matching`]),
//! - outline-driven headings ([`toc`]) and layout-driven candidates
//!   ([`candidates`]) with language-model refinement ([`refiner`]),
//! - boundary assignment ([`segmenter`]),
//! - scoring against ground truth ([`evaluator`]).
//!
//! Everything here is `no_std` with `alloc`; file formats, HTTP and the
//! command line live in the `bookseg` crate.

#![no_std]

extern crate alloc;

pub mod candidates;
pub mod evaluator;
pub mod matching;
pub mod model;
pub mod refiner;
pub mod segmenter;
pub mod toc;

pub use model::{
    combine_by_top, concat_with_formatting, raw_text, BookDocument, FontSpec, Inline, Line,
    OutlineEntry, Page, TextNode,
};
pub use segmenter::{segment_document, SegmentConfig, SegmentationResult};
pub use toc::{DetectedHeading, HeadingSource};
