//! Outline-driven heading detection and the per-page heading index.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{flatten_outline, BookDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadingSource {
    Toc,
    Candidate,
    Llm,
    External,
}

/// A confirmed section title. Level 0 is reserved for the synthetic
/// segment that precedes the first heading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedHeading {
    pub level: u32,
    pub text: String,
    pub page: u32,
    pub source: HeadingSource,
}

impl DetectedHeading {
    pub fn new(level: u32, text: &str, page: u32, source: HeadingSource) -> Self {
        DetectedHeading {
            level,
            text: text.to_string(),
            page,
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TocError {
    #[error("no outline metadata")]
    NoOutline,
}

/// Flattens the document outline in pre-order. Pages are taken verbatim,
/// including out-of-range ones; the segmenter reports those as unmatched.
pub fn headings_from_outline(doc: &BookDocument) -> Result<Vec<DetectedHeading>, TocError> {
    let outline = doc.outline.as_deref().unwrap_or_default();
    if outline.is_empty() {
        return Err(TocError::NoOutline);
    }
    Ok(flatten_outline(outline)
        .into_iter()
        .map(|e| DetectedHeading::new(e.level, &e.title, e.page, HeadingSource::Toc))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedHeading {
    pub text: String,
    pub level: u32,
}

/// Expected headings per page, in source order within each page.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageHeadingIndex {
    pages: BTreeMap<u32, Vec<IndexedHeading>>,
}

impl PageHeadingIndex {
    pub fn get(&self, page: u32) -> &[IndexedHeading] {
        self.pages.get(&page).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pages.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[IndexedHeading])> {
        self.pages.iter().map(|(p, v)| (*p, v.as_slice()))
    }
}

pub fn build_page_index(headings: &[DetectedHeading]) -> PageHeadingIndex {
    let mut pages: BTreeMap<u32, Vec<IndexedHeading>> = BTreeMap::new();
    // BTreeMap buckets plus in-order pushes give a stable sort by page.
    for h in headings {
        pages.entry(h.page).or_default().push(IndexedHeading {
            text: h.text.clone(),
            level: h.level,
        });
    }
    PageHeadingIndex { pages }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OutlineEntry;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn outline_flattens_preorder() {
        let mut doc = BookDocument::new("k");
        let mut a = OutlineEntry::new("A", 1, 1);
        a.children.push(OutlineEntry::new("B", 3, 2));
        doc.outline = Some(vec![a]);
        let hs = headings_from_outline(&doc).unwrap();
        assert_eq!(
            hs,
            vec![
                DetectedHeading::new(1, "A", 1, HeadingSource::Toc),
                DetectedHeading::new(2, "B", 3, HeadingSource::Toc),
            ]
        );
    }

    #[test]
    fn missing_or_empty_outline_is_an_error() {
        let mut doc = BookDocument::new("k");
        assert_eq!(headings_from_outline(&doc), Err(TocError::NoOutline));
        doc.outline = Some(vec![]);
        let err = headings_from_outline(&doc).unwrap_err();
        assert_eq!(err.to_string(), "no outline metadata");
    }

    #[test]
    fn index_is_stable_within_page() {
        let hs = vec![
            DetectedHeading::new(1, "B", 2, HeadingSource::Toc),
            DetectedHeading::new(1, "A", 2, HeadingSource::Toc),
            DetectedHeading::new(1, "C", 1, HeadingSource::Toc),
        ];
        let idx = build_page_index(&hs);
        let texts = |p| idx.get(p).iter().map(|h| h.text.as_str()).collect::<Vec<_>>();
        assert_eq!(texts(1), vec!["C"]);
        assert_eq!(texts(2), vec!["B", "A"]);
        assert!(build_page_index(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn buckets_equal_per_page_filter(pages in proptest::collection::vec(1u32..15, 0..200)) {
            let hs: Vec<_> = pages.iter().enumerate()
                .map(|(i, &p)| DetectedHeading::new(1 + (i % 3) as u32, &alloc::format!("h{i}"), p, HeadingSource::Toc))
                .collect();
            let idx = build_page_index(&hs);
            for p in 0..16 {
                let expected: Vec<_> = hs.iter().filter(|h| h.page == p).map(|h| h.text.clone()).collect();
                let got: Vec<_> = idx.get(p).iter().map(|h| h.text.clone()).collect();
                prop_assert_eq!(got, expected);
            }
            // re-concatenating buckets reproduces the stable sort
            let mut sorted = hs.clone();
            sorted.sort_by_key(|h| h.page);
            let flat: Vec<_> = idx.iter().flat_map(|(_, b)| b.iter().map(|h| h.text.clone())).collect();
            prop_assert_eq!(flat, sorted.iter().map(|h| h.text.clone()).collect::<Vec<_>>());
        }
    }
}
