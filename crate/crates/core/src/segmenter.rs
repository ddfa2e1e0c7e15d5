//! Section boundary assignment: scan the book page by page and open a new
//! section wherever an expected heading is found.
//!
//! Each page keeps a single forward cursor over its reading-order lines.
//! For every expected heading the remaining nodes are searched first (raw
//! and formatted node text); if no node matches, whole lines are tried so
//! headings split across nodes are still found. The line holding the match
//! becomes the new section's title line and everything before it goes to
//! the section that was open. Every line of the document therefore lands in
//! exactly one segment.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matching::{MatchConfig, PreparedHeading};
use crate::model::{
    combine_by_top, concat_with_formatting, raw_text, BookDocument, Line, DEFAULT_LINE_TOLERANCE,
};
use crate::toc::{build_page_index, DetectedHeading};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub line_tolerance: u32,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            matching: MatchConfig::default(),
            line_tolerance: DEFAULT_LINE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub level: u32,
    pub heading: String,
    /// The line the heading was found on; `None` for the leading segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_line: Option<String>,
    pub start_page: u32,
    pub end_page: u32,
    pub content: Vec<String>,
}

impl Segment {
    fn open(level: u32, heading: &str, title_line: Option<String>, page: u32) -> Self {
        Segment {
            level,
            heading: heading.to_string(),
            title_line,
            start_page: page,
            end_page: page,
            content: Vec::new(),
        }
    }

    /// Number of document lines owned by this segment.
    pub fn line_count(&self) -> usize {
        usize::from(self.title_line.is_some()) + self.content.len()
    }

    /// Title line followed by content, in document order.
    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.title_line
            .iter()
            .map(String::as_str)
            .chain(self.content.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmatchedHeading {
    pub heading: String,
    pub page: u32,
    pub file_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub file_key: String,
    pub segments: Vec<Segment>,
    pub unmatched: Vec<UnmatchedHeading>,
}

impl SegmentationResult {
    /// Headings of the emitted segments, skipping the leading level-0 one.
    pub fn headings(&self) -> Vec<DetectedHeading> {
        self.segments
            .iter()
            .filter(|s| s.level > 0)
            .map(|s| DetectedHeading {
                level: s.level,
                text: s.heading.clone(),
                page: s.start_page,
                source: crate::toc::HeadingSource::External,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("heading #{index} on page {page} has empty text")]
    EmptyHeading { index: usize, page: u32 },
    #[error("heading {text:?} has level 0, which is reserved for the leading segment")]
    ZeroLevel { text: String },
}

fn find_in_nodes(
    doc_nodes: &[crate::model::TextNode],
    lines: &[Line],
    heading: &PreparedHeading,
    cfg: &MatchConfig,
) -> Option<usize> {
    lines.iter().position(|line| {
        line.nodes.iter().any(|&i| {
            let node = &doc_nodes[i];
            heading.matches(&raw_text(node), cfg).matched()
                || heading.matches(&concat_with_formatting(node), cfg).matched()
        })
    })
}

/// Splits the document into segments at the given headings.
pub fn segment_document(
    doc: &BookDocument,
    headings: &[DetectedHeading],
    cfg: &SegmentConfig,
) -> Result<SegmentationResult, SegmentError> {
    for (index, h) in headings.iter().enumerate() {
        if h.text.trim().is_empty() {
            return Err(SegmentError::EmptyHeading { index, page: h.page });
        }
        if h.level == 0 {
            return Err(SegmentError::ZeroLevel { text: h.text.clone() });
        }
    }

    let index = build_page_index(headings);
    let mut unmatched = Vec::new();
    let unmatched_entry = |heading: &str, page: u32| UnmatchedHeading {
        heading: heading.to_string(),
        page,
        file_key: doc.file_key.clone(),
    };

    for (page, expected) in index.iter() {
        if doc.page(page).is_none() {
            unmatched.extend(expected.iter().map(|h| unmatched_entry(&h.text, page)));
        }
    }

    let first_page = doc.pages.first().map_or(1, |p| p.number);
    let mut current = Segment::open(0, "", None, first_page);
    let mut segments = Vec::new();

    for page in &doc.pages {
        let lines = combine_by_top(&page.nodes, cfg.line_tolerance);
        let mut cursor = 0usize;
        for expected in index.get(page.number) {
            let prepared = PreparedHeading::new(&expected.text, &cfg.matching);
            let rest = &lines[cursor..];
            let found = find_in_nodes(&page.nodes, rest, &prepared, &cfg.matching).or_else(|| {
                rest.iter()
                    .position(|l| prepared.matches(&l.text, &cfg.matching).matched())
            });
            let Some(offset) = found else {
                unmatched.push(unmatched_entry(&expected.text, page.number));
                continue;
            };
            let at = cursor + offset;
            if at > cursor {
                current.content.extend(lines[cursor..at].iter().map(|l| l.text.clone()));
                current.end_page = page.number;
            }
            let title = lines[at].text.clone();
            let next = Segment::open(expected.level, &expected.text, Some(title), page.number);
            segments.push(core::mem::replace(&mut current, next));
            cursor = at + 1;
        }
        if cursor < lines.len() {
            current.content.extend(lines[cursor..].iter().map(|l| l.text.clone()));
            current.end_page = page.number;
        }
    }
    segments.push(current);

    Ok(SegmentationResult {
        file_key: doc.file_key.clone(),
        segments: merge_consecutive_duplicates(segments),
        unmatched,
    })
}

/// Merges adjacent segments that share heading and level. A merged
/// segment keeps the first title line; later title lines become content.
pub fn merge_consecutive_duplicates(segments: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for seg in segments {
        match out.last_mut() {
            Some(prev) if prev.heading == seg.heading && prev.level == seg.level => {
                prev.content.extend(seg.title_line);
                prev.content.extend(seg.content);
                prev.start_page = prev.start_page.min(seg.start_page);
                prev.end_page = prev.end_page.max(seg.end_page);
            }
            _ => out.push(seg),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionNode {
    pub level: u32,
    pub heading: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Ordered section hierarchy rooted at a synthetic level-0 node (index 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTree {
    pub nodes: Vec<SectionNode>,
}

impl Default for SectionTree {
    fn default() -> Self {
        SectionTree {
            nodes: alloc::vec![SectionNode {
                level: 0,
                heading: String::new(),
                parent: None,
                children: Vec::new(),
            }],
        }
    }
}

impl SectionTree {
    pub const ROOT: usize = 0;

    pub fn add_child(&mut self, parent: usize, level: u32, heading: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(SectionNode {
            level,
            heading: heading.to_string(),
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    /// Builds a tree from `(level, heading)` pairs in document order. Each
    /// entry hangs under the most recent entry with a strictly smaller
    /// level; entries of level 0 are folded into the root.
    pub fn from_levels<'a, I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (u32, &'a str)>,
    {
        let mut tree = SectionTree::default();
        let mut stack: Vec<usize> = alloc::vec![Self::ROOT];
        for (level, heading) in entries {
            if level == 0 {
                continue;
            }
            while tree.nodes[*stack.last().unwrap()].level >= level {
                stack.pop();
            }
            let id = tree.add_child(*stack.last().unwrap(), level, heading);
            stack.push(id);
        }
        tree
    }

    /// Number of nodes excluding the root.
    pub fn len(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn build_section_tree(segments: &[Segment]) -> SectionTree {
    SectionTree::from_levels(segments.iter().map(|s| (s.level, s.heading.as_str())))
}
