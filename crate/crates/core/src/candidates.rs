//! Heading candidates from XML font statistics and OCR line spacing.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matching::{MatchConfig, PreparedHeading, Strategy};
use crate::model::{concat_with_formatting, BookDocument, TextNode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateConfig {
    /// Fonts with a usage share below this are heading-font candidates.
    pub rare_max_share: f64,
    /// A candidate font must be used by at least this many nodes.
    pub min_occurrences: usize,
    /// Stacked same-font nodes merge when the gap is within this many line heights.
    pub merge_gap_factor: f64,
    pub trailing_cap: usize,
    /// OCR line is isolated when a neighbouring gap exceeds this many median line heights.
    pub gap_factor: f64,
    pub max_words: usize,
    pub min_conf: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            rare_max_share: 0.10,
            min_occurrences: 3,
            merge_gap_factor: 1.5,
            trailing_cap: 300,
            gap_factor: 1.8,
            max_words: 12,
            min_conf: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Xml,
    Ocr,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateFeatures {
    pub font_id: Option<String>,
    pub font_size: Option<u32>,
    pub bold: Option<bool>,
    pub height: u32,
    pub width: u32,
    pub left: u32,
    pub top: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingCandidate {
    pub text: String,
    pub page: u32,
    pub features: CandidateFeatures,
    pub trailing_text: String,
    pub source: CandidateSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrLine {
    pub page: u32,
    pub line_index: u32,
    pub top: u32,
    pub left: u32,
    pub width: u32,
    pub height: u32,
    pub text: String,
    pub conf: f64,
}

impl OcrLine {
    fn bottom(&self) -> u32 {
        self.top + self.height
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CandidateError {
    #[error("document has no text")]
    EmptyDocument,
}

fn visible_chars(node: &TextNode) -> usize {
    concat_with_formatting(node)
        .chars()
        .filter(|c| !c.is_whitespace())
        .count()
}

/// Share of visible characters set in each font.
pub fn font_statistics(doc: &BookDocument) -> Result<BTreeMap<String, f64>, CandidateError> {
    let mut chars: BTreeMap<String, usize> = BTreeMap::new();
    for node in doc.pages.iter().flat_map(|p| &p.nodes) {
        *chars.entry(node.font.clone()).or_default() += visible_chars(node);
    }
    let total: usize = chars.values().sum();
    if total == 0 {
        return Err(CandidateError::EmptyDocument);
    }
    Ok(chars
        .into_iter()
        .map(|(font, n)| (font, n as f64 / total as f64))
        .collect())
}

/// Most used font; ties go to the smallest font id.
pub fn body_font(shares: &BTreeMap<String, f64>) -> Option<&str> {
    let mut best: Option<(&str, f64)> = None;
    for (font, &share) in shares {
        if best.is_none_or(|(_, s)| share > s) {
            best = Some((font, share));
        }
    }
    best.map(|(f, _)| f)
}

/// Whitespace-squeezed text without control characters, cut to `cap` chars.
pub fn clean_snippet(text: &str, cap: usize) -> String {
    let filtered: String = text
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    crate::model::squeeze_whitespace(&filtered)
        .chars()
        .take(cap)
        .collect()
}

fn page_reading_order(nodes: &[TextNode]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..nodes.len())
        .filter(|&i| visible_chars(&nodes[i]) > 0)
        .collect();
    order.sort_by_key(|&i| (nodes[i].top, nodes[i].left, i));
    order
}

/// Candidates from rarely used fonts.
///
/// Fonts other than the body font with a share below `rare_max_share` and
/// at least `min_occurrences` nodes qualify. Consecutive nodes (in reading
/// order) of the same candidate font merge into one candidate when the
/// vertical gap is at most `merge_gap_factor` line heights. Trailing text
/// is the body-font text up to the next candidate-font node on the page.
pub fn select_xml_candidates(doc: &BookDocument, cfg: &CandidateConfig) -> Vec<HeadingCandidate> {
    let Ok(shares) = font_statistics(doc) else {
        return Vec::new();
    };
    let body = body_font(&shares).unwrap_or_default().to_string();
    let mut occurrences: BTreeMap<&str, usize> = BTreeMap::new();
    for node in doc.pages.iter().flat_map(|p| &p.nodes) {
        if visible_chars(node) > 0 {
            *occurrences.entry(node.font.as_str()).or_default() += 1;
        }
    }
    let is_candidate_font = |font: &str| {
        font != body
            && shares.get(font).is_some_and(|&s| s < cfg.rare_max_share)
            && occurrences.get(font).copied().unwrap_or(0) >= cfg.min_occurrences
    };

    let mut out = Vec::new();
    for page in &doc.pages {
        let order = page_reading_order(&page.nodes);
        let mut pos = 0;
        while pos < order.len() {
            let first = &page.nodes[order[pos]];
            if !is_candidate_font(&first.font) {
                pos += 1;
                continue;
            }
            let mut group = alloc::vec![order[pos]];
            let mut end = pos + 1;
            while end < order.len() {
                let prev = &page.nodes[*group.last().unwrap()];
                let next = &page.nodes[order[end]];
                let gap = next.top as f64 - (prev.top + prev.height) as f64;
                let line_height = prev.height.max(1) as f64;
                if next.font != first.font || gap > cfg.merge_gap_factor * line_height {
                    break;
                }
                group.push(order[end]);
                end += 1;
            }
            let trailing: String = order[end..]
                .iter()
                .map(|&i| &page.nodes[i])
                .take_while(|n| !is_candidate_font(&n.font))
                .filter(|n| n.font == body)
                .map(concat_with_formatting)
                .collect::<Vec<_>>()
                .join(" ");
            out.push(xml_candidate(doc, page.number, &group, &page.nodes, clean_snippet(&trailing, cfg.trailing_cap)));
            pos = end;
        }
    }
    out
}

fn xml_candidate(
    doc: &BookDocument,
    page: u32,
    group: &[usize],
    nodes: &[TextNode],
    trailing_text: String,
) -> HeadingCandidate {
    let first = &nodes[group[0]];
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for &i in group {
        let n = &nodes[i];
        x0 = x0.min(n.left);
        y0 = y0.min(n.top);
        x1 = x1.max(n.left + n.width);
        y1 = y1.max(n.top + n.height);
    }
    let text = group
        .iter()
        .map(|&i| concat_with_formatting(&nodes[i]))
        .collect::<Vec<_>>()
        .join(" ");
    HeadingCandidate {
        text,
        page,
        features: CandidateFeatures {
            font_id: Some(first.font.clone()),
            font_size: doc.font(&first.font).map(|f| f.size),
            bold: Some(group.iter().all(|&i| nodes[i].is_bold())),
            height: y1 - y0,
            width: x1 - x0,
            left: x0,
            top: y0,
        },
        trailing_text,
        source: CandidateSource::Xml,
    }
}

/// Every non-empty XML node as a candidate, in (page, top) order.
/// Used as the enrichment pool when fusing OCR candidates.
pub fn xml_node_pool(doc: &BookDocument) -> Vec<HeadingCandidate> {
    doc.pages
        .iter()
        .flat_map(|page| {
            page_reading_order(&page.nodes)
                .into_iter()
                .map(move |i| xml_candidate(doc, page.number, &[i], &page.nodes, String::new()))
        })
        .collect()
}

fn median_height(lines: &[&OcrLine]) -> f64 {
    let mut hs: Vec<u32> = lines.iter().map(|l| l.height).collect();
    hs.sort_unstable();
    let n = hs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        hs[n / 2] as f64
    } else {
        (hs[n / 2 - 1] + hs[n / 2]) as f64 / 2.0
    }
}

fn sorted_by_page(lines: &[OcrLine]) -> Vec<Vec<&OcrLine>> {
    let mut pages: BTreeMap<u32, Vec<&OcrLine>> = BTreeMap::new();
    for l in lines {
        pages.entry(l.page).or_default().push(l);
    }
    pages
        .into_values()
        .map(|mut v| {
            v.sort_by_key(|l| (l.top, l.left, l.line_index));
            v
        })
        .collect()
}

/// Per page, in (top, left) order: whether each line has a gap larger
/// than `gap_factor` median line heights above or below it. Page edges
/// count as gaps.
pub fn isolated_lines<'a>(lines: &'a [OcrLine], cfg: &CandidateConfig) -> Vec<(&'a OcrLine, bool)> {
    let mut out = Vec::new();
    for page in sorted_by_page(lines) {
        let limit = cfg.gap_factor * median_height(&page);
        let flags = page_isolation(&page, limit);
        out.extend(page.into_iter().zip(flags));
    }
    out
}

fn page_isolation(page: &[&OcrLine], limit: f64) -> Vec<bool> {
    (0..page.len())
        .map(|i| {
            let above = i == 0 || gap(page[i - 1], page[i]) > limit;
            let below = i + 1 == page.len() || gap(page[i], page[i + 1]) > limit;
            above || below
        })
        .collect()
}

fn gap(upper: &OcrLine, lower: &OcrLine) -> f64 {
    lower.top as f64 - upper.bottom() as f64
}

/// Whether an assembled OCR candidate survives the rule filters.
pub fn passes_ocr_filters(text: &str, conf: f64, cfg: &CandidateConfig) -> bool {
    let trimmed = text.trim();
    let words = trimmed.split_whitespace().count();
    let all_digits = trimmed
        .chars()
        .filter(|c| !c.is_whitespace())
        .all(|c| c.is_ascii_digit());
    !trimmed.is_empty()
        && words <= cfg.max_words
        && !trimmed.ends_with(',')
        && !trimmed.ends_with(':')
        && !all_digits
        && conf >= cfg.min_conf
}

/// Spatially isolated OCR lines as heading candidates.
///
/// Consecutive isolated lines that sit close together (gap within the
/// isolation limit) form one multi-line candidate. Candidates that are too
/// long, end in a comma or colon, are pure digits, or have low confidence
/// are dropped.
pub fn select_ocr_candidates(lines: &[OcrLine], cfg: &CandidateConfig) -> Vec<HeadingCandidate> {
    let mut out = Vec::new();
    for page in sorted_by_page(lines) {
        let limit = cfg.gap_factor * median_height(&page);
        let isolated = page_isolation(&page, limit);
        let mut i = 0;
        while i < page.len() {
            if !isolated[i] {
                i += 1;
                continue;
            }
            let mut j = i + 1;
            while j < page.len() && isolated[j] && gap(page[j - 1], page[j]) <= limit {
                j += 1;
            }
            let run = &page[i..j];
            let text = run.iter().map(|l| l.text.trim()).collect::<Vec<_>>().join(" ");
            let conf = run.iter().map(|l| l.conf).sum::<f64>() / run.len() as f64;
            if passes_ocr_filters(&text, conf, cfg) {
                let trailing = page[j..].iter().map(|l| l.text.as_str()).collect::<Vec<_>>().join(" ");
                let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
                for l in run {
                    x0 = x0.min(l.left);
                    y0 = y0.min(l.top);
                    x1 = x1.max(l.left + l.width);
                    y1 = y1.max(l.bottom());
                }
                out.push(HeadingCandidate {
                    text: clean_snippet(&text, usize::MAX),
                    page: run[0].page,
                    features: CandidateFeatures {
                        height: y1 - y0,
                        width: x1 - x0,
                        left: x0,
                        top: y0,
                        ..CandidateFeatures::default()
                    },
                    trailing_text: clean_snippet(&trailing, cfg.trailing_cap),
                    source: CandidateSource::Ocr,
                });
            }
            i = j;
        }
    }
    out
}

fn strategy_rank(s: Strategy) -> u8 {
    match s {
        Strategy::Exact => 0,
        Strategy::Substring => 1,
        Strategy::Fuzzy => 2,
    }
}

fn mutual_match(a: &HeadingCandidate, b: &HeadingCandidate, cfg: &MatchConfig) -> bool {
    a.page == b.page
        && PreparedHeading::new(&a.text, cfg).matches(&b.text, cfg).matched()
        && PreparedHeading::new(&b.text, cfg).matches(&a.text, cfg).matched()
}

/// Combines OCR and XML candidates.
///
/// OCR candidates are primary: each takes the font features of the best
/// matching XML candidate on its page (strongest strategy, earliest on
/// ties). Without OCR candidates the XML list is used as is. Candidates
/// that mutually match an earlier one on the same page are dropped.
pub fn fuse_candidates(
    xml: &[HeadingCandidate],
    ocr: &[HeadingCandidate],
    cfg: &MatchConfig,
) -> Vec<HeadingCandidate> {
    let primary: Vec<HeadingCandidate> = if ocr.is_empty() {
        xml.to_vec()
    } else {
        ocr.iter()
            .map(|o| {
                let heading = PreparedHeading::new(&o.text, cfg);
                let best = xml
                    .iter()
                    .filter(|x| x.page == o.page)
                    .filter_map(|x| heading.matches(&x.text, cfg).strategy.map(|s| (strategy_rank(s), x)))
                    .min_by_key(|(rank, _)| *rank);
                let mut fused = o.clone();
                if let Some((_, x)) = best {
                    fused.features.font_id = x.features.font_id.clone();
                    fused.features.font_size = x.features.font_size;
                    fused.features.bold = x.features.bold;
                }
                fused
            })
            .collect()
    };

    let mut out: Vec<HeadingCandidate> = Vec::with_capacity(primary.len());
    for c in primary {
        if !out.iter().any(|kept| mutual_match(kept, &c, cfg)) {
            out.push(c);
        }
    }
    out.sort_by_key(|c| (c.page, c.features.top));
    out
}
