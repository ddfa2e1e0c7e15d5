//! Seeded synthetic books shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bookseg_core::matching::{match_heading, MatchConfig};
use bookseg_core::{BookDocument, FontSpec, Inline, OutlineEntry, Page, TextNode};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Body vocabulary. No digits and no overlap with [`HEADING_WORDS`].
pub const BODY_WORDS: &[&str] = &[
    "river", "stone", "amber", "field", "quiet", "morning", "garden", "letter", "window", "paper",
    "market", "harbor", "meadow", "candle", "silver", "winter", "summer", "orchard", "bridge",
    "lantern", "copper", "valley", "forest", "pebble", "shadow", "thunder", "willow", "basket",
    "cotton", "saddle", "the", "and", "of", "to", "in", "was", "with", "under", "near", "over",
    "every", "small", "large", "green", "bright", "slow", "warm", "cold", "early", "late", "road",
    "house", "table", "chair", "music", "water", "light", "cloud", "wind", "rain",
];

/// Heading vocabulary, chosen to share no four-letter run with body text.
pub const HEADING_WORDS: &[&str] = &[
    "Zephyr", "Quorum", "Vortex", "Jubilee", "Kinetic", "Xylem", "Obsidian", "Nimbus", "Quasar",
    "Zenith", "Vellum", "Juniper", "Kestrel", "Onyx", "Fjord", "Glyph", "Sphinx", "Quill",
    "Jackal", "Zodiac", "Pyramid", "Equinox", "Ibex", "Yukon", "Kazoo", "Jigsaw", "Vixen",
    "Quixote", "Hydra", "Zircon",
];

pub const BODY_FONT: &str = "0";

pub fn heading_font(level: u32) -> String {
    format!("h{level}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub level: u32,
    pub text: String,
    pub page: u32,
}

#[derive(Debug, Clone)]
pub struct SyntheticBook {
    pub doc: BookDocument,
    pub headings: Vec<Planted>,
}

#[derive(Debug, Clone)]
pub struct BookSpec {
    pub pages: u32,
    pub headings: usize,
    pub max_level: u32,
    pub body_lines: (usize, usize),
    /// Chance that a line is emitted as two nodes on the same baseline.
    pub split_prob: f64,
    /// Extra whitespace (pixels) above each heading line.
    pub heading_space: u32,
}

impl Default for BookSpec {
    fn default() -> Self {
        BookSpec {
            pages: 20,
            headings: 30,
            max_level: 4,
            body_lines: (8, 16),
            split_prob: 0.15,
            heading_space: 0,
        }
    }
}

pub fn body_sentence(rng: &mut TestRng, words: usize) -> String {
    let mut out: Vec<String> = (0..words)
        .map(|_| BODY_WORDS.choose(rng).unwrap().to_string())
        .collect();
    let first = &mut out[0];
    *first = first[..1].to_uppercase() + &first[1..];
    let mut s = out.join(" ");
    s.push('.');
    s
}

/// Levels for `n` headings: starts at 1, never jumps more than one level
/// deeper, and visits every level up to `max_level` early on.
pub fn heading_levels(rng: &mut TestRng, n: usize, max_level: u32) -> Vec<u32> {
    let mut levels = Vec::with_capacity(n);
    for i in 0..n {
        let level = if i < max_level as usize {
            i as u32 + 1
        } else {
            let prev = *levels.last().unwrap_or(&0u32);
            rng.random_range(1..=(prev + 1).min(max_level))
        };
        levels.push(level);
    }
    levels
}

/// Numbered titles like "2.1.3 Quorum Zenith Ibex", unique within a book.
pub fn heading_titles(rng: &mut TestRng, levels: &[u32]) -> Vec<String> {
    let mut counters = [0u32; 12];
    levels
        .iter()
        .map(|&level| {
            let l = level as usize;
            counters[l] += 1;
            for c in counters.iter_mut().skip(l + 1) {
                *c = 0;
            }
            let number = (1..=l).map(|i| counters[i].max(1).to_string()).collect::<Vec<_>>().join(".");
            let words: Vec<&str> = HEADING_WORDS.choose_multiple(rng, 3).copied().collect();
            format!("{number} {}", words.join(" "))
        })
        .collect()
}

pub fn nest_outline(flat: &[Planted]) -> Vec<OutlineEntry> {
    fn take(flat: &[Planted], i: &mut usize, level: u32) -> Vec<OutlineEntry> {
        let mut out = Vec::new();
        while *i < flat.len() && flat[*i].level >= level {
            let p = &flat[*i];
            *i += 1;
            let mut e = OutlineEntry::new(&p.text, p.page, p.level);
            e.children = take(flat, i, p.level + 1);
            out.push(e);
        }
        out
    }
    let mut i = 0;
    take(flat, &mut i, 1)
}

fn text_node(page: u32, top: u32, left: u32, font: &str, text: &str, bold: bool, height: u32) -> TextNode {
    let inner = vec![Inline::Text(text.to_string())];
    TextNode {
        page,
        top,
        left,
        width: (text.chars().count() as u32 * 7).max(1),
        height,
        font: font.to_string(),
        content: if bold { vec![Inline::Bold(inner)] } else { inner },
    }
}

/// Emits one line, possibly split into two nodes at a word boundary.
#[allow(clippy::too_many_arguments)]
fn push_line(
    rng: &mut TestRng,
    nodes: &mut Vec<TextNode>,
    split_prob: f64,
    page: u32,
    top: u32,
    font: &str,
    text: &str,
    bold: bool,
    height: u32,
) {
    let words: Vec<&str> = text.split(' ').collect();
    if words.len() >= 2 && rng.random_bool(split_prob) {
        let cut = rng.random_range(1..words.len());
        let left_text = words[..cut].join(" ");
        let right_text = words[cut..].join(" ");
        let right_left = 80 + left_text.chars().count() as u32 * 7 + 7;
        // the second fragment sits one pixel lower, as pdftohtml often reports
        nodes.push(text_node(page, top + 1, right_left, font, &right_text, bold, height));
        nodes.push(text_node(page, top, 80, font, &left_text, bold, height));
    } else {
        nodes.push(text_node(page, top, 80, font, text, bold, height));
    }
}

pub fn standard_fonts(max_level: u32) -> BTreeMap<String, FontSpec> {
    let mut fonts = BTreeMap::new();
    fonts.insert(
        BODY_FONT.to_string(),
        FontSpec { id: BODY_FONT.into(), size: 11, family: "Times".into(), color: "#000000".into() },
    );
    for level in 1..=max_level {
        let id = heading_font(level);
        fonts.insert(
            id.clone(),
            FontSpec { id, size: 22 - 2 * level, family: "Times".into(), color: "#000000".into() },
        );
    }
    fonts
}

/// A book whose outline lists every planted heading. Body lines never match
/// any heading, so every match the segmenter makes is the planted one.
pub fn synthetic_book(rng: &mut TestRng, key: &str, spec: &BookSpec) -> SyntheticBook {
    let levels = heading_levels(rng, spec.headings, spec.max_level);
    let titles = heading_titles(rng, &levels);
    let mut pages_of: Vec<u32> = (0..spec.headings).map(|_| rng.random_range(1..=spec.pages)).collect();
    pages_of.sort_unstable();
    let headings: Vec<Planted> = levels
        .iter()
        .zip(&titles)
        .zip(&pages_of)
        .map(|((&level, text), &page)| Planted { level, text: text.clone(), page })
        .collect();

    let cfg = MatchConfig::default();
    let mut doc = BookDocument::new(key);
    doc.fonts = standard_fonts(spec.max_level);
    for number in 1..=spec.pages {
        let on_page: Vec<&Planted> = headings.iter().filter(|h| h.page == number).collect();
        let body = rng.random_range(spec.body_lines.0..=spec.body_lines.1);
        let total = body + on_page.len();
        let mut slots: Vec<usize> = (0..total).collect();
        let mut heading_slots: Vec<usize> = Vec::new();
        for _ in 0..on_page.len() {
            let k = rng.random_range(0..slots.len());
            heading_slots.push(slots.swap_remove(k));
        }
        heading_slots.sort_unstable();
        let mut nodes = Vec::new();
        let mut next_heading = 0;
        let mut top = 16;
        for slot in 0..total {
            top += 24;
            if heading_slots.get(next_heading) == Some(&slot) {
                top += spec.heading_space;
                let h = on_page[next_heading];
                next_heading += 1;
                let font = heading_font(h.level);
                push_line(rng, &mut nodes, spec.split_prob, number, top, &font, &h.text, true, 20);
            } else {
                let line = loop {
                    let words = rng.random_range(4..=10);
                    let candidate = body_sentence(rng, words);
                    if headings.iter().all(|h| !match_heading(&candidate, &h.text, &cfg).matched()) {
                        break candidate;
                    }
                };
                push_line(rng, &mut nodes, spec.split_prob, number, top, BODY_FONT, &line, false, 14);
            }
        }
        doc.pages.push(Page { number, width: 700, height: top + 64, nodes });
    }
    doc.outline = Some(nest_outline(&headings));
    SyntheticBook { doc, headings }
}

/// Applies `edits` random letter substitutions, insertions or deletions to
/// the words of `text`, leaving the numbering prefix alone.
pub fn corrupt(rng: &mut TestRng, text: &str, edits: usize) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    let start = text.find(' ').map_or(0, |i| i + 1);
    for _ in 0..edits {
        let letters: Vec<usize> = (start..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
        let &at = letters.choose(rng).unwrap();
        let replacement = (b'a' + rng.random_range(0..26u8)) as char;
        match rng.random_range(0..3) {
            0 => chars[at] = replacement,
            1 => chars.insert(at, replacement),
            _ => {
                chars.remove(at);
            }
        }
    }
    chars.into_iter().collect()
}
