//! In-memory book document: pages, positioned text nodes, font table and
//! outline metadata, plus the text views the segmenter works with.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Font id assigned to text nodes whose `font` attribute did not resolve.
pub const SENTINEL_FONT_ID: &str = "?";

/// Default vertical tolerance (px) for grouping nodes into one line.
pub const DEFAULT_LINE_TOLERANCE: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FontSpec {
    pub id: String,
    pub size: u32,
    pub family: String,
    pub color: String,
}

impl FontSpec {
    pub fn sentinel() -> Self {
        FontSpec {
            id: SENTINEL_FONT_ID.to_string(),
            size: 1,
            family: "unknown".to_string(),
            color: "#000000".to_string(),
        }
    }
}

/// Inline content of a `<text>` element. Bold and italic children are kept
/// as markers; any other inline element (links, etc.) is kept by tag name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inline {
    Text(String),
    #[serde(rename = "b")]
    Bold(Vec<Inline>),
    #[serde(rename = "i")]
    Italic(Vec<Inline>),
    Tag { name: String, children: Vec<Inline> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextNode {
    pub page: u32,
    pub top: u32,
    pub left: u32,
    pub width: u32,
    pub height: u32,
    pub font: String,
    pub content: Vec<Inline>,
}

impl TextNode {
    /// Builds a node from a markup string such as `"a<i>b</i>c"`.
    pub fn from_markup(page: u32, top: u32, left: u32, font: &str, markup: &str) -> Self {
        TextNode {
            page,
            top,
            left,
            width: 0,
            height: 0,
            font: font.to_string(),
            content: parse_markup(markup),
        }
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    /// True when every non-whitespace character sits inside a bold marker.
    pub fn is_bold(&self) -> bool {
        fn walk(items: &[Inline], bold: bool, seen: &mut bool) -> bool {
            items.iter().all(|item| match item {
                Inline::Text(t) => {
                    if t.chars().any(|c| !c.is_whitespace()) {
                        *seen = true;
                        bold
                    } else {
                        true
                    }
                }
                Inline::Bold(children) => walk(children, true, seen),
                Inline::Italic(children) | Inline::Tag { children, .. } => {
                    walk(children, bold, seen)
                }
            })
        }
        let mut seen = false;
        walk(&self.content, false, &mut seen) && seen
    }

    /// Renders the content back to a marker string, escaping character data.
    pub fn markup(&self) -> String {
        let mut out = String::new();
        render_markup(&self.content, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineEntry {
    pub title: String,
    pub page: u32,
    pub level: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<OutlineEntry>,
}

impl OutlineEntry {
    pub fn new(title: &str, page: u32, level: u32) -> Self {
        OutlineEntry {
            title: title.to_string(),
            page,
            level,
            children: Vec::new(),
        }
    }

    /// Number of entries in this subtree, including `self`.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(OutlineEntry::count).sum::<usize>()
    }
}

/// Pre-order flattening of an outline forest.
pub fn flatten_outline(forest: &[OutlineEntry]) -> Vec<&OutlineEntry> {
    let mut out = Vec::new();
    let mut stack: Vec<&OutlineEntry> = forest.iter().rev().collect();
    while let Some(entry) = stack.pop() {
        out.push(entry);
        stack.extend(entry.children.iter().rev());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub number: u32,
    pub width: u32,
    pub height: u32,
    pub nodes: Vec<TextNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookDocument {
    pub file_key: String,
    pub pages: Vec<Page>,
    pub fonts: BTreeMap<String, FontSpec>,
    #[serde(default)]
    pub outline: Option<Vec<OutlineEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocumentError {
    #[error("page numbers must strictly increase: page {current} follows page {previous}")]
    PageOrder { previous: u32, current: u32 },
    #[error("page number must be >= 1")]
    ZeroPage,
    #[error("text node on page {page} references unknown font {font:?}")]
    UnknownFont { page: u32, font: String },
    #[error("font {0:?} has size 0")]
    ZeroFontSize(String),
    #[error("text node page {node_page} does not match its page {page}")]
    NodePage { page: u32, node_page: u32 },
}

impl BookDocument {
    pub fn new(file_key: &str) -> Self {
        BookDocument {
            file_key: file_key.to_string(),
            pages: Vec::new(),
            fonts: BTreeMap::new(),
            outline: None,
        }
    }

    pub fn font(&self, id: &str) -> Option<&FontSpec> {
        self.fonts.get(id)
    }

    pub fn page(&self, number: u32) -> Option<&Page> {
        self.pages
            .binary_search_by_key(&number, |p| p.number)
            .ok()
            .map(|i| &self.pages[i])
    }

    pub fn node_count(&self) -> usize {
        self.pages.iter().map(|p| p.nodes.len()).sum()
    }

    /// Checks the structural invariants. Documents built by the XML reader
    /// always pass; documents loaded from JSON should be checked.
    pub fn validate(&self) -> Result<(), DocumentError> {
        for font in self.fonts.values() {
            if font.size == 0 {
                return Err(DocumentError::ZeroFontSize(font.id.clone()));
            }
        }
        let mut previous: Option<u32> = None;
        for page in &self.pages {
            if page.number == 0 {
                return Err(DocumentError::ZeroPage);
            }
            if let Some(prev) = previous {
                if page.number <= prev {
                    return Err(DocumentError::PageOrder {
                        previous: prev,
                        current: page.number,
                    });
                }
            }
            previous = Some(page.number);
            for node in &page.nodes {
                if node.page != page.number {
                    return Err(DocumentError::NodePage {
                        page: page.number,
                        node_page: node.page,
                    });
                }
                if !self.fonts.contains_key(&node.font) {
                    return Err(DocumentError::UnknownFont {
                        page: page.number,
                        font: node.font.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Reading-order lines of every page, concatenated in page order.
    pub fn lines(&self, tolerance: u32) -> Vec<Line> {
        self.pages
            .iter()
            .flat_map(|p| combine_by_top(&p.nodes, tolerance))
            .collect()
    }
}

/// Node content with inline markers removed. Character data is untouched.
pub fn raw_text(node: &TextNode) -> String {
    let mut out = String::new();
    let mut stack: Vec<core::slice::Iter<'_, Inline>> = Vec::new();
    stack.push(node.content.iter());
    while let Some(top) = stack.last_mut() {
        match top.next() {
            Some(Inline::Text(t)) => out.push_str(t),
            Some(Inline::Bold(c)) | Some(Inline::Italic(c)) => stack.push(c.iter()),
            Some(Inline::Tag { children, .. }) => stack.push(children.iter()),
            None => {
                stack.pop();
            }
        }
    }
    out
}

/// Full visible text of a node with whitespace runs collapsed and ends trimmed.
pub fn concat_with_formatting(node: &TextNode) -> String {
    squeeze_whitespace(&raw_text(node))
}

pub(crate) fn squeeze_whitespace(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// One reading-order line: fragments sharing a vertical position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Line {
    pub text: String,
    pub page: u32,
    pub top: u32,
    pub left: u32,
    pub width: u32,
    pub height: u32,
    /// Indices into the page's node list, left to right.
    pub nodes: Vec<usize>,
}

/// Groups the nodes of one page into reading-order lines.
///
/// Nodes are visited by ascending `top`; a node joins the current line when
/// its top lies within `tolerance` of the line's first node. Fragments are
/// ordered by `left` and joined with single spaces. Nodes without visible
/// text are dropped, and so are lines left empty.
pub fn combine_by_top(nodes: &[TextNode], tolerance: u32) -> Vec<Line> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by_key(|&i| (nodes[i].top, nodes[i].left, i));

    let texts: Vec<String> = nodes.iter().map(concat_with_formatting).collect();

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut anchor = 0u32;
    for i in order {
        if texts[i].is_empty() {
            continue;
        }
        let top = nodes[i].top;
        match groups.last_mut() {
            Some(group) if top - anchor <= tolerance => group.push(i),
            _ => {
                anchor = top;
                groups.push(alloc::vec![i]);
            }
        }
    }

    groups
        .into_iter()
        .map(|mut group| {
            group.sort_by_key(|&i| (nodes[i].left, i));
            let mut text = String::new();
            let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
            for &i in &group {
                if !text.is_empty() {
                    text.push(' ');
                }
                text.push_str(&texts[i]);
                let n = &nodes[i];
                x0 = x0.min(n.left);
                y0 = y0.min(n.top);
                x1 = x1.max(n.left.saturating_add(n.width));
                y1 = y1.max(n.top.saturating_add(n.height));
            }
            Line {
                text,
                page: nodes[group[0]].page,
                top: y0,
                left: x0,
                width: x1 - x0,
                height: y1 - y0,
                nodes: group,
            }
        })
        .collect()
}

/// Parses a marker string (`<b>`, `<i>`, other tags, XML entities) into
/// inline content. Unbalanced closing tags are ignored; unclosed tags are
/// closed at the end of input.
pub fn parse_markup(markup: &str) -> Vec<Inline> {
    struct Frame {
        name: String,
        children: Vec<Inline>,
    }
    fn close(frame: Frame) -> Inline {
        match frame.name.as_str() {
            "b" => Inline::Bold(frame.children),
            "i" => Inline::Italic(frame.children),
            _ => Inline::Tag {
                name: frame.name,
                children: frame.children,
            },
        }
    }
    fn push_text(children: &mut Vec<Inline>, text: &str) {
        if text.is_empty() {
            return;
        }
        if let Some(Inline::Text(prev)) = children.last_mut() {
            prev.push_str(text);
        } else {
            children.push(Inline::Text(text.to_string()));
        }
    }

    let mut stack = alloc::vec![Frame {
        name: String::new(),
        children: Vec::new(),
    }];
    let mut rest = markup;
    while !rest.is_empty() {
        let next_tag = rest.find('<');
        let (text, after) = match next_tag {
            Some(pos) => (&rest[..pos], &rest[pos..]),
            None => (rest, ""),
        };
        let decoded = unescape(text);
        push_text(&mut stack.last_mut().unwrap().children, &decoded);
        rest = after;
        if rest.is_empty() {
            break;
        }
        let Some(end) = rest.find('>') else {
            let decoded = unescape(rest);
            push_text(&mut stack.last_mut().unwrap().children, &decoded);
            break;
        };
        let tag = rest[1..end].trim();
        rest = &rest[end + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            let name = name.trim();
            if let Some(pos) = stack.iter().rposition(|f| f.name == name) {
                if pos > 0 {
                    while stack.len() > pos {
                        let frame = stack.pop().unwrap();
                        let inline = close(frame);
                        stack.last_mut().unwrap().children.push(inline);
                    }
                }
            }
        } else if let Some(name) = tag.strip_suffix('/') {
            let name = name.split_whitespace().next().unwrap_or("").to_string();
            let inline = close(Frame {
                name,
                children: Vec::new(),
            });
            stack.last_mut().unwrap().children.push(inline);
        } else {
            let name = tag.split_whitespace().next().unwrap_or("").to_string();
            stack.push(Frame {
                name,
                children: Vec::new(),
            });
        }
    }
    while stack.len() > 1 {
        let frame = stack.pop().unwrap();
        let inline = close(frame);
        stack.last_mut().unwrap().children.push(inline);
    }
    stack.pop().unwrap().children
}

fn render_markup(items: &[Inline], out: &mut String) {
    for item in items {
        match item {
            Inline::Text(t) => escape_into(t, out),
            Inline::Bold(c) => {
                out.push_str("<b>");
                render_markup(c, out);
                out.push_str("</b>");
            }
            Inline::Italic(c) => {
                out.push_str("<i>");
                render_markup(c, out);
                out.push_str("</i>");
            }
            Inline::Tag { name, children } => {
                out.push('<');
                out.push_str(name);
                out.push('>');
                render_markup(children, out);
                out.push_str("</");
                out.push_str(name);
                out.push('>');
            }
        }
    }
}

fn escape_into(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            _ => out.push(c),
        }
    }
}

/// Decodes the predefined XML entities and numeric character references.
/// Unknown entities are kept verbatim.
pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        rest = &rest[pos..];
        let decoded = rest.find(';').and_then(|end| {
            let name = &rest[1..end];
            let c = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                "nbsp" => Some('\u{a0}'),
                _ => {
                    if let Some(hex) = name.strip_prefix("#x").or_else(|| name.strip_prefix("#X")) {
                        u32::from_str_radix(hex, 16).ok().and_then(char::from_u32)
                    } else if let Some(dec) = name.strip_prefix('#') {
                        dec.parse::<u32>().ok().and_then(char::from_u32)
                    } else {
                        None
                    }
                }
            };
            c.map(|c| (c, end))
        });
        match decoded {
            Some((c, end)) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
