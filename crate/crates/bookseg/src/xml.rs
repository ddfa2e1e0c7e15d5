//! Streaming reader for `pdftohtml -xml` output.
//!
//! Pages are produced one at a time from any [`BufRead`]; the outline, if
//! present, is collected when the reader reaches it (pdftohtml writes it
//! after the last page).

use std::collections::BTreeMap;
use std::fmt::Write;
use std::io::BufRead;

use bookseg_core::model::{unescape, SENTINEL_FONT_ID};
use bookseg_core::{BookDocument, FontSpec, Inline, OutlineEntry, Page, TextNode};
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("unexpected end of input at byte {offset} inside <{element}>")]
    Truncated { offset: u64, element: String },
    #[error("invalid attribute {name}={value:?} on <{element}> at byte {offset}")]
    Attribute {
        offset: u64,
        element: String,
        name: String,
        value: String,
    },
}

impl ParseError {
    pub fn offset(&self) -> u64 {
        match self {
            ParseError::Xml { offset, .. }
            | ParseError::Truncated { offset, .. }
            | ParseError::Attribute { offset, .. } => *offset,
        }
    }
}

/// Non-fatal problems found while reading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub offset: u64,
    pub message: String,
}

#[derive(Debug)]
pub struct ParsedBook {
    pub document: BookDocument,
    pub warnings: Vec<ParseWarning>,
}

enum OutlineFrame {
    Container(Vec<OutlineEntry>),
    Item {
        title: String,
        page: u32,
        children: Vec<OutlineEntry>,
    },
}

struct InlineFrame {
    name: String,
    children: Vec<Inline>,
}

struct OpenText {
    node: TextNode,
    stack: Vec<InlineFrame>,
}

pub struct XmlBookReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    fonts: BTreeMap<String, FontSpec>,
    outline: Option<Vec<OutlineEntry>>,
    outline_stack: Vec<OutlineFrame>,
    warnings: Vec<ParseWarning>,
    open: Vec<String>,
    finished: bool,
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

fn close_inline(frame: InlineFrame) -> Inline {
    match frame.name.as_str() {
        "b" => Inline::Bold(frame.children),
        "i" => Inline::Italic(frame.children),
        _ => Inline::Tag {
            name: frame.name,
            children: frame.children,
        },
    }
}

fn assign_levels(entries: &mut [OutlineEntry], level: u32) {
    for e in entries {
        e.level = level;
        assign_levels(&mut e.children, level + 1);
    }
}

impl<R: BufRead> XmlBookReader<R> {
    pub fn new(source: R) -> Self {
        let mut reader = Reader::from_reader(source);
        reader.config_mut().check_end_names = true;
        XmlBookReader {
            reader,
            buf: Vec::new(),
            fonts: BTreeMap::new(),
            outline: None,
            outline_stack: Vec::new(),
            warnings: Vec::new(),
            open: Vec::new(),
            finished: false,
        }
    }

    fn offset(&self) -> u64 {
        self.reader.buffer_position()
    }

    fn warn(&mut self, message: String) {
        let offset = self.offset();
        log::warn!("byte {offset}: {message}");
        self.warnings.push(ParseWarning { offset, message });
    }

    fn attrs(&self, e: &BytesStart<'_>) -> Result<BTreeMap<String, String>, ParseError> {
        let element = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        let mut map = BTreeMap::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| ParseError::Xml {
                offset: self.offset(),
                message: format!("bad attribute on <{element}>: {err}"),
            })?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map(|v| v.into_owned())
                .unwrap_or_else(|_| String::from_utf8_lossy(&attr.value).into_owned());
            map.insert(key, value);
        }
        Ok(map)
    }

    fn number(
        &mut self,
        attrs: &BTreeMap<String, String>,
        element: &str,
        name: &str,
    ) -> Result<u32, ParseError> {
        let Some(raw) = attrs.get(name) else {
            return Ok(0);
        };
        let value: f64 = raw.trim().parse().map_err(|_| ParseError::Attribute {
            offset: self.offset(),
            element: element.to_string(),
            name: name.to_string(),
            value: raw.clone(),
        })?;
        if value < 0.0 {
            self.warn(format!("negative {name}={raw} on <{element}> clamped to 0"));
            return Ok(0);
        }
        Ok(value.round() as u32)
    }

    fn read_fontspec(&mut self, e: &BytesStart<'_>) -> Result<(), ParseError> {
        let attrs = self.attrs(e)?;
        let Some(id) = attrs.get("id").cloned() else {
            self.warn("fontspec without id ignored".into());
            return Ok(());
        };
        let mut size = self.number(&attrs, "fontspec", "size")?;
        if size == 0 {
            self.warn(format!("font {id} has size 0, using 1"));
            size = 1;
        }
        if self.fonts.contains_key(&id) {
            self.warn(format!("duplicate fontspec id {id}, keeping the first"));
            return Ok(());
        }
        let font = FontSpec {
            id: id.clone(),
            size,
            family: attrs.get("family").cloned().unwrap_or_default(),
            color: attrs.get("color").cloned().unwrap_or_default(),
        };
        self.fonts.insert(id, font);
        Ok(())
    }

    fn start_text(&mut self, e: &BytesStart<'_>, page: u32) -> Result<OpenText, ParseError> {
        let attrs = self.attrs(e)?;
        let node = TextNode {
            page,
            top: self.number(&attrs, "text", "top")?,
            left: self.number(&attrs, "text", "left")?,
            width: self.number(&attrs, "text", "width")?,
            height: self.number(&attrs, "text", "height")?,
            font: attrs.get("font").cloned().unwrap_or_default(),
            content: Vec::new(),
        };
        Ok(OpenText {
            node,
            stack: vec![InlineFrame {
                name: String::new(),
                children: Vec::new(),
            }],
        })
    }

    fn outline_text(&mut self, text: &str) {
        if let Some(OutlineFrame::Item { title, .. }) = self.outline_stack.last_mut() {
            title.push_str(text);
        }
    }

    fn start_outline(&mut self) {
        self.outline_stack.push(OutlineFrame::Container(Vec::new()));
    }

    fn end_outline(&mut self) {
        let Some(OutlineFrame::Container(entries)) = self.outline_stack.pop() else {
            return;
        };
        match self.outline_stack.last_mut() {
            None => {
                let mut forest = entries;
                assign_levels(&mut forest, 1);
                self.outline.get_or_insert_with(Vec::new).extend(forest);
            }
            Some(OutlineFrame::Item { children, .. }) => children.extend(entries),
            Some(OutlineFrame::Container(parent)) => match parent.last_mut() {
                Some(last) => last.children.extend(entries),
                None => parent.extend(entries),
            },
        }
    }

    fn start_item(&mut self, e: &BytesStart<'_>) -> Result<(), ParseError> {
        let attrs = self.attrs(e)?;
        let page = self.number(&attrs, "item", "page")?;
        if self.outline_stack.is_empty() {
            // bare <item> outside <outline>: treat as a root container
            self.outline_stack.push(OutlineFrame::Container(Vec::new()));
            self.open.push("#outline".into());
        }
        self.outline_stack.push(OutlineFrame::Item {
            title: String::new(),
            page,
            children: Vec::new(),
        });
        Ok(())
    }

    fn end_item(&mut self) {
        let Some(OutlineFrame::Item { title, page, children }) = self.outline_stack.pop() else {
            return;
        };
        let title = title.split_whitespace().collect::<Vec<_>>().join(" ");
        let entry = OutlineEntry {
            title,
            page,
            level: 0,
            children,
        };
        match self.outline_stack.last_mut() {
            Some(OutlineFrame::Container(v)) => v.push(entry),
            Some(OutlineFrame::Item { children, .. }) => children.push(entry),
            None => {}
        }
    }

    fn xml_error(&self, err: quick_xml::Error) -> ParseError {
        ParseError::Xml {
            offset: self.reader.error_position(),
            message: err.to_string(),
        }
    }

    fn resolve_ref(name: &str) -> String {
        unescape(&format!("&{name};"))
    }

    /// Reads up to and including the next `<page>` element.
    pub fn next_page(&mut self) -> Result<Option<Page>, ParseError> {
        if self.finished {
            return Ok(None);
        }
        let mut page: Option<Page> = None;
        let mut text: Option<OpenText> = None;
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(err) => return Err(self.xml_error(err)),
            };
            match event {
                Event::Start(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    self.open.push(name.clone());
                    if let Some(open) = text.as_mut() {
                        open.stack.push(InlineFrame {
                            name,
                            children: Vec::new(),
                        });
                        continue;
                    }
                    match name.as_str() {
                        "page" => {
                            let attrs = self.attrs(&e)?;
                            let number = self.number(&attrs, "page", "number")?;
                            page = Some(Page {
                                number,
                                width: self.number(&attrs, "page", "width")?,
                                height: self.number(&attrs, "page", "height")?,
                                nodes: Vec::new(),
                            });
                        }
                        "fontspec" => self.read_fontspec(&e)?,
                        "text" => {
                            let number = page.as_ref().map_or(0, |p| p.number);
                            text = Some(self.start_text(&e, number)?);
                        }
                        "outline" => self.start_outline(),
                        "item" => self.start_item(&e)?,
                        _ => {}
                    }
                }
                Event::Empty(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    if let Some(open) = text.as_mut() {
                        let frame = InlineFrame {
                            name,
                            children: Vec::new(),
                        };
                        open.stack.last_mut().unwrap().children.push(close_inline(frame));
                        continue;
                    }
                    match name.as_str() {
                        "fontspec" => self.read_fontspec(&e)?,
                        "text" => {
                            let number = page.as_ref().map_or(0, |p| p.number);
                            let open = self.start_text(&e, number)?;
                            if let Some(p) = page.as_mut() {
                                p.nodes.push(open.node);
                            }
                        }
                        "item" => {
                            self.start_item(&e)?;
                            self.end_item();
                        }
                        _ => {}
                    }
                }
                Event::End(e) => {
                    let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                    self.open.pop();
                    if let Some(open) = text.as_mut() {
                        if name == "text" {
                            let mut open = text.take().unwrap();
                            while open.stack.len() > 1 {
                                let frame = open.stack.pop().unwrap();
                                open.stack.last_mut().unwrap().children.push(close_inline(frame));
                            }
                            open.node.content = open.stack.pop().unwrap().children;
                            match page.as_mut() {
                                Some(p) => p.nodes.push(open.node),
                                None => self.warn("text element outside a page ignored".into()),
                            }
                        } else if open.stack.len() > 1 {
                            let frame = open.stack.pop().unwrap();
                            open.stack.last_mut().unwrap().children.push(close_inline(frame));
                        }
                        continue;
                    }
                    match name.as_str() {
                        "page" => {
                            if let Some(p) = page.take() {
                                return Ok(Some(self.finish_page(p)));
                            }
                        }
                        "item" => self.end_item(),
                        "outline" => self.end_outline(),
                        _ => {}
                    }
                    if self.open.last().map(String::as_str) == Some("#outline") && name == "item" {
                        self.open.pop();
                        self.end_outline();
                    }
                }
                Event::Text(t) => {
                    let decoded = t.decode().map_err(|e| ParseError::Xml {
                        offset: self.offset(),
                        message: e.to_string(),
                    })?;
                    if let Some(open) = text.as_mut() {
                        push_text(&mut open.stack.last_mut().unwrap().children, &decoded);
                    } else {
                        self.outline_text(&decoded);
                    }
                }
                Event::CData(t) => {
                    let decoded = String::from_utf8_lossy(&t).into_owned();
                    if let Some(open) = text.as_mut() {
                        push_text(&mut open.stack.last_mut().unwrap().children, &decoded);
                    } else {
                        self.outline_text(&decoded);
                    }
                }
                Event::GeneralRef(r) => {
                    let resolved = match r.resolve_char_ref() {
                        Ok(Some(c)) => c.to_string(),
                        _ => Self::resolve_ref(&String::from_utf8_lossy(&r)),
                    };
                    if let Some(open) = text.as_mut() {
                        push_text(&mut open.stack.last_mut().unwrap().children, &resolved);
                    } else {
                        self.outline_text(&resolved);
                    }
                }
                Event::Eof => {
                    self.finished = true;
                    if let Some(element) = self.open.last() {
                        return Err(ParseError::Truncated {
                            offset: self.offset(),
                            element: element.clone(),
                        });
                    }
                    if let Some(p) = page.take() {
                        return Ok(Some(self.finish_page(p)));
                    }
                    while !self.outline_stack.is_empty() {
                        self.end_item();
                        self.end_outline();
                    }
                    return Ok(None);
                }
                Event::Comment(_) | Event::Decl(_) | Event::PI(_) | Event::DocType(_) => {}
            }
        }
    }

    fn finish_page(&mut self, mut page: Page) -> Page {
        for i in 0..page.nodes.len() {
            if !self.fonts.contains_key(&page.nodes[i].font) {
                let msg = format!(
                    "text on page {} references unknown font {:?}",
                    page.number, page.nodes[i].font
                );
                self.warn(msg);
                page.nodes[i].font = SENTINEL_FONT_ID.to_string();
                self.fonts
                    .entry(SENTINEL_FONT_ID.to_string())
                    .or_insert_with(FontSpec::sentinel);
            }
        }
        page
    }

    pub fn fonts(&self) -> &BTreeMap<String, FontSpec> {
        &self.fonts
    }

    /// Drains the remaining input and assembles the whole document.
    pub fn into_document(mut self, file_key: &str) -> Result<ParsedBook, ParseError> {
        let mut pages: Vec<Page> = Vec::new();
        while let Some(page) = self.next_page()? {
            if let Some(prev) = pages.last() {
                if page.number <= prev.number {
                    self.warn(format!(
                        "page {} follows page {}; dropped",
                        page.number, prev.number
                    ));
                    continue;
                }
            }
            if page.number == 0 {
                self.warn("page without a number dropped".into());
                continue;
            }
            pages.push(page);
        }
        let document = BookDocument {
            file_key: file_key.to_string(),
            pages,
            fonts: self.fonts,
            outline: self.outline,
        };
        Ok(ParsedBook {
            document,
            warnings: self.warnings,
        })
    }
}

/// Parses a complete pdftohtml XML document.
pub fn parse_book<R: BufRead>(source: R, file_key: &str) -> Result<ParsedBook, ParseError> {
    XmlBookReader::new(source).into_document(file_key)
}

fn write_outline(out: &mut String, entries: &[OutlineEntry]) {
    out.push_str("<outline>\n");
    for e in entries {
        let _ = writeln!(out, "<item page=\"{}\">{}</item>", e.page, escape(e.title.as_str()));
        if !e.children.is_empty() {
            write_outline(out, &e.children);
        }
    }
    out.push_str("</outline>\n");
}

/// Renders a document in the `pdftohtml -xml` layout. Fonts are declared on
/// the first page; the outline uses sibling `<outline>` nesting.
pub fn write_pdf2xml(doc: &BookDocument) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<!DOCTYPE pdf2xml SYSTEM \"pdf2xml.dtd\">\n");
    out.push_str("<pdf2xml producer=\"bookseg\" version=\"1\">\n");
    for (i, page) in doc.pages.iter().enumerate() {
        let _ = writeln!(
            out,
            "<page number=\"{}\" position=\"absolute\" top=\"0\" left=\"0\" height=\"{}\" width=\"{}\">",
            page.number, page.height, page.width
        );
        if i == 0 {
            for f in doc.fonts.values().filter(|f| f.id != SENTINEL_FONT_ID) {
                let _ = writeln!(
                    out,
                    "\t<fontspec id=\"{}\" size=\"{}\" family=\"{}\" color=\"{}\"/>",
                    escape(f.id.as_str()),
                    f.size,
                    escape(f.family.as_str()),
                    escape(f.color.as_str())
                );
            }
        }
        for n in &page.nodes {
            let _ = writeln!(
                out,
                "<text top=\"{}\" left=\"{}\" width=\"{}\" height=\"{}\" font=\"{}\">{}</text>",
                n.top,
                n.left,
                n.width,
                n.height,
                escape(n.font.as_str()),
                n.markup()
            );
        }
        out.push_str("</page>\n");
    }
    if let Some(outline) = &doc.outline {
        write_outline(&mut out, outline);
    }
    out.push_str("</pdf2xml>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bookseg_core::raw_text;

    const SAMPLE: &str = r##"<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE pdf2xml SYSTEM "pdf2xml.dtd">
<pdf2xml producer="poppler" version="23.02.0">
<page number="1" position="absolute" top="0" left="0" height="1262" width="892">
	<fontspec id="0" size="18" family="Times" color="#000000"/>
	<fontspec id="1" size="11" family="Times" color="#000000"/>
<text top="100" left="80" width="200" height="22" font="0"><b>Chapter 1</b></text>
<text top="140" left="80" width="500" height="14" font="1">Some &amp; body <i>text</i></text>
</page>
</pdf2xml>
"##;

    #[test]
    fn parses_pages_fonts_and_inline_markers() {
        let parsed = parse_book(SAMPLE.as_bytes(), "sample").unwrap();
        let doc = parsed.document;
        assert!(parsed.warnings.is_empty());
        assert_eq!(doc.pages.len(), 1);
        assert_eq!(doc.pages[0].width, 892);
        assert_eq!(doc.pages[0].nodes.len(), 2);
        assert_eq!(doc.fonts["0"].size, 18);
        let first = &doc.pages[0].nodes[0];
        assert_eq!(first.content, vec![Inline::Bold(vec![Inline::Text("Chapter 1".into())])]);
        assert_eq!(raw_text(&doc.pages[0].nodes[1]), "Some & body text");
        assert_eq!(doc.outline, None);
        doc.validate().unwrap();
    }

    #[test]
    fn nested_items_give_levels() {
        let xml = r#"<pdf2xml><page number="1" width="10" height="10"></page>
<outline><item page="1">A<item page="2">B</item></item></outline></pdf2xml>"#;
        let doc = parse_book(xml.as_bytes(), "k").unwrap().document;
        let outline = doc.outline.unwrap();
        assert_eq!(outline.len(), 1);
        assert_eq!((outline[0].title.as_str(), outline[0].level), ("A", 1));
        assert_eq!((outline[0].children[0].title.as_str(), outline[0].children[0].level), ("B", 2));
    }

    #[test]
    fn sibling_outline_elements_nest_under_previous_item() {
        let xml = r#"<pdf2xml><page number="1" width="10" height="10"></page>
<outline>
<item page="1">Part One</item>
<outline>
<item page="2">Chapter 1</item>
<outline><item page="3">1.1 Scope</item></outline>
<item page="4">Chapter 2</item>
</outline>
<item page="5">Part Two</item>
</outline></pdf2xml>"#;
        let doc = parse_book(xml.as_bytes(), "k").unwrap().document;
        let outline = doc.outline.unwrap();
        let flat: Vec<_> = bookseg_core::model::flatten_outline(&outline)
            .iter()
            .map(|e| (e.level, e.title.clone(), e.page))
            .collect();
        assert_eq!(
            flat,
            vec![
                (1, "Part One".to_string(), 1),
                (2, "Chapter 1".to_string(), 2),
                (3, "1.1 Scope".to_string(), 3),
                (2, "Chapter 2".to_string(), 4),
                (1, "Part Two".to_string(), 5),
            ]
        );
    }

    #[test]
    fn unknown_font_is_a_warning() {
        let xml = r##"<pdf2xml><page number="1" width="10" height="10">
<fontspec id="0" size="10" family="T" color="#000"/>
<text top="1" left="1" width="1" height="1" font="7">x</text></page></pdf2xml>"##;
        let parsed = parse_book(xml.as_bytes(), "k").unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.document.pages[0].nodes[0].font, SENTINEL_FONT_ID);
        parsed.document.validate().unwrap();
    }

    #[test]
    fn truncated_input_reports_offset() {
        let cut = &SAMPLE[..SAMPLE.find("Some").unwrap()];
        let err = parse_book(cut.as_bytes(), "k").unwrap_err();
        assert!(matches!(err, ParseError::Truncated { .. }), "{err}");
        assert!(err.offset() > 0 && err.offset() <= cut.len() as u64);
    }

    #[test]
    fn mismatched_tags_are_errors() {
        let xml = "<pdf2xml><page number=\"1\"><text font=\"0\">a</page></pdf2xml>";
        let err = parse_book(xml.as_bytes(), "k").unwrap_err();
        assert!(matches!(err, ParseError::Xml { .. }), "{err}");
    }

    #[test]
    fn parsing_is_deterministic() {
        let a = parse_book(SAMPLE.as_bytes(), "s").unwrap().document;
        let b = parse_book(SAMPLE.as_bytes(), "s").unwrap().document;
        assert_eq!(a, b);
    }
}
