//! Tesseract TSV output grouped into text lines.

use std::collections::HashMap;
use std::io::BufRead;

use bookseg_core::candidates::OcrLine;

const COLUMNS: [&str; 12] = [
    "level", "page_num", "block_num", "par_num", "line_num", "word_num", "left", "top", "width",
    "height", "conf", "text",
];

const WORD_LEVEL: u32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum TsvError {
    #[error("TSV header must be the 12 tesseract columns, found {found:?}")]
    Header { found: Vec<String> },
    #[error("reading TSV: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TsvWarning {
    pub line: usize,
    pub message: String,
}

struct Word {
    left: u32,
    top: u32,
    right: u32,
    bottom: u32,
    conf: Option<f64>,
    text: String,
}

fn parse_word(fields: &[&str]) -> Result<Option<(u32, [u32; 4], Word)>, String> {
    let int = |i: usize| -> Result<i64, String> {
        fields[i]
            .trim()
            .parse::<i64>()
            .map_err(|_| format!("column {} is not an integer: {:?}", COLUMNS[i], fields[i]))
    };
    let level = int(0)?;
    if level != WORD_LEVEL as i64 {
        return Ok(None);
    }
    let text = fields.get(11).copied().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let page = int(1)?.max(0) as u32;
    let key = [page, int(2)?.max(0) as u32, int(3)?.max(0) as u32, int(4)?.max(0) as u32];
    let left = int(6)?.max(0) as u32;
    let top = int(7)?.max(0) as u32;
    let width = int(8)?.max(0) as u32;
    let height = int(9)?.max(0) as u32;
    let conf: f64 = fields[10]
        .trim()
        .parse()
        .map_err(|_| format!("column conf is not a number: {:?}", fields[10]))?;
    let word = Word {
        left,
        top,
        right: left + width,
        bottom: top + height,
        conf: (conf >= 0.0).then_some(conf),
        text: text.to_string(),
    };
    Ok(Some((page, key, word)))
}

/// Reads word rows and groups them by (page, block, paragraph, line).
///
/// Lines come out ordered by page, then in the order tesseract emitted them;
/// `line_index` counts from 0 within each page. Line confidence is the mean
/// of the word confidences, ignoring the `-1` placeholders.
pub fn parse_tsv<R: BufRead>(source: R) -> Result<(Vec<OcrLine>, Vec<TsvWarning>), TsvError> {
    let mut rows = source.lines();
    let mut warnings = Vec::new();
    let header = match rows.next() {
        None => return Ok((Vec::new(), warnings)),
        Some(h) => h?,
    };
    let found: Vec<String> = header
        .trim_end_matches('\r')
        .split('\t')
        .map(|s| s.trim().to_string())
        .collect();
    if found.len() != COLUMNS.len() || found.iter().zip(COLUMNS).any(|(a, b)| a != b) {
        return Err(TsvError::Header { found });
    }

    let mut order: Vec<[u32; 4]> = Vec::new();
    let mut groups: HashMap<[u32; 4], Vec<Word>> = HashMap::new();
    for (i, row) in rows.enumerate() {
        let row = row?;
        let row = row.trim_end_matches('\r');
        if row.trim().is_empty() {
            continue;
        }
        let line_no = i + 2;
        let fields: Vec<&str> = row.split('\t').collect();
        // tesseract sometimes drops the trailing tab when the text is empty
        if fields.len() != 12 && fields.len() != 11 {
            let message = format!("expected 12 columns, found {}", fields.len());
            log::warn!("TSV line {line_no}: {message}");
            warnings.push(TsvWarning { line: line_no, message });
            continue;
        }
        match parse_word(&fields) {
            Ok(None) => {}
            Ok(Some((_, key, word))) => {
                groups
                    .entry(key)
                    .or_insert_with(|| {
                        order.push(key);
                        Vec::new()
                    })
                    .push(word);
            }
            Err(message) => {
                log::warn!("TSV line {line_no}: {message}");
                warnings.push(TsvWarning { line: line_no, message });
            }
        }
    }

    // stable: keeps emission order inside a page
    order.sort_by_key(|k| k[0]);
    let mut lines = Vec::with_capacity(order.len());
    let mut page = None;
    let mut index = 0;
    for key in order {
        if page != Some(key[0]) {
            page = Some(key[0]);
            index = 0;
        }
        let words = &groups[&key];
        let left = words.iter().map(|w| w.left).min().unwrap_or(0);
        let top = words.iter().map(|w| w.top).min().unwrap_or(0);
        let right = words.iter().map(|w| w.right).max().unwrap_or(0);
        let bottom = words.iter().map(|w| w.bottom).max().unwrap_or(0);
        let confs: Vec<f64> = words.iter().filter_map(|w| w.conf).collect();
        let conf = if confs.is_empty() {
            0.0
        } else {
            confs.iter().sum::<f64>() / confs.len() as f64
        };
        let text = words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ");
        lines.push(OcrLine {
            page: key[0],
            line_index: index,
            top,
            left,
            width: right - left,
            height: bottom - top,
            text,
            conf,
        });
        index += 1;
    }
    Ok((lines, warnings))
}
