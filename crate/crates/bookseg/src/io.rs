//! Reading inputs and writing outputs. Every output file is written to a
//! temporary file in the destination directory and then renamed into place.

use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bookseg_core::evaluator::{DepthSummary, EvalReport, GroundTruthToc};
use bookseg_core::segmenter::{Segment, UnmatchedHeading};
use bookseg_core::{BookDocument, SegmentationResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::xml::{parse_book, ParseError};

pub const SEGMENTS_SUFFIX: &str = ".segments.json";
pub const UNMATCHED_SUFFIX: &str = ".unmatched.jsonl";
pub const DOCUMENT_SUFFIX: &str = ".document.json";

const KNOWN_SUFFIXES: [&str; 6] = [
    DOCUMENT_SUFFIX,
    SEGMENTS_SUFFIX,
    UNMATCHED_SUFFIX,
    ".headings.json",
    ".candidates.json",
    ".toc.json",
];

/// File key of an input path: the file name without its extension or any
/// of the suffixes this tool writes.
pub fn file_key_of(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    for suffix in KNOWN_SUFFIXES {
        if let Some(stem) = name.strip_suffix(suffix) {
            return stem.to_string();
        }
    }
    match name.rfind('.') {
        Some(dot) if dot > 0 => name[..dot].to_string(),
        _ => name,
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(&dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, &to_json(value)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut bytes = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut bytes, row)?;
        bytes.push(b'\n');
    }
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Failure to load a document, split so callers can tell malformed XML
/// apart from other input problems.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {error}")]
    Parse { path: PathBuf, error: ParseError },
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

/// Loads a book from pdftohtml XML or from a document JSON written by
/// `ingest`. Returns the number of parse warnings alongside it.
pub fn load_document(path: &Path) -> Result<(BookDocument, usize), LoadError> {
    let key = file_key_of(path);
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let doc: BookDocument = read_json(path)?;
        doc.validate()
            .map_err(|e| anyhow::anyhow!("{}: invalid document: {e}", path.display()))?;
        return Ok((doc, 0));
    }
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(LoadError::Other)?;
    let parsed = parse_book(BufReader::new(file), &key).map_err(|error| LoadError::Parse {
        path: path.to_path_buf(),
        error,
    })?;
    parsed
        .document
        .validate()
        .map_err(|e| anyhow::anyhow!("{}: invalid document: {e}", path.display()))?;
    Ok((parsed.document, parsed.warnings.len()))
}

/// Finds the document for `key` in `dir`, preferring XML over JSON.
pub fn find_document(dir: &Path, key: &str) -> Option<PathBuf> {
    [format!("{key}.xml"), format!("{key}{DOCUMENT_SUFFIX}"), format!("{key}.json")]
        .into_iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
}

pub fn write_segmentation(dir: &Path, result: &SegmentationResult) -> anyhow::Result<(PathBuf, PathBuf)> {
    let segments = dir.join(format!("{}{SEGMENTS_SUFFIX}", result.file_key));
    let unmatched = dir.join(format!("{}{UNMATCHED_SUFFIX}", result.file_key));
    write_json(&segments, &result.segments)?;
    write_jsonl(&unmatched, &result.unmatched)?;
    Ok((segments, unmatched))
}

/// Reads `<key>.segments.json` (and the unmatched log, if present) back
/// into a result.
pub fn read_segmentation(path: &Path) -> anyhow::Result<SegmentationResult> {
    let key = file_key_of(path);
    let segments: Vec<Segment> = read_json(path)?;
    let log = path.with_file_name(format!("{key}{UNMATCHED_SUFFIX}"));
    let unmatched: Vec<UnmatchedHeading> = if log.is_file() { read_jsonl(&log)? } else { Vec::new() };
    Ok(SegmentationResult {
        file_key: key,
        segments,
        unmatched,
    })
}

/// Ground truth: `{"file_key": ..., "entries": [...]}`; a bare entry list
/// takes its key from the file name.
pub fn read_ground_truth(path: &Path) -> anyhow::Result<GroundTruthToc> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Gt {
        Full(GroundTruthToc),
        Entries(Vec<bookseg_core::evaluator::GroundTruthEntry>),
    }
    let key = file_key_of(path);
    let gt = match read_json::<Gt>(path)? {
        Gt::Full(gt) => gt,
        Gt::Entries(entries) => GroundTruthToc { file_key: key.clone(), entries },
    };
    if gt.file_key != key {
        bail!("{}: file_key {:?} does not match the file name", path.display(), gt.file_key);
    }
    Ok(gt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub file_key: String,
    pub max_depth: u32,
    pub precision_ed: f64,
    pub recall_ed: f64,
    pub tree_edit_distance: usize,
    pub pk: f64,
    pub window_diff: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<&EvalReport> for ReportRow {
    fn from(r: &EvalReport) -> Self {
        ReportRow {
            file_key: r.file_key.clone(),
            max_depth: r.max_depth,
            precision_ed: r.precision_ed,
            recall_ed: r.recall_ed,
            tree_edit_distance: r.tree_edit_distance,
            pk: r.pk,
            window_diff: r.window_diff,
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
        }
    }
}

impl From<&ReportRow> for EvalReport {
    fn from(r: &ReportRow) -> Self {
        EvalReport {
            file_key: r.file_key.clone(),
            max_depth: r.max_depth,
            precision_ed: r.precision_ed,
            recall_ed: r.recall_ed,
            tree_edit_distance: r.tree_edit_distance,
            pk: r.pk,
            window_diff: r.window_diff,
            counts: bookseg_core::evaluator::Counts {
                tp: r.tp,
                fp: r.fp,
                fn_: r.fn_,
            },
        }
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner()?)
}

pub fn write_report_csv(path: &Path, reports: &[EvalReport]) -> anyhow::Result<()> {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    if rows.is_empty() {
        // csv writes no header for zero rows; keep the file self-describing
        let header = "file_key,max_depth,precision_ed,recall_ed,tree_edit_distance,pk,window_diff,tp,fp,fn\n";
        return write_atomic(path, header.as_bytes());
    }
    write_atomic(path, &csv_bytes(&rows)?)
}

pub fn read_report_csv(path: &Path) -> anyhow::Result<Vec<EvalReport>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: ReportRow = row.with_context(|| format!("parsing {}", path.display()))?;
        out.push(EvalReport::from(&row));
    }
    Ok(out)
}

pub fn write_summary_csv(path: &Path, summary: &[DepthSummary]) -> anyhow::Result<()> {
    write_atomic(path, &csv_bytes(summary)?)
}

pub fn summary_csv_string(summary: &[DepthSummary]) -> anyhow::Result<String> {
    Ok(String::from_utf8(csv_bytes(summary)?)?)
}
