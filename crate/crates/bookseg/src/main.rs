use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use bookseg::backend::{HttpBackend, RecordingBackend, ReplayBackend, Transcript};
use bookseg::config::PipelineConfig;
use bookseg::io::{self, LoadError};
use bookseg::mock::MockRefiner;
use bookseg::ocr::parse_tsv;
use bookseg::pipeline::{self, PipelineError};
use bookseg_core::candidates::{HeadingCandidate, OcrLine};
use bookseg_core::evaluator::{aggregate_by_depth, EvalReport};
use bookseg_core::matching::Strategy;
use bookseg_core::refiner::{refine, BatchRefiner, ChatBackend, LlmRefiner};
use bookseg_core::{BookDocument, DetectedHeading};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

const EXIT_INPUT: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_PIPELINE: u8 = 4;
const EXIT_MISMATCH: u8 = 5;

/// Segment books converted with `pdftohtml -xml` into sections.
#[derive(Debug, Parser)]
#[command(name = "bookseg", version)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for multi-file commands (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(flatten)]
    matching: MatchArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct MatchArgs {
    /// Minimum partial ratio (0-100) for a fuzzy match.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=100))]
    fuzzy_threshold: Option<u8>,
    /// Fuzzy also accepts a shared heading word at least this long.
    #[arg(long, global = true)]
    min_word_len: Option<usize>,
    /// Comma-separated subset of exact,substring,fuzzy.
    #[arg(long, global = true, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Vertical distance within which nodes share a line.
    #[arg(long, global = true)]
    line_tolerance: Option<u32>,
}

#[derive(Debug, Args)]
struct CandidateArgs {
    /// Fonts below this share of characters are heading-font candidates.
    #[arg(long)]
    rare_max_share: Option<f64>,
    /// Nodes a font needs before it counts as a heading font.
    #[arg(long)]
    min_occurrences: Option<usize>,
    /// Merge stacked same-font nodes within this many line heights.
    #[arg(long)]
    merge_gap_factor: Option<f64>,
    /// Characters of following text kept per candidate.
    #[arg(long)]
    trailing_cap: Option<usize>,
    /// OCR line is isolated past this many median line heights of space.
    #[arg(long)]
    gap_factor: Option<f64>,
    /// Drop OCR candidates longer than this.
    #[arg(long)]
    max_words: Option<usize>,
    /// Drop OCR candidates below this mean confidence.
    #[arg(long)]
    min_conf: Option<f64>,
}

#[derive(Debug, Args)]
struct RefinerArgs {
    /// Use regex rules instead of a language model.
    #[arg(long, conflicts_with_all = ["replay", "record"])]
    mock: Option<PathBuf>,
    /// Answer prompts from a recorded transcript.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Save every prompt and reply to this transcript.
    #[arg(long, conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Chat-completions URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Candidates per request.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Deepest hierarchy level the model may assign.
    #[arg(long)]
    max_level: Option<u32>,
    /// Retries per batch on transport or schema errors.
    #[arg(long)]
    max_retries: Option<u32>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse pdftohtml XML into a document JSON.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Segment books at the entries of their embedded outline.
    TocSegment {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write heading candidates for a book.
    Candidates {
        input: PathBuf,
        /// Tesseract TSV for the same book.
        #[arg(long)]
        ocr: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        candidates: CandidateArgs,
    },
    /// Confirm candidates and assign levels.
    Refine {
        candidates: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        refiner: RefinerArgs,
    },
    /// Candidates, refinement and segmentation in one go.
    LlmSegment {
        input: PathBuf,
        /// Tesseract TSV for the same book.
        #[arg(long)]
        ocr: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        candidates: CandidateArgs,
        #[command(flatten)]
        refiner: RefinerArgs,
    },
    /// Segment a book at headings from a JSON file.
    Segment {
        input: PathBuf,
        #[arg(long)]
        headings: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score predicted segmentations against ground-truth tables of contents.
    Eval {
        /// Directory with `<key>.segments.json` files.
        #[arg(long)]
        pred: PathBuf,
        /// Directory with `<key>.json` ground-truth files.
        #[arg(long)]
        gt: PathBuf,
        /// Directory with the source documents (`<key>.xml` or `<key>.document.json`).
        #[arg(long)]
        docs: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Average an evaluation CSV by ground-truth depth.
    Report {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

trait ExitWith<T> {
    fn exit_with(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ExitWith<T> for Result<T, E> {
    fn exit_with(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure { code, error: e.into() })
    }
}

fn input_error(error: anyhow::Error) -> Failure {
    Failure { code: EXIT_INPUT, error }
}

fn pipeline_failure(e: PipelineError) -> Failure {
    Failure {
        code: EXIT_PIPELINE,
        error: e.into(),
    }
}

fn require_file(path: &Path) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(input_error(anyhow!("{} does not exist or is not a file", path.display())))
    }
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(input_error(anyhow!("{} does not exist or is not a directory", path.display())))
    }
}

fn load_document(path: &Path) -> Result<BookDocument, Failure> {
    match io::load_document(path) {
        Ok((doc, warnings)) => {
            if warnings > 0 {
                log::warn!("{}: {warnings} parse warnings", path.display());
            }
            Ok(doc)
        }
        Err(e @ LoadError::Parse { .. }) => Err(Failure {
            code: EXIT_PARSE,
            error: e.into(),
        }),
        Err(LoadError::Other(error)) => Err(input_error(error)),
    }
}

fn load_ocr(path: &Path) -> Result<Vec<OcrLine>, Failure> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .exit_with(EXIT_INPUT)?;
    let (lines, warnings) = parse_tsv(BufReader::new(file))
        .with_context(|| path.display().to_string())
        .exit_with(EXIT_PARSE)?;
    if !warnings.is_empty() {
        log::warn!("{}: {} malformed rows skipped", path.display(), warnings.len());
    }
    Ok(lines)
}

fn build_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let m = &cli.matching;
    if let Some(v) = m.fuzzy_threshold {
        cfg.matching.fuzzy_threshold = v;
    }
    if let Some(v) = m.min_word_len {
        cfg.matching.min_word_len = v;
    }
    if let Some(v) = &m.strategies {
        cfg.matching.strategies = v.clone();
    }
    if let Some(v) = m.line_tolerance {
        cfg.line_tolerance = v;
    }
    if let Some(v) = cli.jobs {
        cfg.jobs = v;
    }
    match &cli.command {
        Command::Candidates { candidates, .. } => apply_candidate_args(&mut cfg, candidates),
        Command::LlmSegment { candidates, refiner, .. } => {
            apply_candidate_args(&mut cfg, candidates);
            apply_refiner_args(&mut cfg, refiner);
        }
        Command::Refine { refiner, .. } => apply_refiner_args(&mut cfg, refiner),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_candidate_args(cfg: &mut PipelineConfig, a: &CandidateArgs) {
    let c = &mut cfg.candidates;
    if let Some(v) = a.rare_max_share {
        c.rare_max_share = v;
    }
    if let Some(v) = a.min_occurrences {
        c.min_occurrences = v;
    }
    if let Some(v) = a.merge_gap_factor {
        c.merge_gap_factor = v;
    }
    if let Some(v) = a.trailing_cap {
        c.trailing_cap = v;
    }
    if let Some(v) = a.gap_factor {
        c.gap_factor = v;
    }
    if let Some(v) = a.max_words {
        c.max_words = v;
    }
    if let Some(v) = a.min_conf {
        c.min_conf = v;
    }
}

fn apply_refiner_args(cfg: &mut PipelineConfig, a: &RefinerArgs) {
    let r = &mut cfg.refiner;
    if let Some(v) = &a.endpoint {
        r.endpoint_url = v.clone();
    }
    if let Some(v) = &a.model {
        r.model_name = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        r.api_key_env = v.clone();
    }
    if let Some(v) = a.batch_size {
        r.batch_size = v;
    }
    if let Some(v) = a.max_level {
        r.max_level = v;
    }
    if let Some(v) = a.max_retries {
        r.max_retries = v;
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .exit_with(EXIT_INPUT)
}

/// Runs `refine` with the refiner selected by the flags, saving a
/// transcript when asked to, even if refinement fails midway.
fn with_refiner<T>(
    args: &RefinerArgs,
    cfg: &PipelineConfig,
    run: impl FnOnce(&mut dyn BatchRefiner) -> Result<T, Failure>,
) -> Result<T, Failure> {
    if let Some(rules) = &args.mock {
        let mut mock = MockRefiner::load(rules)
            .with_context(|| rules.display().to_string())
            .exit_with(EXIT_INPUT)?;
        return run(&mut mock);
    }
    let mut backend: Box<dyn ChatBackend> = match &args.replay {
        Some(path) => {
            let transcript = Transcript::load(path)
                .with_context(|| format!("loading transcript {}", path.display()))
                .exit_with(EXIT_INPUT)?;
            Box::new(ReplayBackend::new(transcript).exit_with(EXIT_INPUT)?)
        }
        None => Box::new(HttpBackend::from_env(&cfg.refiner)),
    };
    match &args.record {
        Some(path) => {
            let mut recorder = RecordingBackend::new(&mut *backend, &cfg.refiner.model_name);
            let outcome = run(&mut LlmRefiner::new(&mut recorder));
            io::write_json(path, &recorder.transcript).exit_with(EXIT_PIPELINE)?;
            outcome
        }
        None => run(&mut LlmRefiner::new(&mut *backend)),
    }
}

fn refine_all(
    refiner: &mut dyn BatchRefiner,
    candidates: &[HeadingCandidate],
    cfg: &PipelineConfig,
) -> Result<Vec<DetectedHeading>, Failure> {
    refine(candidates, &cfg.refiner, refiner).exit_with(EXIT_PIPELINE)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = build_config(&cli).map_err(input_error)?;
    let jobs = cfg.jobs;
    match cli.command {
        Command::Ingest { input, output } => {
            require_file(&input)?;
            let doc = load_document(&input)?;
            let out = output.unwrap_or_else(|| PathBuf::from(format!("{}{}", doc.file_key, io::DOCUMENT_SUFFIX)));
            io::write_json(&out, &doc).exit_with(EXIT_PIPELINE)?;
            println!(
                "{}: {} pages, {} text nodes, {} fonts, outline: {}",
                doc.file_key,
                doc.pages.len(),
                doc.node_count(),
                doc.fonts.len(),
                doc.outline.as_ref().map_or(0, |o| o.iter().map(|e| e.count()).sum())
            );
        }
        Command::TocSegment { inputs, output } => {
            for input in &inputs {
                require_file(input)?;
            }
            let pool = thread_pool(jobs)?;
            let outcomes: Vec<Result<String, Failure>> = pool.install(|| {
                inputs
                    .par_iter()
                    .map(|input| {
                        let doc = load_document(input)?;
                        let result = pipeline::toc_segment(&doc, &cfg).map_err(pipeline_failure)?;
                        io::write_segmentation(&output, &result).exit_with(EXIT_PIPELINE)?;
                        Ok(format!(
                            "{}: {} segments, {} unmatched headings",
                            result.file_key,
                            result.segments.len(),
                            result.unmatched.len()
                        ))
                    })
                    .collect()
            });
            let total = outcomes.len();
            let mut failures = Vec::new();
            for outcome in outcomes {
                match outcome {
                    Ok(line) => println!("{line}"),
                    Err(f) => failures.push(f),
                }
            }
            summarize_failures(failures, total)?;
        }
        Command::Candidates { input, ocr, output, .. } => {
            require_file(&input)?;
            if let Some(ocr) = &ocr {
                require_file(ocr)?;
            }
            let doc = load_document(&input)?;
            let lines = ocr.as_deref().map(load_ocr).transpose()?;
            let candidates = pipeline::detect_candidates(&doc, lines.as_deref(), &cfg);
            let out = output.unwrap_or_else(|| PathBuf::from(format!("{}.candidates.json", doc.file_key)));
            io::write_json(&out, &candidates).exit_with(EXIT_PIPELINE)?;
            println!("{}: {} candidates", doc.file_key, candidates.len());
        }
        Command::Refine { candidates, output, refiner } => {
            require_file(&candidates)?;
            let cands: Vec<HeadingCandidate> = io::read_json(&candidates).exit_with(EXIT_INPUT)?;
            let headings = with_refiner(&refiner, &cfg, |r| refine_all(r, &cands, &cfg))?;
            io::write_json(&output, &headings).exit_with(EXIT_PIPELINE)?;
            println!("{} of {} candidates confirmed", headings.len(), cands.len());
        }
        Command::LlmSegment { input, ocr, output, refiner, .. } => {
            require_file(&input)?;
            if let Some(ocr) = &ocr {
                require_file(ocr)?;
            }
            let doc = load_document(&input)?;
            let lines = ocr.as_deref().map(load_ocr).transpose()?;
            let run = with_refiner(&refiner, &cfg, |r| {
                pipeline::llm_segment(&doc, lines.as_deref(), &cfg, r).map_err(pipeline_failure)
            })?;
            let key = &doc.file_key;
            io::write_json(&output.join(format!("{key}.candidates.json")), &run.candidates).exit_with(EXIT_PIPELINE)?;
            io::write_json(&output.join(format!("{key}.headings.json")), &run.headings).exit_with(EXIT_PIPELINE)?;
            io::write_segmentation(&output, &run.result).exit_with(EXIT_PIPELINE)?;
            println!(
                "{key}: {} candidates, {} headings, {} segments, {} unmatched",
                run.candidates.len(),
                run.headings.len(),
                run.result.segments.len(),
                run.result.unmatched.len()
            );
        }
        Command::Segment { input, headings, output } => {
            require_file(&input)?;
            require_file(&headings)?;
            let doc = load_document(&input)?;
            let list: Vec<DetectedHeading> = io::read_json(&headings).exit_with(EXIT_INPUT)?;
            let result = pipeline::segment_with(&doc, &list, &cfg).map_err(pipeline_failure)?;
            io::write_segmentation(&output, &result).exit_with(EXIT_PIPELINE)?;
            println!(
                "{}: {} segments, {} unmatched headings",
                result.file_key,
                result.segments.len(),
                result.unmatched.len()
            );
        }
        Command::Eval { pred, gt, docs, output } => {
            require_dir(&pred)?;
            require_dir(&gt)?;
            require_dir(&docs)?;
            eval(&pred, &gt, &docs, &output, &cfg)?;
        }
        Command::Report { input, output } => {
            require_file(&input)?;
            let reports = io::read_report_csv(&input).exit_with(EXIT_INPUT)?;
            let summary = aggregate_by_depth(&reports);
            match output {
                Some(path) => io::write_summary_csv(&path, &summary).exit_with(EXIT_PIPELINE)?,
                None => print!("{}", io::summary_csv_string(&summary).exit_with(EXIT_PIPELINE)?),
            }
        }
    }
    Ok(())
}

fn json_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn eval(pred: &Path, gt: &Path, docs: &Path, output: &Path, cfg: &PipelineConfig) -> Result<(), Failure> {
    let gt_files = json_files(gt).exit_with(EXIT_INPUT)?;
    let mut missing = Vec::new();
    let mut work = Vec::new();
    for path in &gt_files {
        let key = io::file_key_of(path);
        let pred_path = pred.join(format!("{key}{}", io::SEGMENTS_SUFFIX));
        if !pred_path.is_file() {
            missing.push(format!("{key}: no prediction at {}", pred_path.display()));
            continue;
        }
        let Some(doc_path) = io::find_document(docs, &key) else {
            missing.push(format!("{key}: no document in {}", docs.display()));
            continue;
        };
        work.push((path.clone(), pred_path, doc_path));
    }
    for path in json_files(pred).exit_with(EXIT_INPUT)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        if let Some(key) = name.strip_suffix(io::SEGMENTS_SUFFIX) {
            if !gt.join(format!("{key}.json")).is_file() {
                log::warn!("{key}: prediction has no ground truth; skipped");
            }
        }
    }

    let pool = thread_pool(cfg.jobs)?;
    let outcomes: Vec<Result<EvalReport, Failure>> = pool.install(|| {
        work.par_iter()
            .map(|(gt_path, pred_path, doc_path)| {
                let truth = io::read_ground_truth(gt_path).exit_with(EXIT_INPUT)?;
                let prediction = io::read_segmentation(pred_path).exit_with(EXIT_INPUT)?;
                let doc = load_document(doc_path)?;
                pipeline::evaluate(&prediction, &truth, &doc, cfg).exit_with(EXIT_MISMATCH)
            })
            .collect()
    });
    let total = outcomes.len();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => reports.push(r),
            Err(f) => failures.push(f),
        }
    }
    io::write_report_csv(output, &reports).exit_with(EXIT_PIPELINE)?;
    print!("{}", io::summary_csv_string(&aggregate_by_depth(&reports)).exit_with(EXIT_PIPELINE)?);
    if !missing.is_empty() {
        for m in &missing {
            eprintln!("missing: {m}");
        }
        return Err(Failure {
            code: EXIT_MISMATCH,
            error: anyhow!("{} ground-truth files could not be evaluated", missing.len()),
        });
    }
    summarize_failures(failures, total)
}

/// A single failure is returned as is; several are printed and reported
/// with the exit code of the first.
fn summarize_failures(mut failures: Vec<Failure>, total: usize) -> Result<(), Failure> {
    match failures.len() {
        0 => Ok(()),
        1 => Err(failures.remove(0)),
        n => {
            for f in &failures {
                eprintln!("error: {:#}", f.error);
            }
            Err(Failure {
                code: failures[0].code,
                error: anyhow!("{n} of {total} inputs failed"),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
