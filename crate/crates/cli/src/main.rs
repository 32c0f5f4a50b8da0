mod args;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use qbe_hough::audio::{load_wav, standardize};
use qbe_hough::detector::{self, DetectConfig, DetectionResult, DtwSummary, StageTimings};
use qbe_hough::distmat::{write_pgm, Metric};
use qbe_hough::eval::{self, Scored, TwvConfig};
use qbe_hough::features::{extract_mfcc, read_feature_file, write_feature_file, FeatureMatrix};
use qbe_hough::{par, Error};
use serde::Serialize;

use args::{Cli, Command, DetectArgs, FeatureMode};

/// Either a usage/input problem (exit 2) or a data-contract violation (exit 3).
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_data_contract() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qbe-hough: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Extract { input, output } => cmd_extract(&input, &output),
        Command::Search {
            query,
            reference,
            detect,
            emit_image,
            emit_edges,
        } => with_pool(&detect, || cmd_search(&query, &reference, &detect, emit_image, emit_edges)),
        Command::Scan { query, refs, detect } => with_pool(&detect, || cmd_scan(&query, &refs, &detect)),
        Command::Eval {
            manifest,
            detect,
            curve,
            dtw,
        } => with_pool(&detect, || cmd_eval(&manifest, &detect, curve.as_deref(), dtw)),
        Command::BaselineDtw {
            query,
            reference,
            detect,
        } => with_pool(&detect, || cmd_baseline_dtw(&query, &reference, &detect)),
    }
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(args: &DetectArgs, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(args.jobs as usize).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T: Send>(_args: &DetectArgs, f: impl FnOnce() -> T + Send) -> T {
    f()
}

fn cmd_extract(input: &Path, output: &Path) -> CliResult<()> {
    check_output_dir(output)?;
    let fm = load_wav_features(input)?;
    write_feature_file(&fm, output)?;
    Ok(())
}

fn check_output_dir(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Failure::usage(format!("output directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn load_wav_features(path: &Path) -> qbe_hough::Result<FeatureMatrix> {
    extract_mfcc(&standardize(&load_wav(path)?)?)
}

fn load_features(path: &Path, mode: FeatureMode) -> qbe_hough::Result<FeatureMatrix> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match (mode, ext.as_deref()) {
        (FeatureMode::Mfcc, _) | (FeatureMode::Auto, Some("wav")) => load_wav_features(path),
        (FeatureMode::Qbf, _) | (FeatureMode::Auto, Some("qbf")) => read_feature_file(path),
        (FeatureMode::Auto, _) => Err(Error::InvalidFeatures(format!(
            "{}: expected a .wav or .qbf file (use --features to force one)",
            path.display()
        ))),
    }
}

fn accepts(path: &Path, mode: FeatureMode) -> bool {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match mode {
        FeatureMode::Auto => matches!(ext.as_deref(), Some("wav" | "qbf")),
        FeatureMode::Mfcc => ext.as_deref() == Some("wav"),
        FeatureMode::Qbf => ext.as_deref() == Some("qbf"),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct OccurrenceDoc {
    start_s: f64,
    end_s: f64,
    score: f64,
    query_coverage: f64,
}

#[derive(Serialize)]
struct ResultDoc {
    ref_id: String,
    detected: bool,
    count: usize,
    score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<Metric>,
    occurrences: Vec<OccurrenceDoc>,
    stage_timings_ms: StageTimings,
    #[serde(skip_serializing_if = "Option::is_none")]
    dtw: Option<DtwSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl ResultDoc {
    fn ok(ref_id: String, r: &DetectionResult) -> Self {
        ResultDoc {
            ref_id,
            detected: r.detected,
            count: r.count,
            score: r.score,
            metric: Some(r.metric),
            occurrences: r
                .occurrences
                .iter()
                .map(|o| OccurrenceDoc {
                    start_s: o.ref_start_s,
                    end_s: o.ref_end_s,
                    score: o.score,
                    query_coverage: o.query_coverage,
                })
                .collect(),
            stage_timings_ms: r.timings,
            dtw: r.dtw,
            error: None,
        }
    }

    fn failed(ref_id: String, e: &Error) -> Self {
        ResultDoc {
            ref_id,
            detected: false,
            count: 0,
            score: 0.0,
            metric: None,
            occurrences: Vec::new(),
            stage_timings_ms: StageTimings::default(),
            dtw: None,
            error: Some(e.to_string()),
        }
    }
}

#[derive(Serialize)]
struct PairDoc {
    query_id: String,
    #[serde(flatten)]
    result: ResultDoc,
}

#[derive(Serialize)]
struct ScanDoc {
    query_id: String,
    results: Vec<ResultDoc>,
    total_ms: f64,
}

fn emit<T: Serialize>(doc: &T, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc).map_err(|e| Failure::usage(e.to_string()))?;
    text.push('\n');
    match out {
        Some(path) => {
            check_output_dir(path)?;
            std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_pair(query: &Path, reference: &Path, args: &DetectArgs) -> CliResult<(FeatureMatrix, FeatureMatrix, DetectConfig)> {
    let cfg = args.config();
    cfg.validate()?;
    let q = load_features(query, args.features)?;
    let r = load_features(reference, args.features)?;
    Ok((q, r, cfg))
}

fn cmd_search(
    query: &Path,
    reference: &Path,
    args: &DetectArgs,
    emit_image: Option<PathBuf>,
    emit_edges: Option<PathBuf>,
) -> CliResult<()> {
    let (q, r, cfg) = load_pair(query, reference, args)?;
    for p in emit_image.iter().chain(emit_edges.iter()) {
        check_output_dir(p)?;
    }
    let result = if emit_image.is_some() || emit_edges.is_some() {
        let trace = detector::detect_traced(&q, &r, &cfg)?;
        if let Some(p) = &emit_image {
            write_pgm(&trace.image, p)?;
        }
        if let Some(p) = &emit_edges {
            write_pgm(&trace.edges.to_image(), p)?;
        }
        trace.result
    } else {
        detector::detect(&q, &r, &cfg)?
    };
    emit(
        &PairDoc {
            query_id: stem(query),
            result: ResultDoc::ok(stem(reference), &result),
        },
        args.out.as_deref(),
    )
}

fn cmd_baseline_dtw(query: &Path, reference: &Path, args: &DetectArgs) -> CliResult<()> {
    let (q, r, cfg) = load_pair(query, reference, args)?;
    let result = detector::dtw_baseline(&q, &r, &cfg)?;
    emit(
        &PairDoc {
            query_id: stem(query),
            result: ResultDoc::ok(stem(reference), &result),
        },
        args.out.as_deref(),
    )
}

fn cmd_scan(query: &Path, refs: &Path, args: &DetectArgs) -> CliResult<()> {
    let cfg = args.config();
    cfg.validate()?;
    let t0 = Instant::now();
    let q = load_features(query, args.features)?;
    let entries = std::fs::read_dir(refs).map_err(|e| Failure::usage(format!("{}: {e}", refs.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::usage(format!("{}: {e}", refs.display())))?.path();
        if path.is_file() && accepts(&path, args.features) {
            paths.push(path);
        }
    }
    paths.sort();

    let loaded = par::map_slice(cfg.exec, &paths, |p| (file_id(p), load_features(p, args.features)));
    let mut results = Vec::new();
    let mut good = Vec::new();
    for (id, fm) in loaded {
        match fm {
            Ok(fm) => good.push((id, fm)),
            Err(e) => results.push(ResultDoc::failed(id, &e)),
        }
    }
    let report = detector::scan(&q, &good, &cfg)?;
    for item in &report.items {
        results.push(match &item.outcome {
            Ok(r) => ResultDoc::ok(item.ref_id.clone(), r),
            Err(e) => ResultDoc::failed(item.ref_id.clone(), e),
        });
    }
    let rank = |d: &ResultDoc| if d.error.is_some() { f64::NEG_INFINITY } else { d.score };
    results.sort_by(|a, b| rank(b).total_cmp(&rank(a)).then_with(|| a.ref_id.cmp(&b.ref_id)));
    emit(
        &ScanDoc {
            query_id: stem(query),
            results,
            total_ms: t0.elapsed().as_secs_f64() * 1e3,
        },
        args.out.as_deref(),
    )
}

fn file_id(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned())
}

fn cmd_eval(manifest: &Path, args: &DetectArgs, curve: Option<&Path>, use_dtw: bool) -> CliResult<()> {
    let cfg = args.config();
    cfg.validate()?;
    let set = eval::load_manifest(manifest)?;
    if set.trials.is_empty() {
        return Err(Failure::usage(format!("{}: manifest has no trials", manifest.display())));
    }
    if let Some(p) = curve {
        check_output_dir(p)?;
    }

    let mut unique: Vec<&Path> = set
        .trials
        .iter()
        .flat_map(|t| [t.query.as_path(), t.reference.as_path()])
        .collect();
    unique.sort();
    unique.dedup();
    let features: BTreeMap<&Path, FeatureMatrix> = par::map_slice(cfg.exec, &unique, |p| load_features(p, args.features))
        .into_iter()
        .zip(unique.iter().copied())
        .map(|(fm, p)| fm.map(|fm| (p, fm)))
        .collect::<qbe_hough::Result<_>>()?;

    // Pairs run one at a time per worker; the inner stages stay sequential.
    let inner = DetectConfig {
        exec: qbe_hough::Exec::Sequential,
        ..cfg
    };
    let scores = par::map_slice(cfg.exec, &set.trials, |t| {
        let (q, r) = (&features[t.query.as_path()], &features[t.reference.as_path()]);
        let result = if use_dtw {
            detector::dtw_baseline(q, r, &inner)
        } else {
            detector::detect(q, r, &inner)
        };
        result.map(|r| Scored::new(t.term_id.clone(), t.label, r.score))
    })
    .into_iter()
    .collect::<qbe_hough::Result<Vec<_>>>()?;

    let report = eval::compute_mtwv(&scores, &TwvConfig::default())?;
    if let Some(p) = curve {
        std::fs::write(p, eval::curve_csv(&report)).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
    }
    emit(&report, args.out.as_deref())
}
