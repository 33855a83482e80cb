use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use serde_json::json;

use crate::agents::{Backend, StageGroup};
use crate::chunker::ChunkSize;
use crate::corpus::NarrativeDocument;
use crate::metrics::report::{fmt4, Table};
use crate::metrics::{compression_ratio, lar};
use crate::pipeline::{load_manifest, Pipeline, PipelineConfig, PipelineError, RunManifest};

use super::{emit, read_text, resolve, write_file, CliError, ExitCode, Format, PipelineFlags};

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub flags: PipelineFlags,
    /// Continue the run recorded in the output directory's manifest.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub flags: PipelineFlags,
    /// Comma-separated theta values.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Vec<usize>,
    /// Comma-separated delta values (words or "max").
    #[arg(long, value_delimiter = ',')]
    pub deltas: Vec<ChunkSize>,
    /// Run grid points concurrently.
    #[arg(long)]
    pub parallel: bool,
}

fn backend_error(e: crate::agents::BackendError) -> CliError {
    CliError::from(PipelineError::Backend(e))
}

fn load_document(path: &Path, medium: crate::corpus::Medium) -> Result<NarrativeDocument, CliError> {
    let text = read_text(path)?;
    NarrativeDocument::ingest(&text, medium).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

struct Prepared {
    config: PipelineConfig,
    doc: NarrativeDocument,
    out: Option<PathBuf>,
    backend: Box<dyn Backend>,
}

/// Resolves and validates everything before any output is written.
fn prepare(flags: &PipelineFlags, need_out: bool) -> Result<Prepared, CliError> {
    let r = resolve(flags)?;
    let input = r.input.ok_or_else(|| CliError::config("--input is required"))?;
    if need_out && r.out.is_none() {
        return Err(CliError::config("--out is required"));
    }
    r.config.validate()?;
    let doc = load_document(&input, r.medium)?;
    let backend = r.config.backend.build().map_err(backend_error)?;
    Ok(Prepared {
        config: r.config,
        doc,
        out: r.out,
        backend,
    })
}

fn write_outputs(dir: &Path, m: &RunManifest) -> Result<PathBuf, CliError> {
    let summary = dir.join("summary.txt");
    let mut text = m.final_summary.clone().unwrap_or_default();
    text.push('\n');
    write_file(&summary, &text)?;
    Ok(summary)
}

pub fn cmd_run(args: &RunArgs, format: Format, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let p = prepare(&args.flags, true)?;
    let dir = p.out.expect("checked in prepare");
    let manifest_path = dir.join("manifest.json");
    let pipeline = Pipeline::new(&p.config, p.backend.as_ref()).persist_to(&manifest_path);
    let result = if args.resume && manifest_path.exists() {
        let previous = load_manifest(&manifest_path)?;
        pipeline.resume(previous, &p.doc)
    } else {
        pipeline.run(&p.doc)
    };
    let m = result.map_err(|e| CliError::from(e.error))?;
    let summary_path = write_outputs(&dir, &m)?;

    let report = json!({
        "run_id": m.run_id,
        "final_word_count": m.final_word_count(),
        "iterations_used": m.iterations_used,
        "halt_reason": m.halt_reason,
        "total_calls": m.totals.calls,
        "manifest": manifest_path,
        "summary": summary_path,
    });
    let text = match format {
        Format::Json => serde_json::to_string_pretty(&report).expect("json") + "\n",
        Format::Table => {
            let mut t = Table::new(["field", "value"]);
            t.push(["final_word_count".to_string(), m.final_word_count().unwrap_or(0).to_string()]);
            t.push(["iterations_used".to_string(), m.iterations_used.to_string()]);
            t.push([
                "halt_reason".to_string(),
                m.halt_reason.map_or("-".to_string(), |h| h.to_string()),
            ]);
            t.push(["total_calls".to_string(), m.totals.calls.to_string()]);
            t.push(["manifest".to_string(), manifest_path.display().to_string()]);
            t.push(["summary".to_string(), summary_path.display().to_string()]);
            t.render()
        }
    };
    emit(out, &text)?;
    Ok(ExitCode::Ok)
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: ChunkSize,
    pub theta: usize,
    pub final_words: Option<usize>,
    /// Against θ as the target length; absent when θ is 0.
    pub lar: Option<f64>,
    pub compression_ratio: Option<f64>,
    pub iterations: Option<usize>,
    pub halt_reason: Option<String>,
    pub error: Option<String>,
    #[serde(skip)]
    pub exit_code: ExitCode,
}

/// Length of the text that entered compression.
fn compression_input_words(m: &RunManifest, doc: &NarrativeDocument) -> usize {
    m.records
        .iter()
        .rev()
        .find(|r| r.stage.group() < StageGroup::Compress)
        .map_or_else(|| doc.word_count(), |r| r.output_word_count)
}

fn sweep_cell(
    base: &PipelineConfig,
    doc: &NarrativeDocument,
    backend: &dyn Backend,
    delta: ChunkSize,
    theta: usize,
    out: Option<&Path>,
) -> SweepRow {
    let config = PipelineConfig {
        delta,
        theta,
        ..base.clone()
    };
    let mut row = SweepRow {
        delta,
        theta,
        final_words: None,
        lar: None,
        compression_ratio: None,
        iterations: None,
        halt_reason: None,
        error: None,
        exit_code: ExitCode::Ok,
    };
    let dir = out.map(|o| o.join(format!("delta-{delta}_theta-{theta}")));
    let mut pipeline = Pipeline::new(&config, backend);
    if let Some(d) = &dir {
        pipeline = pipeline.persist_to(d.join("manifest.json"));
    }
    let outcome = pipeline
        .run(doc)
        .map_err(|e| CliError::from(e.error))
        .and_then(|m| {
            if let Some(d) = &dir {
                write_outputs(d, &m)?;
            }
            Ok(m)
        });
    match outcome {
        Ok(m) => {
            let words = m.final_word_count().unwrap_or(0);
            row.final_words = Some(words);
            row.lar = (theta > 0).then(|| lar(words as u64, theta as u64).ok()).flatten();
            row.compression_ratio = compression_ratio(compression_input_words(&m, doc) as f64, words as f64).ok();
            row.iterations = Some(m.iterations_used);
            row.halt_reason = m.halt_reason.map(|h| h.to_string());
        }
        Err(e) => {
            row.error = Some(e.message);
            row.exit_code = e.code;
        }
    }
    row
}

pub fn run_sweep(
    base: &PipelineConfig,
    doc: &NarrativeDocument,
    backend: &dyn Backend,
    deltas: &[ChunkSize],
    thetas: &[usize],
    parallel: bool,
    out: Option<&Path>,
) -> Vec<SweepRow> {
    let deltas = if deltas.is_empty() { vec![base.delta] } else { deltas.to_vec() };
    let thetas = if thetas.is_empty() { vec![base.theta] } else { thetas.to_vec() };
    let grid: Vec<(ChunkSize, usize)> = deltas
        .iter()
        .flat_map(|&d| thetas.iter().map(move |&t| (d, t)))
        .collect();
    if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = grid
                .iter()
                .map(|&(d, t)| s.spawn(move || sweep_cell(base, doc, backend, d, t, out)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep cell panicked")).collect()
        })
    } else {
        grid.iter()
            .map(|&(d, t)| sweep_cell(base, doc, backend, d, t, out))
            .collect()
    }
}

pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new([
        "delta",
        "theta",
        "final_words",
        "lar",
        "compression_ratio",
        "iterations",
        "halt_reason",
        "error",
    ]);
    let dash = || "-".to_string();
    for r in rows {
        t.push([
            r.delta.to_string(),
            r.theta.to_string(),
            r.final_words.map_or_else(dash, |w| w.to_string()),
            r.lar.map_or_else(dash, fmt4),
            r.compression_ratio.map_or_else(dash, fmt4),
            r.iterations.map_or_else(dash, |i| i.to_string()),
            r.halt_reason.clone().unwrap_or_else(dash),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    t
}

pub fn cmd_sweep(args: &SweepArgs, format: Format, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    if args.thetas.is_empty() && args.deltas.is_empty() {
        return Err(CliError::config("sweep needs --thetas and/or --deltas"));
    }
    let p = prepare(&args.flags, false)?;
    let rows = run_sweep(
        &p.config,
        &p.doc,
        p.backend.as_ref(),
        &args.deltas,
        &args.thetas,
        args.parallel,
        p.out.as_deref(),
    );
    let json_text = serde_json::to_string_pretty(&rows).expect("json") + "\n";
    let table_text = sweep_table(&rows).render();
    if let Some(dir) = &p.out {
        write_file(&dir.join("report.json"), &json_text)?;
        write_file(&dir.join("report.txt"), &table_text)?;
    }
    emit(out, if format == Format::Json { &json_text } else { &table_text })?;
    Ok(rows
        .iter()
        .map(|r| r.exit_code)
        .find(|&c| c != ExitCode::Ok)
        .unwrap_or(ExitCode::Ok))
}
