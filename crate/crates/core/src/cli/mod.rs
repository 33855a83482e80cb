//! Command-line front end: `run`, `sweep` and `metrics`.
//!
//! [`main_with`] takes the argument list and output streams explicitly so
//! the binary and the tests share one code path.

mod metrics;
mod resolve;
mod run;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::agents::StageKind;
use crate::chunker::ChunkSize;
use crate::corpus::Medium;
use crate::pipeline::{PipelineError, Preset};

pub use metrics::MetricsCommand;
pub use resolve::{resolve, ConfigFile, Resolved};
pub use run::{run_sweep, sweep_table, RunArgs, SweepArgs, SweepRow};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Input = 3,
    Backend = 4,
    Internal = 5,
}

impl ExitCode {
    fn kind(self) -> &'static str {
        match self {
            ExitCode::Ok => "ok",
            ExitCode::Config => "config",
            ExitCode::Input => "input",
            ExitCode::Backend => "backend",
            ExitCode::Internal => "internal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: ExitCode::Config, message: message.into() }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self { code: ExitCode::Input, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { code: ExitCode::Internal, message: message.into() }
    }

    /// The machine-readable record written to stderr.
    pub fn record(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.code.kind(), "exit_code": self.code as i32, "message": self.message } })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) | PipelineError::ConfigDrift { .. } => ExitCode::Config,
            PipelineError::Input(_) | PipelineError::Manifest(_) | PipelineError::SchemaMismatch { .. } => {
                ExitCode::Input
            }
            PipelineError::Stage { source, .. } if source.backend_error().is_none() => match source {
                crate::agents::StageError::InvalidConfig(_) => ExitCode::Config,
                _ => ExitCode::Internal,
            },
            _ => match e.backend_error() {
                Some(b) if b.is_config() => ExitCode::Config,
                Some(_) => ExitCode::Backend,
                None => ExitCode::Internal,
            },
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "storysum", version, about = "Hierarchical summarization of long narratives")]
pub struct Cli {
    /// Output format for reports printed to stdout.
    #[arg(long, value_enum, global = true, default_value_t = Format::Table)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Summarize one document and write manifest.json and summary.txt.
    Run(run::RunArgs),
    /// Run the pipeline over a grid of delta and theta values.
    Sweep(run::SweepArgs),
    /// Compute evaluation metrics.
    #[command(subcommand)]
    Metrics(MetricsCommand),
}

/// Pipeline settings shared by `run` and `sweep`. Every flag overrides the
/// config file, which overrides the preset.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineFlags {
    /// Document to summarize.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub medium: Option<Medium>,
    /// booksum, moviesum, mensa or summscreenfd.
    #[arg(long)]
    pub preset: Option<Preset>,
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mock-identity, mock-halve, mock-truncate:R, fixture:PATH or http.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable that holds the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub scenes_per_chunk: Option<usize>,
    /// Compression chunk size in words, or "max".
    #[arg(long)]
    pub delta: Option<ChunkSize>,
    /// Minimum summary length in words; 0 disables the bound.
    #[arg(long)]
    pub theta: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Comma-separated stage codes, e.g. P,S,C or P_cot,S,C,R.
    #[arg(long, value_delimiter = ',')]
    pub stages: Option<Vec<StageKind>>,
    /// JSON object mapping few-shot stage codes to their example lists.
    #[arg(long)]
    pub fewshot: Option<PathBuf>,
    #[arg(long)]
    pub early_stop_on_stall: Option<bool>,
    #[arg(long)]
    pub single_chunk_summary: Option<bool>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_output_tokens: Option<u32>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let _ = write!(stderr, "{e}");
            let err = CliError::config(e.kind().to_string());
            let _ = writeln!(stderr, "{}", err.record());
            return ExitCode::Config as i32;
        }
    };
    match execute(&cli, stdout) {
        Ok(code) => code as i32,
        Err(err) => {
            let _ = writeln!(stderr, "{}", err.record());
            err.code as i32
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    main_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::Run(args) => run::cmd_run(args, cli.format, out),
        Command::Sweep(args) => run::cmd_sweep(args, cli.format, out),
        Command::Metrics(cmd) => metrics::cmd_metrics(cmd, cli.format, out),
    }
}

pub(crate) fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::internal(format!("writing output: {e}")))
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    String::from_utf8(bytes).map_err(|e| {
        CliError::input(format!(
            "{}: invalid UTF-8 at byte {}",
            path.display(),
            e.utf8_error().valid_up_to()
        ))
    })
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}
