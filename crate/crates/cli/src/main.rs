//! `pseudolabel`: ingestion, self-training, augmentation, multi-task training,
//! prediction and report rendering.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 provider
//! error. Diagnostics go to standard error.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pseudolabel::metrics::ReportFormat;
use pseudolabel::multitask::Arch;
use pseudolabel::ErrorClass;

use commands::AugmentMethod;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Provider(String),
    Lib(pseudolabel::Error),
}

impl From<pseudolabel::Error> for CliError {
    fn from(e: pseudolabel::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let class = match self {
            CliError::Config(_) => ErrorClass::Config,
            CliError::Provider(_) => ErrorClass::Provider,
            CliError::Lib(e) => e.class(),
        };
        match class {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Provider => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Provider(m) => write!(f, "provider error: {m}"),
            CliError::Lib(e) => match e.class() {
                ErrorClass::Config => write!(f, "configuration error: {e}"),
                ErrorClass::Data => write!(f, "data error: {e}"),
                ErrorClass::Provider => write!(f, "provider error: {e}"),
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pseudolabel", version, about = "Teacher-student self-training for sentence classification")]
struct Cli {
    /// JSON run manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Base seed; overrides the manifest's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the manifest's.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the manifest's inputs and write them as JSON lines.
    Ingest,
    /// Run the teacher-student experiment.
    Selftrain,
    /// Augment the labeled data through the configured providers.
    Augment {
        #[arg(long, value_enum)]
        method: AugmentMethod,
    },
    /// Pretrain a shared encoder on auxiliary tasks, then fine-tune on causality.
    Mtl {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
    },
    /// Label every row of a CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "text")]
        text_column: String,
    },
    /// Render a report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    s.parse().map_err(|e: pseudolabel::Error| e.to_string())
}

fn resolve(cli: &Cli) -> Result<manifest::Resolved, CliError> {
    let path = cli
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --manifest".into()))?;
    let m = manifest::load(path)?;
    let root = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    manifest::resolve(
        m,
        root,
        cli.seed,
        cli.out_dir.clone(),
        std::env::var(manifest::ENDPOINT_ENV).ok(),
    )
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest => commands::ingest(&resolve(&cli)?),
        Command::Selftrain => commands::selftrain(&resolve(&cli)?),
        Command::Augment { method } => commands::augment(&resolve(&cli)?, *method),
        Command::Mtl { arch } => commands::mtl(&resolve(&cli)?, *arch),
        Command::Predict {
            model,
            input,
            output,
            text_column,
        } => commands::predict(model, input, output, text_column),
        Command::Report { input, format, output } => {
            let format = match format {
                Format::Json => ReportFormat::Json,
                Format::Markdown => ReportFormat::Markdown,
            };
            commands::report(input, format, output.clone())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pseudolabel: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
