mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::Failure;

/// Batch workflows for translation-pathology detection and evaluation.
#[derive(Parser, Debug)]
#[command(name = "mtpath", version, about)]
struct Cli {
    /// Worker threads for record-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON file with corpus reading conventions (span delimiters, extra labels).
    #[arg(long, global = true, value_name = "FILE")]
    load_options: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every record of a trace bundle and report violations.
    Validate { corpus: PathBuf },
    /// Compute sentence-level detector scores and/or word-level features.
    Score(ScoreArgs),
    /// Evaluate score columns on a task, per direction plus mean.
    Eval(EvalArgs),
    /// Combine word-level features with group-wise cross-validated logistic regression.
    Combine(CombineArgs),
    /// Pick records for annotation.
    Select(SelectArgs),
    /// Matched stratified downsampling of two corpora.
    Downsample(DownsampleArgs),
    /// Generate a synthetic corpus with planted pathologies.
    Synth(SynthArgs),
    /// Merge evaluation matrices into one long-format bundle.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    pub corpus: PathBuf,
    /// Comma-separated sentence detectors and/or word features (`combined` needs --model).
    #[arg(long, value_delimiter = ',', required = true)]
    pub detectors: Vec<String>,
    /// Corpus supplying reference translations for Wass-to-Data and friends.
    #[arg(long = "ref", value_name = "CORPUS")]
    pub reference: Option<PathBuf>,
    /// Calibration bundle to load instead of calibrating.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Where to save the calibration used.
    #[arg(long)]
    pub calib_out: Option<PathBuf>,
    /// Use the EOS-dropped variant of every OT detector.
    #[arg(long)]
    pub drop_eos: bool,
    /// Linear model from `combine`, scored as the `combined` word column.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output for word-level columns when sentence detectors are also requested.
    #[arg(long)]
    pub word_out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub ot_k: usize,
    #[arg(long, default_value_t = 1.25)]
    pub ot_window: f64,
    #[arg(long, default_value_t = 0.99)]
    pub ot_tau: f64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub task: String,
    /// Columns to evaluate (default: all).
    #[arg(long, value_delimiter = ',')]
    pub detectors: Vec<String>,
    /// Full results including counts and exclusions, as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct CombineArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub task: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub features: Vec<String>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    /// Word table with the features and out-of-fold scores.
    #[arg(long)]
    pub oof: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    pub corpus: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub strategy: String,
    #[arg(short)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    /// Detector columns to use (default: all).
    #[arg(long, value_delimiter = ',')]
    pub detectors: Vec<String>,
    /// File of ids (one per line) that must not be selected.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    /// Audit JSON path (default: OUTPUT with `.audit.json` appended).
    #[arg(long)]
    pub audit: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct DownsampleArgs {
    pub corpus_a: PathBuf,
    pub corpus_b: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directories for the two corpora.
    #[arg(short, long, num_args = 2, value_names = ["DIR_A", "DIR_B"], required = true)]
    pub output: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long = "eval", num_args = 1.., required = true)]
    pub evals: Vec<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Computation(format!("thread pool: {e}")))?;
    }
    let opts = commands::load_options(cli.load_options.as_deref())?;
    match cli.command {
        Command::Validate { corpus } => commands::validate(&corpus, &opts),
        Command::Score(a) => commands::score(&a, &opts),
        Command::Eval(a) => commands::eval(&a, &opts),
        Command::Combine(a) => commands::combine(&a, &opts),
        Command::Select(a) => commands::select(&a, &opts),
        Command::Downsample(a) => commands::downsample(&a, &opts),
        Command::Synth(a) => commands::synth(&a),
        Command::Report(a) => commands::report(&a),
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
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
