mod data;
mod export;
mod preprocess;
mod runs;
mod train;
mod transform;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lgwnn::model::Variant;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

/// Lifting-based adaptive graph wavelet networks.
#[derive(Parser, Debug)]
#[command(name = "lgwnn", version)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Errors only.
    #[arg(short, long, global = true)]
    quiet: bool,

    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(flatten)]
    dirs: Dirs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Dirs {
    /// Root holding downloaded datasets (`<root>/<name>/...`).
    #[arg(long, global = true, env = "LGWNN_DATA_ROOT")]
    pub data_root: Option<PathBuf>,

    /// Preprocessing cache directory.
    #[arg(long, global = true, env = "LGWNN_CACHE_DIR", default_value = "lgwnn-cache")]
    pub cache_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute and cache wavelet bases, smoothness, ordering and splits.
    Preprocess(PreprocessArgs),
    /// Train node- or graph-classification models.
    Train {
        #[command(subcommand)]
        task: TrainTask,
    },
    /// Run one signal through wavelet → lifting → threshold → inverse.
    Transform(transform::TransformArgs),
    /// Run the invariant suites.
    Verify(verify::VerifyArgs),
    /// Aggregate run metrics into CSV files.
    Export(export::ExportArgs),
    /// Execute one planned run in a given directory (used by --jobs).
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// Dataset selection plus the wavelet hyperparameters of preprocessing.
#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Built-in (karate, synthetic-sbm, synthetic-cycles), citation
    /// (cora, citeseer, pubmed) or graph-kernel benchmark name.
    #[arg(long)]
    pub dataset: String,

    /// Directory holding the dataset files, bypassing the data root.
    #[arg(long)]
    pub dataset_path: Option<PathBuf>,

    /// Diffusion scale t.
    #[arg(long)]
    pub scale: Option<f64>,

    /// Magnitude below which basis entries are dropped.
    #[arg(long)]
    pub basis_threshold: Option<f64>,

    /// Seed of the odd/even node split.
    #[arg(long = "seed", default_value_t = 0)]
    pub split_seed: u64,

    /// Seed of synthetic generators and of built-in masks.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,

    /// Polynomial order of the approximate basis for large graphs.
    #[arg(long)]
    pub chebyshev_order: Option<usize>,

    /// Largest graph using the exact eigendecomposition basis.
    #[arg(long)]
    pub exact_limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
}

#[derive(Subcommand, Debug)]
enum TrainTask {
    /// Full-batch node classification over several seeds.
    Node(train::NodeArgs),
    /// Mini-batch graph classification over cross-validation folds.
    Graph(train::GraphArgs),
}

/// Hyperparameters shared by both tasks; unset values fall back to the
/// per-dataset defaults.
#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = Variant::Learned)]
    pub variant: Variant,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Attention dimension c.
    #[arg(long)]
    pub attention_dim: Option<usize>,
    /// Soft-threshold θ.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

/// Options controlling where and how runs execute.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Parent directory of run directories.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Preprocess when no matching cache exists.
    #[arg(long)]
    pub auto_preprocess: bool,
    /// Worker processes for independent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Replay a resolved-config file; other hyperparameter flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: e.into(),
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_DATA,
            error: e.into(),
        }
    }
}

impl From<lgwnn::Error> for Failure {
    fn from(e: lgwnn::Error) -> Self {
        use lgwnn::Error as E;
        let code = match &e {
            E::InvalidArgument(_) | E::Unsupported(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        match error.downcast::<lgwnn::Error>() {
            Ok(e) => e.into(),
            Err(error) => Self { code: EXIT_DATA, error },
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::data(e)
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

/// Output options shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Output {
    pub json: bool,
    pub quiet: bool,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "error",
        (false, 0) => "warn",
        (false, 1) => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> CliResult {
    let out = Output {
        json: cli.json,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Preprocess(args) => preprocess::run(&args, &cli.dirs, out),
        Command::Train { task } => match task {
            TrainTask::Node(args) => train::run_node(&args, &cli.dirs, out),
            TrainTask::Graph(args) => train::run_graph(&args, &cli.dirs, out),
        },
        Command::Transform(args) => transform::run(&args, &cli.dirs, out),
        Command::Verify(args) => verify::run(&args, out),
        Command::Export(args) => export::run(&args, out),
        Command::Worker { run_dir } => runs::run_worker(&run_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
