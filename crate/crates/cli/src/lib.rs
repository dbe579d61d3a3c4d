//! `fragqnn` command line: builds systems from a JSON config, runs training
//! sweeps and verification checks, and writes CSV/JSON results atomically.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use fragqnn_core::Error;

use crate::config::ExperimentConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERIFY_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(path.to_path_buf(), e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(..) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        // Bad shapes and sizes come from the request, not the numerics.
        match e {
            Error::InvalidArgument(m) => CliError::Usage(m),
            Error::DimensionTooLarge { .. } | Error::DimensionMismatch { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fragqnn", version, about = "QNN experiments on fragmented Hilbert spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// fig2-4q, fig2-8q or fig3-4q.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Multiplier on trial counts.
    #[arg(long, global = true)]
    pub scale: Option<f64>,
    /// Only `tl` (Temperley-Lieb) is built in.
    #[arg(long, global = true)]
    pub model: Option<String>,
    #[arg(long = "L", global = true)]
    pub l: Option<usize>,
    #[arg(long, global = true)]
    pub n_a: Option<usize>,
    /// Comma-separated parameter counts.
    #[arg(long, global = true, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    #[arg(long = "T", global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub max_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// Monte Carlo samples for verification.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Krylov decomposition of the generator algebra, with residuals.
    Decompose,
    /// Training curves over a (p, trial) sweep.
    Train,
    /// Final-loss distribution over a (p, trial) sweep.
    Minima,
    Verify {
        #[command(subcommand)]
        check: VerifyCheck,
    },
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum VerifyCheck {
    /// Gaussian-model gradient second moments against the closed form.
    Variance,
    /// Time-averaged against Haar-averaged trace expression.
    Moments,
    /// Loss bound on the multiplicity-extended dataset.
    Generalization,
    /// Hessian rank as a function of p.
    HessianRank,
}

#[derive(Clone, Copy, Debug, Subcommand)]
pub enum DatasetAction {
    /// Write the dataset with sector tags as JSON.
    Export,
}

/// Defaults, then preset, then config file, then flags.
pub fn resolve(g: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let mut c = match &g.preset {
        Some(name) => config::preset(name)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &g.config {
        c = config::load(path)?;
    }
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(o) = &g.out {
        c.output_dir = o.clone();
    }
    if let Some(m) = &g.model {
        c.system.model = m.clone();
    }
    if let Some(l) = g.l {
        c.system.l = l;
    }
    if g.n_a.is_some() {
        c.system.n_a = g.n_a;
    }
    if let Some(p) = &g.p {
        c.ansatz.p_values = p.clone();
    }
    if g.horizon.is_some() {
        c.ansatz.horizon = g.horizon;
    }
    if let Some(t) = g.trials {
        c.train.trials = t;
    }
    if let Some(e) = g.max_epochs {
        c.train.max_epochs = e;
    }
    if let Some(lr) = g.lr {
        c.train.lr = lr;
    }
    if let Some(s) = g.samples {
        c.verify.samples = s;
        c.verify.moment_samples = s;
    }
    if let Some(scale) = g.scale {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CliError::Usage(format!("scale must be > 0, got {scale}")));
        }
        c.train.trials = config::scaled_trials(c.train.trials, scale);
    }
    c.validate()?;
    Ok(c)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(true) => EXIT_PASS,
        Ok(false) => EXIT_VERIFY_FAIL,
        Err(e) => {
            eprintln!("fragqnn: {e}");
            e.exit_code()
        }
    }
}

/// `Ok(false)` when a verification ran and failed.
pub fn execute(cli: &Cli) -> Result<bool, CliError> {
    let cfg = resolve(&cli.global)?;
    let threads = match cli.global.threads {
        Some(0) => return Err(CliError::Usage("threads must be >= 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let out = output::OutDir::create(&cfg.output_dir)?;
    pool.install(|| match cli.command {
        Command::Decompose => commands::decompose(&cfg, &out),
        Command::Train => commands::train(&cfg, &out),
        Command::Minima => commands::minima(&cfg, &out),
        Command::Verify { check } => commands::verify(&cfg, check, &out),
        Command::Dataset {
            action: DatasetAction::Export,
        } => commands::dataset_export(&cfg, &out),
    })
}
