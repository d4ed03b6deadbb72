//! The `eto` command-line harness: experiment runs, method listing, figure
//! data and races, all driven by one TOML file.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use eto::lab::{figure_data, race::race, run_experiment, ExperimentId, ExperimentReport, FigureId};
use eto::transfer::enumerate_methods;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("experiment error: {0}")]
    Experiment(#[from] eto::lab::LabError),
}

impl CliError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Experiment(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "eto", version, about = "Evolutionary transfer optimization experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Output directory; overrides `run.out`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Leave the generation timestamp out of every output file.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the selected experiments and write their reports.
    Verify {
        /// Experiments to run, overriding `run.experiments`.
        experiments: Vec<String>,
    },
    /// List the fifteen composed methods with their infimum classes.
    Enumerate,
    /// Write CSV series for figures fig2..fig6 (or `all`).
    Figdata {
        #[arg(required = true)]
        figures: Vec<String>,
    },
    /// Paired races of the evolver with and without transfer.
    Race,
}

/// What a run printed and wrote.
#[derive(Debug, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub files: Vec<PathBuf>,
}

struct Context {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    stamp: Option<String>,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = common.seed.or(cfg.run.seed).unwrap_or(config::DEFAULT_SEED);
        let out = common
            .out
            .clone()
            .or_else(|| cfg.run.out.clone())
            .unwrap_or_else(|| PathBuf::from(config::DEFAULT_OUT));
        let stamp = (!common.no_timestamp).then(|| chrono::Utc::now().to_rfc3339());
        Ok(Self { cfg, seed, out, stamp })
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        Ok(&self.out)
    }
}

fn usage(e: eto::lab::LabError) -> CliError {
    match e {
        eto::lab::LabError::InvalidConfig(msg) => CliError::Usage(msg),
        other => CliError::Usage(other.to_string()),
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_from<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                Outcome {
                    code,
                    stdout: text,
                    files: Vec::new(),
                }
            } else {
                eprint!("{text}");
                Outcome {
                    code,
                    ..Outcome::default()
                }
            }
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be >= 1");
            return Outcome {
                code: 2,
                ..Outcome::default()
            };
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = Context::new(&cli.common).and_then(|ctx| match &cli.command {
        Command::Verify { experiments } => verify(&ctx, experiments),
        Command::Enumerate => Ok(enumerate()),
        Command::Figdata { figures } => figdata(&ctx, figures),
        Command::Race => run_race(&ctx),
    });
    match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            Outcome {
                code: e.exit_code(),
                ..Outcome::default()
            }
        }
    }
}

pub fn enumerate() -> Outcome {
    let mut stdout = String::new();
    for m in enumerate_methods() {
        let class = m.infimum_class();
        stdout.push_str(&format!("{:<6} {:<14} {}\n", m.to_string(), class.label(), class.formula()));
    }
    Outcome {
        code: 0,
        stdout,
        files: Vec::new(),
    }
}

fn verify(ctx: &Context, names: &[String]) -> Result<Outcome, CliError> {
    let ids = if names.is_empty() {
        ctx.cfg.experiments()
    } else {
        names
            .iter()
            .map(|n| n.parse::<ExperimentId>().map_err(usage))
            .collect::<Result<Vec<_>, _>>()?
    };
    let lab = ctx.cfg.lab();
    let dir = ctx.out_dir()?;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let mut files = Vec::new();
    for id in ids {
        let report = run_experiment(id, &lab, ctx.seed)?;
        files.push(output::write_report(dir, &report, ctx.stamp.as_deref())?);
        reports.push(report);
    }
    files.push(output::write_summary(dir, &reports, ctx.stamp.as_deref())?);
    let mut stdout = String::new();
    for r in &reports {
        stdout.push_str(&format!("{:<16} {:?}\n", r.experiment.name(), r.verdict));
    }
    let code = if reports.iter().all(|r| r.passed()) { 0 } else { 1 };
    Ok(Outcome { code, stdout, files })
}

fn figdata(ctx: &Context, names: &[String]) -> Result<Outcome, CliError> {
    let ids = if names.iter().any(|n| n == "all") {
        FigureId::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| n.parse::<FigureId>().map_err(usage))
            .collect::<Result<Vec<_>, _>>()?
    };
    let dir = ctx.out_dir()?;
    let mut files = Vec::new();
    let mut stdout = String::new();
    for id in ids {
        for t in figure_data(id, &ctx.cfg.figures, ctx.seed)? {
            let path = output::write_table(dir, &t)?;
            stdout.push_str(&format!("{id}: {} ({} rows)\n", path.display(), t.rows.len()));
            files.push(path);
        }
    }
    Ok(Outcome { code: 0, stdout, files })
}

fn run_race(ctx: &Context) -> Result<Outcome, CliError> {
    let outcome = race(&ctx.cfg.race, ctx.seed)?;
    let dir = ctx.out_dir()?;
    let mut files = vec![output::write_report(dir, &outcome.report, ctx.stamp.as_deref())?];
    let rows = dir.join("race_rows.csv");
    output::write_race_rows(&rows, &outcome.rows)?;
    files.push(rows);
    for (name, trace) in [("race_trace_baseline.csv", &outcome.example.0), ("race_trace_transfer.csv", &outcome.example.1)] {
        let p = dir.join(name);
        output::write_trace(&p, trace)?;
        files.push(p);
    }
    let code = if outcome.report.passed() { 0 } else { 1 };
    Ok(Outcome {
        code,
        stdout: outcome.report.to_text(),
        files,
    })
}
