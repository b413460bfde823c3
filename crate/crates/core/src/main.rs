use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hydroverify::experiment::{self, ExperimentConfig, ExperimentError, RunContext};

#[derive(Parser)]
#[command(
    name = "hydroverify",
    version,
    about = "Train and verify stream-temperature networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON or TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Only process this stream.
    #[arg(long)]
    stream: Option<String>,
}

#[derive(Args, Clone)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// Model file to analyze instead of `<out>/models/<stream>/model.json`.
    #[arg(long, requires = "stream")]
    model: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the source CSV files of synthetic streams.
    Synth(Common),
    /// Build features and the train/validation/test split.
    Ingest(Common),
    /// Train the configured architecture on every stream.
    Train(Common),
    /// RMSE of a saved model on every split.
    Evaluate(WithModel),
    /// Certified output intervals under the configured perturbation.
    Robustness(WithModel),
    /// Input search for the minimum and maximum output.
    Minmax(WithModel),
    /// Per-feature loss-gradient impact.
    Impact(WithModel),
    /// Input-combination and architecture sweeps.
    Sweep(Common),
    /// Consolidate a run directory into summary.md and summary.json.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// One JSON object per line on stderr.
struct JsonLogger {
    level: log::LevelFilter,
}

impl log::Log for JsonLogger {
    fn enabled(&self, m: &log::Metadata) -> bool {
        m.level() <= self.level
    }

    fn log(&self, r: &log::Record) {
        if self.enabled(r.metadata()) {
            let line = serde_json::json!({
                "level": r.level().as_str().to_ascii_lowercase(),
                "target": r.target(),
                "message": r.args().to_string(),
            });
            eprintln!("{line}");
        }
    }

    fn flush(&self) {}
}

fn init_logging() {
    let level = std::env::var("HYDROVERIFY_LOG")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(log::LevelFilter::Info);
    if log::set_boxed_logger(Box::new(JsonLogger { level })).is_ok() {
        log::set_max_level(level);
    }
}

fn init_threads() -> Result<(), ExperimentError> {
    let Ok(v) = std::env::var("HYDROVERIFY_THREADS") else {
        return Ok(());
    };
    let n: usize =
        v.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            ExperimentError::Config(format!("HYDROVERIFY_THREADS must be a positive integer, got `{v}`"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ExperimentError::Config(e.to_string()))
}

fn context(c: &Common) -> Result<RunContext, ExperimentError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    let mut ctx = RunContext::new(cfg);
    if let Some(out) = &c.out {
        ctx.out = out.clone();
    }
    if let Some(s) = &c.stream {
        ctx.config.stream(s)?;
        ctx.stream = Some(s.clone());
    }
    Ok(ctx)
}

fn report_dir(config: Option<&Path>, out: Option<&Path>) -> Result<PathBuf, ExperimentError> {
    match (out, config) {
        (Some(o), _) => Ok(o.to_path_buf()),
        (None, Some(c)) => Ok(ExperimentConfig::load(c)?.output_dir),
        (None, None) => Err(ExperimentError::Config("report needs --out or --config".into())),
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, ExperimentError> {
    init_threads()?;
    match cli.command {
        Command::Synth(c) => experiment::cmd_synth(&context(&c)?),
        Command::Ingest(c) => experiment::cmd_ingest(&context(&c)?),
        Command::Train(c) => experiment::cmd_train(&context(&c)?),
        Command::Sweep(c) => experiment::cmd_sweep(&context(&c)?),
        Command::Evaluate(m) => experiment::cmd_evaluate(&context(&m.common)?, m.model.as_deref()),
        Command::Robustness(m) => experiment::cmd_robustness(&context(&m.common)?, m.model.as_deref()),
        Command::Minmax(m) => experiment::cmd_minmax(&context(&m.common)?, m.model.as_deref()),
        Command::Impact(m) => experiment::cmd_impact(&context(&m.common)?, m.model.as_deref()),
        Command::Report { config, out } => {
            let dir = report_dir(config.as_deref(), out.as_deref())?;
            let (summary, written) = experiment::report(&dir)?;
            for f in &summary.soundness_failures {
                log::error!("soundness failure in {}: {} violations", f.artifact, f.violations);
            }
            Ok(written)
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    match run(cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
