use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relaydmt::dmt::CurveKey;
use relaydmt::experiment::{
    reproduce_figures, run, CurveSection, ExperimentConfig, ExperimentKind, OutputFormat, Payload, RunOptions,
    DEFAULT_CURVE_STEP,
};
use relaydmt::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_TOLERANCE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "relaydmt", version, about = "Relay network DMT curves, outage simulation and solver checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export catalog curves sampled in r.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Curve key such as `src:2/ddf`; repeatable, used without --config.
        #[arg(long = "key")]
        keys: Vec<String>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Monte Carlo outage sweep over an SNR grid.
    Sweep(Common),
    /// Outage sweep with a fitted diversity slope.
    Slope(Common),
    /// Compare solver infima against catalog curves.
    VerifySolver(Common),
    /// Small-ball limit ratios for exponential sums and maxima.
    Lemma4(Common),
    /// Conditional outage slope by rejection sampling.
    Conditional(Common),
    /// Wrong-selection counts of a selection rule.
    Tightness(Common),
    /// Write one data file per figure.
    Figures {
        /// Output directory.
        #[arg(long, default_value = "figures")]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, default_value = "cache")]
        cache_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Recompute even when the cache holds this config.
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "cache")]
    cache_dir: PathBuf,
    /// Skip the cache entirely.
    #[arg(long)]
    no_cache: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn load_config(common: &Common, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    if cfg.kind != kind {
        return Err(Error::Config(format!("config kind is {:?}, subcommand expects {kind:?}", cfg.kind)));
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = Some(trials);
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    if let Some(format) = &common.format {
        cfg.format = format.parse()?;
    }
    Ok(cfg)
}

fn options(common: &Common) -> RunOptions {
    RunOptions {
        cache_dir: (!common.no_cache).then(|| common.cache_dir.clone()),
        force: common.force,
    }
}

fn execute(common: &Common, cfg: ExperimentConfig) -> Result<u8, Error> {
    cfg.validate()?;
    let outcome = run(&cfg, &options(common))?;
    let record = &outcome.record;
    match &outcome.output {
        Some(path) => eprintln!(
            "{} {} -> {}",
            record.config_hash,
            if outcome.cache_hit { "cached" } else { "computed" },
            path.display()
        ),
        None => {
            let body = record.render(cfg.format)?;
            std::io::stdout().write_all(&body).map_err(|e| Error::Io { path: "<stdout>".into(), source: e })?;
        }
    }
    match &record.payload {
        Payload::SolverVerify { report } => {
            for (label, diff) in report.per_label() {
                eprintln!("{label}: max |diff| = {diff:.4}");
            }
            eprintln!("max |diff| = {:.4}, tolerance {}", report.max_diff, report.tol);
        }
        Payload::Slope { fit, .. } => eprintln!("d_hat = {:.4} (stderr {:.4})", fit.d_hat, fit.stderr),
        Payload::Conditional { result } => {
            eprintln!("conditional d_hat = {:.4} (stderr {:.4})", result.fit.d_hat, result.fit.stderr)
        }
        Payload::Tightness { report } => eprintln!("wrong selections: {}", report.wrong_selection_total),
        _ => {}
    }
    Ok(if record.tolerance_failed() { EXIT_TOLERANCE } else { 0 })
}

fn dispatch(cli: Cli) -> Result<u8, Error> {
    let (common, kind) = match &cli.command {
        Command::Curve { common, keys, step } => {
            let mut cfg = load_config(common, ExperimentKind::CurveExport)?;
            if !keys.is_empty() {
                let keys = keys.iter().map(|k| k.parse()).collect::<Result<Vec<CurveKey>, Error>>()?;
                cfg.curve = Some(CurveSection { keys, step: DEFAULT_CURVE_STEP });
            }
            if let (Some(step), Some(curve)) = (step, cfg.curve.as_mut()) {
                curve.step = *step;
            }
            return execute(common, cfg);
        }
        Command::Sweep(c) => (c, ExperimentKind::McSweep),
        Command::Slope(c) => (c, ExperimentKind::Slope),
        Command::VerifySolver(c) => (c, ExperimentKind::SolverVerify),
        Command::Lemma4(c) => (c, ExperimentKind::Lemma4),
        Command::Conditional(c) => (c, ExperimentKind::Conditional),
        Command::Tightness(c) => (c, ExperimentKind::Tightness),
        Command::Figures { out, format, cache_dir, force } => {
            let format: OutputFormat = format.parse()?;
            let opts = RunOptions { cache_dir: Some(cache_dir.clone()), force: *force };
            let records = reproduce_figures(out, format, &opts)?;
            eprintln!("wrote {} figure files to {}", records.len(), out.display());
            return Ok(0);
        }
    };
    let cfg = load_config(common, kind)?;
    execute(common, cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_VALIDATION } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
