use clap::{Args, Parser, Subcommand};
use demand_pulse::config::PipelineConfig;
use demand_pulse::error::CliError;
use demand_pulse::stages;
use demand_pulse_core::dtw::{dtw_between, CostKind};
use demand_pulse_core::tlcc::tlcc_sweep;
use demand_pulse_core::{DateIndexedSeries, NormalizationMode};
use serde_json::json;
use std::path::{Path, PathBuf};

/// Batch pipeline relating urban taxi demand to epidemic and
/// vaccination progress, with per-zone recovery metrics.
#[derive(Debug, Parser)]
#[command(name = "demand-pulse", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct ConfigArgs {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every stage in order and write a run manifest.
    Run {
        #[command(flatten)]
        common: ConfigArgs,
        /// Worker thread count (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Clean the trip file, aggregate daily series, echo the tables.
    Ingest {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Correlation matrix over the analysis-window series.
    Correlate {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Warping distances between taxi demand and every other series,
    /// or between two standalone series files.
    Dtw {
        /// Pipeline configuration file (stage mode).
        #[arg(long, conflicts_with_all = ["query", "reference", "normalization", "cost"])]
        config: Option<PathBuf>,
        /// Override the configured output directory.
        #[arg(long, requires = "config")]
        out: Option<PathBuf>,
        /// Query series CSV (`date,value`) for the direct mode.
        #[arg(long, requires = "reference")]
        query: Option<PathBuf>,
        /// Reference series CSV for the direct mode.
        #[arg(long, requires = "query")]
        reference: Option<PathBuf>,
        /// Normalization before the comparison: zscore, minmax or none.
        #[arg(long)]
        normalization: Option<String>,
        /// Pointwise cost: absolute or squared.
        #[arg(long)]
        cost: Option<String>,
    },
    /// Lead/lag sweeps of vaccination series against taxi demand, or
    /// of two standalone series files.
    Tlcc {
        /// Pipeline configuration file (stage mode).
        #[arg(long, conflicts_with_all = ["x", "y"])]
        config: Option<PathBuf>,
        /// Override the configured output directory.
        #[arg(long, requires = "config")]
        out: Option<PathBuf>,
        /// Leading-candidate series CSV (`date,value`) for the direct mode.
        #[arg(long, requires = "y")]
        x: Option<PathBuf>,
        /// Response series CSV for the direct mode.
        #[arg(long, requires = "x")]
        y: Option<PathBuf>,
        /// Widest offset swept in either direction (direct mode).
        #[arg(long, default_value_t = 30)]
        max_offset: i64,
    },
    /// Per-zone period metrics, the per-capita fit, and distance
    /// change classes.
    Spatial {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Collate stage outputs into the report bundle.
    Report {
        #[command(flatten)]
        common: ConfigArgs,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp
                | ErrorKind::DisplayVersion
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn load(common: &ConfigArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { common, threads } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(CliError::Config("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
            }
            let cfg = load(&common)?;
            stages::run_all(&cfg, &common.config)
        }
        Command::Ingest { common } => stages::stage_ingest(&load(&common)?).map(drop),
        Command::Correlate { common } => stages::stage_correlate(&load(&common)?).map(drop),
        Command::Spatial { common } => stages::stage_spatial(&load(&common)?).map(drop),
        Command::Report { common } => stages::stage_report(&load(&common)?).map(drop),
        Command::Dtw { config, out, query, reference, normalization, cost } => {
            match (config, query, reference) {
                (Some(config), None, None) => {
                    let cfg = load(&ConfigArgs { config, out })?;
                    stages::stage_dtw(&cfg).map(drop)
                }
                (None, Some(query), Some(reference)) => {
                    dtw_direct(&query, &reference, normalization.as_deref(), cost.as_deref())
                }
                _ => Err(CliError::Config(
                    "pass either --config or both --query and --reference".into(),
                )),
            }
        }
        Command::Tlcc { config, out, x, y, max_offset } => match (config, x, y) {
            (Some(config), None, None) => {
                let cfg = load(&ConfigArgs { config, out })?;
                stages::stage_tlcc(&cfg).map(drop)
            }
            (None, Some(x), Some(y)) => tlcc_direct(&x, &y, max_offset),
            _ => Err(CliError::Config("pass either --config or both --x and --y".into())),
        },
    }
}

fn read_series(path: &Path) -> Result<DateIndexedSeries, CliError> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".to_string());
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    DateIndexedSeries::read_csv(std::io::BufReader::new(file), label)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn dtw_direct(
    query: &Path,
    reference: &Path,
    normalization: Option<&str>,
    cost: Option<&str>,
) -> Result<(), CliError> {
    let mode = match normalization {
        Some(s) => s.parse::<NormalizationMode>().map_err(CliError::Config)?,
        None => NormalizationMode::ZScore,
    };
    let kind = match cost {
        Some(s) => s.parse::<CostKind>().map_err(CliError::Config)?,
        None => CostKind::Absolute,
    };
    let q = read_series(query)?;
    let r = read_series(reference)?;
    let result = dtw_between(&q, &r, mode, kind).map_err(|e| CliError::stage("dtw", e))?;
    let out = json!({
        "query": q.label(),
        "reference": r.label(),
        "normalization": mode,
        "cost": kind,
        "distance": result.distance,
        "path_length": result.path.len(),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn tlcc_direct(x: &Path, y: &Path, max_offset: i64) -> Result<(), CliError> {
    if max_offset < 1 {
        return Err(CliError::Config(format!(
            "--max-offset must be at least 1, got {max_offset}"
        )));
    }
    let xs = read_series(x)?;
    let ys = read_series(y)?;
    let profile =
        tlcc_sweep(&xs, &ys, max_offset).map_err(|e| CliError::stage("tlcc", e))?;
    let summary = profile.summary(xs.label(), ys.label());
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
