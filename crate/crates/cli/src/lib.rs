//! Command-line front end: configs, protocol runners and result archives.

pub mod archive;
pub mod config;
pub mod error;
pub mod protocols;

use std::fs;
use std::path::{Path, PathBuf};

pub use archive::{emit_plotdata, PlotKind, ResultArchive};
pub use config::{ExperimentConfig, Protocol};
pub use error::CliError;
pub use protocols::run_protocol;

/// Environment variable capping the worker threads.
pub const MAX_THREADS_VAR: &str = "OPTOMECH_MAX_THREADS";

/// Options shared by every protocol subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct RunArgs {
    /// Config file (TOML); omitted means all values come from --set.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Output root; results go to <out>/<protocol>-<hash8>.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Override a config key, e.g. --set params.g=0.05 (repeatable; wins over the file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Reduced grids and time spans for smoke runs.
    #[arg(long)]
    pub ci: bool,
}

/// Reads and merges the config, applies CI limits, and validates it.
pub fn load_config(args: &RunArgs, protocol: Option<Protocol>) -> Result<(ExperimentConfig, Vec<String>), CliError> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    let mut warnings = Vec::new();
    let mut cfg = config::parse_with_overrides(&text, &args.overrides)?;
    if let Some(p) = protocol {
        cfg = cfg.with_protocol(p, &mut warnings);
    }
    if args.ci {
        cfg.apply_ci_limits();
    }
    warnings.extend(cfg.validate()?);
    Ok((cfg, warnings))
}

/// Output directory of a run.
pub fn output_dir(args: &RunArgs, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let root = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.dir.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    Ok(root.join(format!("{}-{}", cfg.protocol()?, cfg.hash8())))
}

/// Runs one protocol end to end and writes its archive.
pub fn run_and_write(args: &RunArgs, protocol: Protocol) -> Result<(ResultArchive, PathBuf), CliError> {
    let (cfg, warnings) = load_config(args, Some(protocol))?;
    let mut archive = run_protocol(&cfg, args.ci)?;
    for w in warnings.into_iter().rev() {
        if !archive.metadata.warnings.contains(&w) {
            archive.metadata.warnings.insert(0, w);
        }
    }
    let dir = output_dir(args, &cfg)?;
    let out = cfg.output.clone().unwrap_or_default();
    archive.write(&dir, out.json.unwrap_or(true), out.plot.unwrap_or(true))?;
    Ok((archive, dir))
}

/// Loads `archive.json` (or a directory containing it).
pub fn load_archive(path: &Path) -> Result<ResultArchive, CliError> {
    if path.is_dir() {
        ResultArchive::load(&path.join("archive.json"))
    } else {
        ResultArchive::load(path)
    }
}
