use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Args, Command, FromArgMatches};

use optomech_cli::{emit_plotdata, load_archive, load_config, run_and_write, CliError, PlotKind, Protocol, RunArgs};

fn cli() -> Command {
    let mut cmd = Command::new("optomech")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Two-mirror optomechanics with virtual photon pairs: spectra, effective couplings and dynamics")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for p in Protocol::ALL {
        let kebab = p.name().replace('_', "-");
        cmd = cmd.subcommand(RunArgs::augment_args(Command::new(p.name()).alias(kebab)).about(p.summary()));
    }
    cmd.subcommand(
        RunArgs::augment_args(Command::new("validate")).about("check a config without running it").arg(
            Arg::new("protocol")
                .long("protocol")
                .value_parser(clap::value_parser!(Protocol))
                .help("protocol to validate against (default: the one in the file)"),
        ),
    )
    .subcommand(Command::new("list").about("list protocols"))
    .subcommand(
        Command::new("plot")
            .about("write gnuplot data for one curve family of an archive")
            .arg(Arg::new("archive").required(true).value_parser(clap::value_parser!(PathBuf)).help("archive.json or its directory"))
            .arg(Arg::new("kind").long("kind").required(true).value_parser(clap::value_parser!(PlotKind)))
            .arg(Arg::new("out").long("out").value_parser(clap::value_parser!(PathBuf)).help("directory for the .dat file")),
    )
    .arg(Arg::new("verbose").long("verbose").short('v').action(ArgAction::Count).global(true))
}

fn run(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match name {
        "list" => {
            for p in Protocol::ALL {
                println!("{:<22} {}", p.name(), p.summary());
            }
            Ok(())
        }
        "plot" => {
            let path: &PathBuf = sub.get_one("archive").expect("required");
            let kind = *sub.get_one::<PlotKind>("kind").expect("required");
            let archive = load_archive(path)?;
            let dir = match sub.get_one::<PathBuf>("out") {
                Some(d) => d.clone(),
                None if path.is_dir() => path.join("plot"),
                None => path.parent().map(|p| p.join("plot")).unwrap_or_else(|| PathBuf::from("plot")),
            };
            for f in emit_plotdata(&archive, kind, &dir)? {
                println!("{}", f.display());
            }
            Ok(())
        }
        "validate" => {
            let args = RunArgs::from_arg_matches(sub).map_err(|e| CliError::Config(e.to_string()))?;
            let protocol = sub.get_one::<Protocol>("protocol").copied();
            let (cfg, warnings) = load_config(&args, protocol)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", cfg.to_toml());
            eprintln!("ok: {} config is valid (hash {})", cfg.protocol()?, cfg.hash8());
            Ok(())
        }
        other => {
            let protocol = Protocol::ALL.into_iter().find(|p| p.name() == other).expect("protocol subcommand");
            let args = RunArgs::from_arg_matches(sub).map_err(|e| CliError::Config(e.to_string()))?;
            let (archive, dir) = run_and_write(&args, protocol)?;
            for w in &archive.metadata.warnings {
                eprintln!("warning: {w}");
            }
            for (k, v) in &archive.metadata.resolved {
                println!("resolved {k} = {v:.10e}");
            }
            for (k, v) in &archive.summary {
                println!("{k} = {v:.10e}");
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let level = match matches.get_count("verbose") {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Ok(v) = std::env::var(optomech_cli::MAX_THREADS_VAR) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not cap threads: {e}");
                }
            }
            _ => log::warn!("{} = {v:?} is not a positive integer; ignored", optomech_cli::MAX_THREADS_VAR),
        }
    }
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
