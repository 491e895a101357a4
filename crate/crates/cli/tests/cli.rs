use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use optomech_cli::config::{parse_str, Protocol};
use optomech_cli::{emit_plotdata, load_archive, run_and_write, PlotKind, RunArgs};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bundled() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    v.sort();
    v
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optomech"))
}

#[test]
fn bundled_configs_round_trip_and_validate() {
    let files = bundled();
    assert!(files.len() >= 14, "expected one config per artifact, found {}", files.len());
    for f in files {
        let cfg = parse_str(&fs::read_to_string(&f).unwrap()).unwrap();
        assert_eq!(parse_str(&cfg.to_toml()).unwrap(), cfg, "{}", f.display());
        cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", f.display()));
    }
}

#[test]
fn every_bundled_config_runs_in_ci_mode() {
    let out = tempfile::tempdir().unwrap();
    for f in bundled() {
        let cfg = parse_str(&fs::read_to_string(&f).unwrap()).unwrap();
        let protocol = cfg.protocol.unwrap();
        let args = RunArgs { config: Some(f.clone()), out: Some(out.path().into()), overrides: vec![], ci: true };
        let (archive, dir) = run_and_write(&args, protocol).unwrap_or_else(|e| panic!("{}: {e}", f.display()));
        assert!(archive.metadata.ci);
        assert!(!archive.tables.is_empty());
        assert!(dir.join("config.toml").exists() && dir.join("archive.json").exists());
        for t in &archive.tables {
            let csv = fs::read_to_string(dir.join(format!("{}.csv", t.name))).unwrap();
            assert!(csv.lines().next().unwrap().starts_with('#'));
            assert!(t.columns.iter().all(|c| csv.contains(&format!("# column {}: ", c.name))));
        }
    }
}

#[test]
fn identical_config_gives_identical_tables() {
    let out1 = tempfile::tempdir().unwrap();
    let out2 = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("fig1b.toml");
    let run = |out: &Path| {
        let args = RunArgs { config: Some(cfg.clone()), out: Some(out.into()), overrides: vec!["sweep.points=9".into()], ci: true };
        run_and_write(&args, Protocol::SpectrumSweep).unwrap()
    };
    let (a, da) = run(out1.path());
    let (_, db) = run(out2.path());
    assert_eq!(da.file_name(), db.file_name());
    for t in &a.tables {
        let name = format!("{}.csv", t.name);
        assert_eq!(fs::read(da.join(&name)).unwrap(), fs::read(db.join(&name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read(da.join("config.toml")).unwrap(), fs::read(db.join("config.toml")).unwrap());
    // The echoed config parses back to what ran.
    let echo = parse_str(&fs::read_to_string(da.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echo.sweep.unwrap().points, Some(9));
}

#[test]
fn min_splitting_from_flags_only() {
    let out = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["min_splitting", "--set", "params.g=0.03", "--set", "params.omega_c=0.495", "--out"])
        .arg(out.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let gap: f64 = stdout.lines().find_map(|l| l.strip_prefix("gap = ")).unwrap().trim().parse().unwrap();
    assert!((gap - 2.11e-2).abs() / 2.11e-2 < 0.03, "gap {gap}");
}

#[test]
fn exit_codes_name_the_category() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "protocol = \"spectrum_sweep\"\n[params]\nomega_c = 0.5\ng = -0.1\n[sweep]\nomega_2_min = 0.9\nomega_2_max = 1.1\n").unwrap();
    let o = bin().args(["spectrum_sweep", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[config]:"));

    let o = bin().args(["spectrum_sweep", "--config"]).arg(dir.path().join("missing.toml")).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[io]:"));

    // A bracket that excludes the anticrossing is a numerical failure.
    let o = bin()
        .args(["min_splitting", "--set", "params.g=0.03", "--set", "params.omega_c=0.495", "--set", "splitting.omega_2_lo=1.2"])
        .args(["--set", "splitting.omega_2_hi=1.3", "--set", "space.cutoff=4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[numerical]: min_splitting:"));
}

#[test]
fn validate_and_list() {
    let o = bin().args(["validate", "--config"]).arg(configs_dir().join("tableI.toml")).output().unwrap();
    assert!(o.status.success());
    let echo = String::from_utf8(o.stdout).unwrap();
    assert_eq!(parse_str(&echo).unwrap(), parse_str(&fs::read_to_string(configs_dir().join("tableI.toml")).unwrap()).unwrap());

    let o = bin().arg("validate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("protocol") && err.contains("params.omega_c"), "{err}");

    let o = bin().arg("list").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for p in Protocol::ALL {
        assert!(text.contains(p.name()));
    }
}

#[test]
fn protocol_subcommand_overrides_file_with_warning() {
    let out = tempfile::tempdir().unwrap();
    let args = RunArgs {
        config: Some(configs_dir().join("fig1b.toml")),
        out: Some(out.path().into()),
        overrides: vec!["splitting.coarse_points=7".into()],
        ci: true,
    };
    let (archive, _) = run_and_write(&args, Protocol::MinSplitting).unwrap();
    assert_eq!(archive.metadata.protocol, "min_splitting");
    assert!(archive.metadata.warnings.iter().any(|w| w.contains("overridden")));
    assert!(archive.summary_value("gap").is_some());
}

#[test]
fn plot_data_from_dynamics_archive() {
    let out = tempfile::tempdir().unwrap();
    let args = RunArgs {
        config: None,
        out: Some(out.path().into()),
        overrides: [
            "params.g=0.03",
            "params.omega_c=0.495",
            "space.cutoff=4",
            "baths.gamma=0.01",
            "drive.amplitude=0.0",
            "drive.omega_d=1.0",
            "dynamics.t_end=20.0",
            "dynamics.samples=11",
            "dynamics.initial=\"ground\"",
        ]
        .map(String::from)
        .to_vec(),
        ci: false,
    };
    let (archive, dir) = run_and_write(&args, Protocol::CwDynamics).unwrap();
    // Zero drive at T = 0 from the ground state stays put.
    let dynamics = archive.table("dynamics").unwrap();
    for col in ["n_b1", "n_b2", "n_a"] {
        assert!(dynamics.column(col).unwrap().iter().all(|x| x.abs() < 1e-12), "{col}");
    }
    let text = fs::read_to_string(dir.join("plot/dynamics.dat")).unwrap();
    let header = text.lines().nth(2).unwrap();
    assert!(header.starts_with("# t[") && header.contains("n_b1") && header.contains("g2_2"), "{header}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 11);

    let loaded = load_archive(&dir).unwrap();
    assert_eq!(loaded, archive);
    let err = emit_plotdata(&loaded, PlotKind::Fft, out.path()).unwrap_err().to_string();
    assert!(err.contains("fft") && err.contains("populations"), "{err}");

    let o = bin().args(["plot", "--kind", "populations"]).arg(&dir).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.join("plot/populations.dat").exists());
}
