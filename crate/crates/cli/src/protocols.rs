//! Protocol runners: each turns a validated config into a result archive.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{SystemTime, UNIX_EPOCH};

use optomech::dynamics::{
    build_master_equation, evolve, fft_signal, EvolveOptions, InitialState, Retention, Tolerances, TrajectoryResult,
};
use optomech::hilbert::{make_space, FockLabel, HilbertSpace};
use optomech::model::{BathSpec, DriveSpec, DriveTarget, ModulationSpec, SystemParams};
use optomech::perturbation::{
    compare_perturbation_vs_numerics, platform_coupling_estimate, shift_table, splitting_table, DEFAULT_SUM_CUTOFF,
};
use optomech::spectrum::{
    diagonalize_system, find_min_splitting, one_phonon_bracket, sweep_levels, EigenSystem, LevelPairSelector,
    MinSplittingOptions, SplittingReport,
};

use crate::archive::{Cell, Column, Metadata, ResultArchive, Table};
use crate::config::{
    DriveKindCfg, DriveTargetCfg, ExperimentConfig, Protocol, Setting,
};
use crate::error::CliError;

pub const DEFAULT_CUTOFF: usize = 8;
pub const DEFAULT_ENERGY_WINDOW: f64 = 2.6;
pub const DEFAULT_SAMPLES: usize = 501;
pub const DEFAULT_SWEEP_POINTS: usize = 201;
pub const DEFAULT_SWEEP_LEVELS: usize = 10;
pub const DEFAULT_SHIFT_OMEGA_2: f64 = 0.94;
pub const DEFAULT_FIT_MAX_G: f64 = 0.02;
/// Eigenstates listed in the `eigenstates` table of dynamics runs.
const LISTED_EIGENSTATES: usize = 12;

const E: &str = "omega_1";
const T: &str = "1/omega_1";
const N: &str = "quanta";
const ONE: &str = "dimensionless";

/// Level pair named in `[splitting].pair`.
#[derive(Debug, Clone, PartialEq)]
pub enum PairChoice {
    OnePhonon,
    /// `|1,0,0⟩ ↔ |0,2,0⟩`, the down-conversion resonance near ω₂ = ω₁/2.
    Pdc,
    Custom(FockLabel, FockLabel),
}

impl PairChoice {
    pub fn selector(&self) -> LevelPairSelector {
        match *self {
            PairChoice::OnePhonon => LevelPairSelector::one_phonon(),
            PairChoice::Pdc => LevelPairSelector::BareStates(FockLabel::new(1, 0, 0), FockLabel::new(0, 2, 0)),
            PairChoice::Custom(a, b) => LevelPairSelector::BareStates(a, b),
        }
    }

    fn default_bracket(&self, g: f64) -> (f64, f64) {
        match self {
            PairChoice::OnePhonon => one_phonon_bracket(g),
            PairChoice::Pdc => (0.47, 0.53),
            PairChoice::Custom(..) => (0.9, 1.1),
        }
    }
}

/// `"one_phonon"`, `"pdc"` or `"k,q,n/k,q,n"`.
pub fn parse_pair(s: &str) -> Result<PairChoice, CliError> {
    match s.trim() {
        "one_phonon" => Ok(PairChoice::OnePhonon),
        "pdc" => Ok(PairChoice::Pdc),
        other => {
            let bad = || CliError::Config(format!("splitting.pair = {other:?}: expected \"one_phonon\", \"pdc\" or \"k,q,n/k,q,n\""));
            let (a, b) = other.split_once('/').ok_or_else(bad)?;
            let a: FockLabel = a.parse().map_err(|_| bad())?;
            let b: FockLabel = b.parse().map_err(|_| bad())?;
            if a == b {
                return Err(bad());
            }
            Ok(PairChoice::Custom(a, b))
        }
    }
}

/// Working state of one run.
struct Run<'a> {
    cfg: &'a ExperimentConfig,
    protocol: Protocol,
    resolved: BTreeMap<String, f64>,
    warnings: Vec<String>,
    tables: Vec<Table>,
    summary: BTreeMap<String, f64>,
}

impl<'a> Run<'a> {
    fn numerical(&self, e: impl std::fmt::Display) -> CliError {
        CliError::numerical(self.protocol.name(), e)
    }

    fn space(&self) -> Result<HilbertSpace, CliError> {
        let sp = self.cfg.space.clone().unwrap_or_default();
        let c = sp.cutoff.unwrap_or(DEFAULT_CUTOFF);
        make_space(sp.n_cav.unwrap_or(c), sp.n_m1.unwrap_or(c), sp.n_m2.unwrap_or(c))
            .map_err(|e| CliError::Config(format!("space: {e}")))
    }

    /// Parameters with ω₂ taken literally (rules read as ω₂ = ω₁).
    fn template(&self) -> SystemParams {
        let p = self.cfg.params.clone().unwrap_or_default();
        let omega_1 = p.omega_1.unwrap_or(1.0);
        let omega_2 = match p.omega_2 {
            Some(Setting::Value(v)) => v,
            _ => omega_1,
        };
        SystemParams {
            omega_c: p.omega_c.unwrap_or(1.0),
            omega_1,
            omega_2,
            g_1: p.g_1.or(p.g).unwrap_or(0.0),
            g_2: p.g_2.or(p.g).unwrap_or(0.0),
        }
    }

    fn pair(&self) -> Result<PairChoice, CliError> {
        match self.cfg.splitting.as_ref().and_then(|s| s.pair.as_deref()) {
            Some(s) => parse_pair(s),
            None => Ok(PairChoice::OnePhonon),
        }
    }

    fn split_options(&self) -> MinSplittingOptions {
        let s = self.cfg.splitting.clone().unwrap_or_default();
        let d = MinSplittingOptions::default();
        MinSplittingOptions { coarse_points: s.coarse_points.unwrap_or(d.coarse_points), rel_tol: s.rel_tol.unwrap_or(d.rel_tol) }
    }

    fn min_splitting(&mut self, space: HilbertSpace, template: &SystemParams) -> Result<SplittingReport, CliError> {
        let pair = self.pair()?;
        let s = self.cfg.splitting.clone().unwrap_or_default();
        let (lo, hi) = pair.default_bracket(template.g_1.max(template.g_2));
        let bracket = (s.omega_2_lo.unwrap_or(lo), s.omega_2_hi.unwrap_or(hi));
        let rep = find_min_splitting(space, template, &pair.selector(), bracket, self.split_options())
            .map_err(|e| self.numerical(e))?;
        self.resolved.insert("omega_2_min".into(), rep.omega2_min);
        self.resolved.insert("min_gap".into(), rep.gap);
        Ok(rep)
    }

    /// System parameters with every ω₂ rule and offset applied.
    fn system(&mut self, space: HilbertSpace) -> Result<(SystemParams, Option<SplittingReport>), CliError> {
        let template = self.template();
        template.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
        let params = self.cfg.params.clone().unwrap_or_default();
        let (mut omega_2, report) = match params.omega_2 {
            Some(Setting::Rule(_)) => {
                let rep = self.min_splitting(space, &template)?;
                (rep.omega2_min, Some(rep))
            }
            _ => (template.omega_2, None),
        };
        if let Some(off) = params.omega_2_offset {
            omega_2 += off;
        }
        if !(omega_2 > 0.0) {
            return Err(CliError::Config(format!("resolved omega_2 = {omega_2} must be positive")));
        }
        self.resolved.insert("omega_2".into(), omega_2);
        Ok((template.with_omega_2(omega_2), report))
    }

    fn tolerances(&self) -> Tolerances {
        let n = self.cfg.numeric.clone().unwrap_or_default();
        let d = Tolerances::default();
        Tolerances { rtol: n.rtol.unwrap_or(d.rtol), atol: n.atol.unwrap_or(d.atol), max_steps: n.max_steps.unwrap_or(d.max_steps) }
    }

    fn sum_cutoff(&self) -> usize {
        self.cfg.perturbation.as_ref().and_then(|p| p.sum_cutoff).unwrap_or(DEFAULT_SUM_CUTOFF)
    }
}

/// Runs the protocol of a validated config. `ci` only marks the archive; the
/// caller applies CI limits to the config beforehand so they are echoed.
pub fn run_protocol(cfg: &ExperimentConfig, ci: bool) -> Result<ResultArchive, CliError> {
    let warnings = cfg.validate()?;
    let protocol = cfg.protocol()?;
    let mut run = Run { cfg, protocol, resolved: BTreeMap::new(), warnings, tables: Vec::new(), summary: BTreeMap::new() };
    match protocol {
        Protocol::SpectrumSweep => spectrum_sweep(&mut run)?,
        Protocol::MinSplitting => min_splitting(&mut run)?,
        Protocol::SplittingVsG => splitting_vs_g(&mut run)?,
        Protocol::PerturbationTables => perturbation_tables(&mut run)?,
        Protocol::CwDynamics | Protocol::PulsedDynamics | Protocol::PdcDynamics | Protocol::NonadiabaticTransfer => {
            dynamics(&mut run)?
        }
        Protocol::PlatformEstimate => platform(&mut run)?,
    }
    for w in &run.warnings {
        log::warn!("{w}");
    }
    Ok(ResultArchive {
        metadata: Metadata {
            protocol: protocol.name().into(),
            config: cfg.to_toml(),
            config_hash: cfg.hash8(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            ci,
            warnings: run.warnings,
            resolved: run.resolved,
        },
        tables: run.tables,
        summary: run.summary,
    })
}

fn text(s: impl Into<String>) -> Option<Cell> {
    Some(Cell::Text(s.into()))
}

fn num(x: f64) -> Option<Cell> {
    x.is_finite().then_some(Cell::Num(x))
}

fn splitting_table_of(rep: &SplittingReport) -> Table {
    let h = &rep.hybridization_check;
    let mut t = Table::new(
        "splitting",
        "minimum splitting of the selected level pair",
        vec![
            Column::new("omega_2_min", E),
            Column::new("gap", E),
            Column::new("lower_index", ONE),
            Column::new("upper_index", ONE),
            Column::new("lower_energy", E),
            Column::new("upper_energy", E),
            Column::new("reference_a", "k,q,n"),
            Column::new("reference_b", "k,q,n"),
            Column::new("hybridization", ONE),
        ],
    );
    t.push_row(vec![
        num(rep.omega2_min),
        num(rep.gap),
        num(rep.level_pair.0 as f64),
        num(rep.level_pair.1 as f64),
        num(rep.pair_energies.0),
        num(rep.pair_energies.1),
        text(h.reference.0.to_string()),
        text(h.reference.1.to_string()),
        num(h.best()),
    ]);
    t
}

fn record_splitting(run: &mut Run, rep: &SplittingReport) {
    run.summary.insert("omega_2_min".into(), rep.omega2_min);
    run.summary.insert("gap".into(), rep.gap);
    run.summary.insert("lambda".into(), rep.gap / 2.0);
    run.summary.insert("hybridization".into(), rep.hybridization_check.best());
    run.tables.push(splitting_table_of(rep));
}

fn spectrum_sweep(run: &mut Run) -> Result<(), CliError> {
    let space = run.space()?;
    let (p, report) = run.system(space)?;
    let sw = run.cfg.sweep.clone().unwrap_or_default();
    let (lo, hi) = (sw.omega_2_min.unwrap_or(0.9), sw.omega_2_max.unwrap_or(1.1));
    let n = sw.points.unwrap_or(DEFAULT_SWEEP_POINTS);
    let levels = sw.levels.unwrap_or(DEFAULT_SWEEP_LEVELS);
    if n < 2 || !(hi > lo) {
        return Err(CliError::Config(format!("sweep: need omega_2_max > omega_2_min and points >= 2 (got [{lo}, {hi}], {n})")));
    }
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let res = sweep_levels(space, &p, &grid, levels).map_err(|e| run.numerical(e))?;
    run.warnings.extend(res.warnings.iter().cloned());

    let m = res.level_curves.ncols();
    let mut cols = vec![Column::new("omega_2", E)];
    cols.extend((1..=m).map(|j| Column::new(format!("E{j}-E0"), E)));
    let mut by_energy = Table::new("levels", "levels E_j - E_0 in energy order", cols.clone());
    let mut tracked = Table::new("tracked_levels", "levels E - E_0 following adiabatic labels", cols);
    let tc = res.tracked_curves();
    for (i, &w) in grid.iter().enumerate() {
        by_energy.push_numbers(std::iter::once(Some(w)).chain(res.level_curves.row(i).iter().map(|&x| Some(x))));
        tracked.push_numbers(std::iter::once(Some(w)).chain(tc.row(i).iter().map(|&x| Some(x))));
    }
    let mut labels = Table::new(
        "level_labels",
        "dominant bare state of each tracked level at the first sweep point",
        vec![Column::new("label", ONE), Column::new("bare_state", "k,q,n")],
    );
    for (j, l) in res.initial_labels.iter().enumerate().skip(1) {
        labels.push_row(vec![num(j as f64), text(l.to_string())]);
    }
    run.tables.extend([by_energy, tracked, labels]);
    let worst = res.step_overlaps.iter().copied().fold(1.0, f64::min);
    run.summary.insert("min_tracking_overlap".into(), worst);

    // A [splitting] section adds the minimum of the selected pair.
    let rep = match report {
        Some(r) => Some(r),
        None if run.cfg.splitting.is_some() => {
            let t = run.template();
            Some(run.min_splitting(space, &t)?)
        }
        None => None,
    };
    if let Some(rep) = rep {
        record_splitting(run, &rep);
    }
    Ok(())
}

fn min_splitting(run: &mut Run) -> Result<(), CliError> {
    let space = run.space()?;
    let template = run.template();
    template.validate().map_err(|e| CliError::Config(format!("params: {e}")))?;
    let rep = run.min_splitting(space, &template)?;
    record_splitting(run, &rep);
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn splitting_vs_g(run: &mut Run) -> Result<(), CliError> {
    let space = run.space()?;
    let template = run.template();
    let scan = run.cfg.coupling_scan.clone().unwrap_or_default();
    let mut g = scan.g_values.unwrap_or_default();
    g.sort_by(f64::total_cmp);
    g.dedup();
    let list: Vec<SystemParams> = g.iter().map(|&x| template.with_coupling(x)).collect();
    let rows = compare_perturbation_vs_numerics(space, &list, run.sum_cutoff(), run.split_options())
        .map_err(|e| run.numerical(e))?;
    let mut t = Table::new(
        "coupling_scan",
        "one-phonon minimum splitting versus coupling: numerics and effective theory",
        vec![
            Column::new("g", E),
            Column::new("omega_2_min", E),
            Column::new("numerical_gap", E),
            Column::new("theoretical_gap", E),
            Column::new("relative_deviation", ONE),
        ],
    );
    for r in &rows {
        t.push_numbers([Some(r.g), Some(r.omega2_min), Some(r.numerical_gap), Some(r.theoretical_gap), Some(r.relative_deviation)]);
    }
    run.tables.push(t);
    let fit_max = scan.fit_max_g.unwrap_or(DEFAULT_FIT_MAX_G);
    let fit = |f: fn(&optomech::perturbation::ComparisonRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.g <= fit_max * (1.0 + 1e-12)).map(|r| (r.g, f(r))).collect();
        log_log_slope(&pts)
    };
    if let Some(s) = fit(|r| r.numerical_gap) {
        run.summary.insert("exponent_numerical".into(), s);
    }
    if let Some(s) = fit(|r| r.theoretical_gap) {
        run.summary.insert("exponent_theoretical".into(), s);
    }
    let worst = rows.iter().map(|r| r.relative_deviation).fold(0.0, f64::max);
    run.summary.insert("max_relative_deviation".into(), worst);
    Ok(())
}

fn comparison_table(name: &str, description: &str, rows: &[optomech::perturbation::TableRow]) -> Table {
    let mut t = Table::new(
        name,
        description,
        vec![
            Column::new("quantity", ONE),
            Column::new("numerical", E),
            Column::new("theoretical", E),
            Column::new("relative_deviation", ONE),
        ],
    );
    for r in rows {
        t.push_row(vec![
            text(r.quantity),
            num(r.numerical),
            num(r.theoretical),
            num((r.theoretical - r.numerical).abs() / r.numerical.abs()),
        ]);
    }
    t
}

fn perturbation_tables(run: &mut Run) -> Result<(), CliError> {
    let space = run.space()?;
    let (p, _) = run.system(space)?;
    let cutoff = run.sum_cutoff();
    let split = splitting_table(space, &p, cutoff).map_err(|e| run.numerical(e))?;
    let shift_w2 = run.cfg.perturbation.as_ref().and_then(|x| x.omega_2_shift).unwrap_or(DEFAULT_SHIFT_OMEGA_2);
    run.resolved.insert("omega_2_shift".into(), shift_w2);
    let shifts = shift_table(space, &p.with_omega_2(shift_w2), cutoff).map_err(|e| run.numerical(e))?;
    for r in split.iter().chain(&shifts) {
        run.summary.insert(format!("{}_numerical", r.quantity), r.numerical);
        run.summary.insert(format!("{}_theoretical", r.quantity), r.theoretical);
    }
    run.tables.push(comparison_table("splittings", "splittings at resonance: exact diagonalization and effective Hamiltonian", &split));
    run.tables.push(comparison_table("shifts", "zero-photon level shifts off resonance: exact and effective theory", &shifts));
    Ok(())
}

fn platform(run: &mut Run) -> Result<(), CliError> {
    let pl = run.cfg.platform.clone().unwrap_or_default();
    let (g_m, g_c) = (pl.g_m.unwrap_or(0.0), pl.g_c.unwrap_or(0.0));
    let detuning = match (pl.detuning, pl.detuning_over_g_c) {
        (Some(d), _) => d,
        (None, Some(r)) => r * g_c,
        (None, None) => unreachable!("validated"),
    };
    let g = platform_coupling_estimate(g_m, g_c, detuning).map_err(|e| CliError::Config(format!("platform: {e}")))?;
    let mut t = Table::new(
        "platform",
        "optomechanical coupling induced through a dispersively coupled qubit",
        vec![Column::new("g_m", E), Column::new("g_c", E), Column::new("detuning", E), Column::new("g", E)],
    );
    t.push_numbers([Some(g_m), Some(g_c), Some(detuning), Some(g)]);
    run.tables.push(t);
    run.summary.insert("g".into(), g);
    Ok(())
}

/// Baths from `[baths]`; unspecified rates are zero.
fn baths(run: &Run) -> BathSpec {
    let b = run.cfg.baths.clone().unwrap_or_default();
    let gamma_1 = b.gamma_1.or(b.gamma).unwrap_or(0.0);
    let gamma_2 = b.gamma_2.or(b.gamma).unwrap_or(0.0);
    let kappa = b.kappa.or(b.kappa_over_gamma.map(|r| r * gamma_1)).unwrap_or(0.0);
    BathSpec { gamma_1, gamma_2, kappa, temperature: b.temperature.unwrap_or(0.0) }
}

fn drive(run: &mut Run, eig: &EigenSystem, baths: &BathSpec) -> Result<DriveSpec, CliError> {
    let d = run.cfg.drive.clone().unwrap_or_default();
    let default_kind = match run.protocol {
        Protocol::PulsedDynamics => DriveKindCfg::Gaussian,
        Protocol::CwDynamics | Protocol::PdcDynamics => DriveKindCfg::Continuous,
        _ => DriveKindCfg::None,
    };
    let kind = d.kind.unwrap_or(default_kind);
    if kind == DriveKindCfg::None {
        return Ok(DriveSpec::none());
    }
    let target = match d.target.unwrap_or(DriveTargetCfg::Mirror1) {
        DriveTargetCfg::Mirror1 => DriveTarget::Mirror1,
        DriveTargetCfg::Mirror2 => DriveTarget::Mirror2,
    };
    let amplitude = match (d.amplitude, d.amplitude_over_gamma, d.amplitude_over_pi) {
        (Some(a), _, _) => a,
        (None, Some(r), _) => r * baths.gamma_1,
        (None, None, Some(r)) => r * PI,
        _ => return Err(CliError::Config(format!("protocol `{}` is missing required field(s): drive.amplitude", run.protocol))),
    };
    // Pair used by the `pair_center` and `auto` rules, at the resolved ω₂.
    let pair = run.pair()?;
    let (j, k) = pair.selector().select(eig).map_err(|e| run.numerical(e))?;
    let gap = eig.energies[k] - eig.energies[j];
    run.resolved.insert("pair_gap".into(), gap);
    let omega_d = match d.omega_d {
        Some(Setting::Value(w)) => w,
        Some(Setting::Rule(_)) => (eig.energies[j] + eig.energies[k]) / 2.0 - eig.energies[0],
        None => return Err(CliError::Config(format!("protocol `{}` is missing required field(s): drive.omega_d", run.protocol))),
    };
    run.resolved.insert("omega_d".into(), omega_d);
    run.resolved.insert("amplitude".into(), amplitude);
    if kind == DriveKindCfg::Continuous {
        return Ok(DriveSpec::continuous(target, amplitude, omega_d));
    }
    let sigma = match d.sigma {
        Some(Setting::Value(s)) => s,
        // σ = 1/(10λ) with λ half the pair splitting.
        _ => 1.0 / (10.0 * gap / 2.0),
    };
    let t0 = match d.t0 {
        Some(Setting::Value(t)) => t,
        _ => 6.0 * sigma,
    };
    run.resolved.insert("sigma".into(), sigma);
    run.resolved.insert("t0".into(), t0);
    Ok(DriveSpec::gaussian_pulse(target, amplitude, omega_d, t0, sigma))
}

fn modulation(run: &Run) -> Result<Option<ModulationSpec>, CliError> {
    let m = run.cfg.modulation.clone().unwrap_or_default();
    let Some(delta) = m.delta else { return Ok(None) };
    let omega_s = m
        .omega_s
        .ok_or_else(|| CliError::Config("modulation.delta is set but modulation.omega_s is missing".into()))?;
    Ok(Some(ModulationSpec { delta, t0: m.t0.unwrap_or(0.0), t_f: m.t_f, omega_s }))
}

fn dynamics(run: &mut Run) -> Result<(), CliError> {
    let space = run.space()?;
    let (p, _) = run.system(space)?;
    let eig = diagonalize_system(space, &p).map_err(|e| run.numerical(e))?;
    let baths = baths(run);
    let drive = drive(run, &eig, &baths)?;
    let modulation = modulation(run)?;
    let dy = run.cfg.dynamics.clone().unwrap_or_default();
    let retention = Retention { energy_window: Some(dy.energy_window.unwrap_or(DEFAULT_ENERGY_WINDOW)), max_levels: dy.max_levels };
    let mut setup = build_master_equation(&eig, &baths, retention)
        .and_then(|s| s.with_drive(drive))
        .map_err(|e| run.numerical(e))?;
    if let Some(m) = modulation {
        setup = setup.with_modulation(m).map_err(|e| run.numerical(e))?;
    }
    let d = setup.retained;
    run.summary.insert("retained_levels".into(), d as f64);

    let initial: InitialState = dy
        .initial
        .as_deref()
        .unwrap_or("thermal")
        .parse()
        .map_err(|e| CliError::Config(format!("dynamics.initial: {e}")))?;
    let rho0 = initial.prepare(&eig, baths.temperature, d).map_err(|e| run.numerical(e))?;

    let t_end = dy.t_end.unwrap_or(0.0);
    let samples = dy.samples.unwrap_or(DEFAULT_SAMPLES);
    let times: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
    let mut population_indices = dy.population_indices.unwrap_or_else(|| vec![0, 1, 2, 3]);
    population_indices.retain(|&j| {
        let keep = j < d;
        if !keep {
            run.warnings.push(format!("population index {j} outside the {d} retained levels; dropped"));
        }
        keep
    });
    let opts = EvolveOptions {
        tolerances: run.tolerances(),
        population_indices,
        negativity: dy.negativity.unwrap_or(false),
        positivity_check: true,
    };
    let tr = evolve(&setup, &rho0, &times, &opts).map_err(|e| run.numerical(e))?;
    run.warnings.extend(tr.diagnostics.warnings.iter().cloned());
    dynamics_tables(run, &eig, &tr, d);

    if run.protocol == Protocol::PulsedDynamics {
        let start = match dy.fft_start {
            Some(Setting::Value(t)) => t,
            _ => drive.t0 + 6.0 * drive.sigma,
        };
        fft_tables(run, &tr, start)?;
    }
    Ok(())
}

fn dynamics_tables(run: &mut Run, eig: &EigenSystem, tr: &TrajectoryResult, retained: usize) {
    let mut cols = vec![
        Column::new("t", T),
        Column::new("n_b1", N),
        Column::new("n_b2", N),
        Column::new("n_a", N),
        Column::new("g2_1", ONE),
        Column::new("g2_2", ONE),
    ];
    if tr.negativity.is_some() {
        cols.push(Column::new("log_negativity", ONE));
    }
    let mut dyn_t = Table::new("dynamics", "dressed mean occupations and equal-time g2 of the mirrors", cols);
    for i in 0..tr.times.len() {
        let mut row = vec![Some(tr.times[i]), Some(tr.n_b1[i]), Some(tr.n_b2[i]), Some(tr.n_a[i]), tr.g2_1[i], tr.g2_2[i]];
        if let Some(neg) = &tr.negativity {
            row.push(Some(neg[i]));
        }
        dyn_t.push_numbers(row);
    }
    let mut cols = vec![Column::new("t", T)];
    cols.extend(tr.population_indices.iter().map(|j| Column::new(format!("P{j}"), ONE)));
    let mut pop = Table::new("populations", "populations of energy eigenstates (index 0 = ground)", cols);
    for (t, p) in tr.times.iter().zip(&tr.populations) {
        pop.push_numbers(std::iter::once(Some(*t)).chain(p.iter().map(|&x| Some(x))));
    }
    let mut levels = Table::new(
        "eigenstates",
        "lowest eigenstates of the static Hamiltonian",
        vec![Column::new("index", ONE), Column::new("energy", E), Column::new("dominant_bare_state", "k,q,n")],
    );
    for j in 0..retained.min(LISTED_EIGENSTATES) {
        levels.push_row(vec![num(j as f64), num(eig.energies[j] - eig.energies[0]), text(eig.dominant_label(j).to_string())]);
    }
    run.tables.extend([dyn_t, pop, levels]);

    let last = tr.times.len() - 1;
    let s = &mut run.summary;
    s.insert("n_b1_final".into(), tr.n_b1[last]);
    s.insert("n_b2_final".into(), tr.n_b2[last]);
    s.insert("n_a_initial".into(), tr.n_a[0]);
    s.insert("n_a_final".into(), tr.n_a[last]);
    s.insert("n_b1_peak".into(), tr.n_b1.iter().copied().fold(0.0, f64::max));
    s.insert("n_b2_peak".into(), tr.n_b2.iter().copied().fold(0.0, f64::max));
    s.insert("max_trace_error".into(), tr.diagnostics.max_trace_error);
    s.insert("min_eigenvalue".into(), tr.diagnostics.min_eigenvalue);
    s.insert("accepted_steps".into(), tr.diagnostics.accepted_steps as f64);
}

fn fft_tables(run: &mut Run, tr: &TrajectoryResult, start: f64) -> Result<(), CliError> {
    let first = tr.times.iter().position(|&t| t >= start - 1e-9).unwrap_or(tr.times.len());
    if tr.times.len() - first < 4 {
        return Err(CliError::Config(format!(
            "dynamics.fft_start = {start} leaves fewer than 4 samples before t_end = {}",
            tr.times.last().copied().unwrap_or(0.0)
        )));
    }
    run.resolved.insert("fft_start".into(), tr.times[first]);
    let times = &tr.times[first..];
    let s1 = fft_signal(times, &tr.n_b1[first..]).map_err(|e| run.numerical(e))?;
    let s2 = fft_signal(times, &tr.n_b2[first..]).map_err(|e| run.numerical(e))?;
    let mut t = Table::new(
        "fft",
        "one-sided amplitude spectra |X_k|/N of the mirror occupations after the pulse",
        vec![Column::new("omega", E), Column::new("n_b1", N), Column::new("n_b2", N)],
    );
    for k in 0..s1.frequencies.len() {
        t.push_numbers([Some(s1.frequencies[k]), Some(s1.magnitudes[k]), Some(s2.magnitudes[k])]);
    }
    let mut peaks = Table::new(
        "fft_peaks",
        "strongest local maxima of the n_b1 spectrum above zero frequency",
        vec![Column::new("rank", ONE), Column::new("omega", E), Column::new("magnitude", N), Column::new("bin", ONE)],
    );
    for (r, (w, m)) in s1.peaks().into_iter().take(8).enumerate() {
        peaks.push_numbers([Some(r as f64), Some(w), Some(m), Some(s1.bin_of(w) as f64)]);
    }
    if let Some(&(w, _)) = s1.peaks().first() {
        run.summary.insert("fft_dominant_peak".into(), w);
    }
    run.summary.insert("fft_bin_width".into(), s1.bin_width);
    run.tables.extend([t, peaks]);
    Ok(())
}
