//! Experiment configuration: a sectioned TOML file, validated per protocol.
//!
//! Every frequency, rate, temperature and time is in units of ω₁ (ħ = k_B = 1).

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Protocol {
    SpectrumSweep,
    MinSplitting,
    SplittingVsG,
    PerturbationTables,
    CwDynamics,
    PulsedDynamics,
    PdcDynamics,
    NonadiabaticTransfer,
    PlatformEstimate,
}

impl Protocol {
    pub const ALL: [Protocol; 9] = [
        Protocol::SpectrumSweep,
        Protocol::MinSplitting,
        Protocol::SplittingVsG,
        Protocol::PerturbationTables,
        Protocol::CwDynamics,
        Protocol::PulsedDynamics,
        Protocol::PdcDynamics,
        Protocol::NonadiabaticTransfer,
        Protocol::PlatformEstimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::SpectrumSweep => "spectrum_sweep",
            Protocol::MinSplitting => "min_splitting",
            Protocol::SplittingVsG => "splitting_vs_g",
            Protocol::PerturbationTables => "perturbation_tables",
            Protocol::CwDynamics => "cw_dynamics",
            Protocol::PulsedDynamics => "pulsed_dynamics",
            Protocol::PdcDynamics => "pdc_dynamics",
            Protocol::NonadiabaticTransfer => "nonadiabatic_transfer",
            Protocol::PlatformEstimate => "platform_estimate",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Protocol::SpectrumSweep => "energy levels E_j - E_0 versus omega_2 with adiabatic labels",
            Protocol::MinSplitting => "minimum splitting of a level pair and the omega_2 where it occurs",
            Protocol::SplittingVsG => "one-phonon splitting versus coupling, numerics against effective theory",
            Protocol::PerturbationTables => "splittings and level shifts, exact against effective Hamiltonians",
            Protocol::CwDynamics => "master-equation dynamics under a continuous drive",
            Protocol::PulsedDynamics => "master-equation dynamics after a Gaussian pulse, with FFT",
            Protocol::PdcDynamics => "driven phonon down-conversion near omega_2 = omega_1/2",
            Protocol::NonadiabaticTransfer => "state transfer after a fast frequency step of mirror 2",
            Protocol::PlatformEstimate => "optomechanical coupling of a circuit platform",
        }
    }

    fn needs_system(self) -> bool {
        self != Protocol::PlatformEstimate
    }

    fn is_dynamics(self) -> bool {
        matches!(
            self,
            Protocol::CwDynamics | Protocol::PulsedDynamics | Protocol::PdcDynamics | Protocol::NonadiabaticTransfer
        )
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A number, or the name of a rule that derives it from the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Setting {
    Value(f64),
    Rule(String),
}

impl Setting {
    fn check(&self, field: &str, rules: &[&str]) -> Result<(), CliError> {
        match self {
            Setting::Value(v) if v.is_finite() => Ok(()),
            Setting::Value(v) => Err(CliError::Config(format!("{field} = {v} is not finite"))),
            Setting::Rule(r) if rules.contains(&r.as_str()) => Ok(()),
            Setting::Rule(r) => Err(CliError::Config(format!(
                "{field} = {r:?} is not a number or one of the rules {}",
                rules.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    /// Defaults to 1 (the unit).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_1: Option<f64>,
    /// Number, or `"min_gap"` for the minimum splitting of `[splitting].pair`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2: Option<Setting>,
    /// Added to the resolved ω₂.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_offset: Option<f64>,
    /// Shorthand for equal `g_1 = g_2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_2: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// Sets all three cutoffs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_cav: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_m1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_m2: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathsSection {
    /// Sets both mirror rates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// `κ = kappa_over_gamma · γ₁`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_over_gamma: Option<f64>,
    /// `k_B T / ω₁`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveTargetCfg {
    Mirror1,
    Mirror2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveKindCfg {
    None,
    Continuous,
    Gaussian,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<DriveTargetCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<DriveKindCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Amplitude in units of `γ₁`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_over_gamma: Option<f64>,
    /// Pulse area in units of π.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_over_pi: Option<f64>,
    /// Number or `"pair_center"` (midpoint of the selected pair above E₀).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_d: Option<Setting>,
    /// Pulse centre; number or `"auto"` (six widths).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<Setting>,
    /// Pulse width; number or `"auto"` (`1/(10λ)` with `λ` half the pair gap).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Setting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingSection {
    /// `"one_phonon"`, `"pdc"` or two bare labels `"k,q,n/k,q,n"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coarse_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_values: Option<Vec<f64>>,
    /// Couplings up to this value enter the `λ ∝ g^p` fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_max_g: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sum_cutoff: Option<usize>,
    /// ω₂ of the off-resonant point for the level-shift table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_2_shift: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Number of uniformly spaced output samples including `t = 0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// `thermal`, `ground`, `index:J`, `eigen:k,q,n[+k,q,n…]` or `bare:k,q,n`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    /// Keep eigenstates with `E − E₀` at most this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_levels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population_indices: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negativity: Option<bool>,
    /// Start of the FFT window: number or `"after_pulse"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fft_start: Option<Setting>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    /// Detuning in units of `g_c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_over_g_c: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Also write `archive.json` (default true).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub json: Option<bool>,
    /// Also write gnuplot `.dat` files (default true).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baths: Option<BathsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ModulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling_scan: Option<CouplingScanSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub platform: Option<PlatformSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Parses config text (unvalidated).
pub fn parse_str(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.message().trim().to_string() + &span_hint(text, e.span())))
}

fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].matches('\n').count() + 1;
            format!(" (line {line})")
        }
        None => String::new(),
    }
}

/// Parses config text and applies `key.path=value` overrides on top.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    if overrides.is_empty() {
        return parse_str(text);
    }
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::Config(e.message().trim().to_string() + &span_hint(text, e.span())))?;
    for ov in overrides {
        let (path, raw) = ov
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {ov:?} is not of the form key=value")))?;
        let value = parse_override_value(raw.trim());
        set_path(&mut table, path.trim(), value)?;
    }
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.message().trim().to_string()))
}

fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {path:?} is malformed")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {path:?}: `{part}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// First eight hex digits of the SHA-256 of the canonical text.
    pub fn hash8(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }

    /// Sets the protocol from the command line; a different value in the file
    /// is overridden with a warning.
    pub fn with_protocol(mut self, protocol: Protocol, warnings: &mut Vec<String>) -> Self {
        if let Some(p) = self.protocol {
            if p != protocol {
                warnings.push(format!("config protocol `{p}` overridden by command `{protocol}`"));
            }
        }
        self.protocol = Some(protocol);
        self
    }

    pub fn protocol(&self) -> Result<Protocol, CliError> {
        self.protocol.ok_or_else(|| {
            CliError::Config(
                "missing required field `protocol` (and, for every protocol except platform_estimate, \
                 `params.omega_c` and `params.g`)"
                    .into(),
            )
        })
    }

    /// Checks required fields and value ranges; returns warnings for values
    /// that look like they are not in units of ω₁.
    pub fn validate(&self) -> Result<Vec<String>, CliError> {
        let protocol = self.protocol()?;
        let mut missing = BTreeSet::new();
        let mut warnings = Vec::new();
        let params = self.params.clone().unwrap_or_default();
        if protocol.needs_system() {
            if params.omega_c.is_none() {
                missing.insert("params.omega_c");
            }
            if params.g.is_none() && (params.g_1.is_none() || params.g_2.is_none()) {
                missing.insert("params.g");
            }
        }
        let baths = self.baths.clone().unwrap_or_default();
        let drive = self.drive.clone().unwrap_or_default();
        let dynamics = self.dynamics.clone().unwrap_or_default();
        let modulation = self.modulation.clone().unwrap_or_default();
        if protocol.is_dynamics() {
            if dynamics.t_end.is_none() {
                missing.insert("dynamics.t_end");
            }
        }
        let needs_drive = matches!(protocol, Protocol::CwDynamics | Protocol::PulsedDynamics | Protocol::PdcDynamics);
        if needs_drive {
            if baths.gamma.is_none() && baths.gamma_1.is_none() {
                missing.insert("baths.gamma");
            }
            if drive.amplitude.is_none() && drive.amplitude_over_gamma.is_none() && drive.amplitude_over_pi.is_none() {
                missing.insert("drive.amplitude");
            }
            if drive.omega_d.is_none() {
                missing.insert("drive.omega_d");
            }
        }
        if protocol == Protocol::PulsedDynamics && drive.sigma.is_none() {
            missing.insert("drive.sigma");
        }
        match protocol {
            Protocol::SpectrumSweep => {
                let sw = self.sweep.clone().unwrap_or_default();
                if sw.omega_2_min.is_none() {
                    missing.insert("sweep.omega_2_min");
                }
                if sw.omega_2_max.is_none() {
                    missing.insert("sweep.omega_2_max");
                }
            }
            Protocol::SplittingVsG => {
                if self.coupling_scan.as_ref().and_then(|c| c.g_values.as_ref()).is_none() {
                    missing.insert("coupling_scan.g_values");
                }
            }
            Protocol::NonadiabaticTransfer => {
                for (name, v) in [
                    ("modulation.delta", modulation.delta),
                    ("modulation.t0", modulation.t0),
                    ("modulation.omega_s", modulation.omega_s),
                ] {
                    if v.is_none() {
                        missing.insert(name);
                    }
                }
                if dynamics.initial.is_none() {
                    missing.insert("dynamics.initial");
                }
            }
            Protocol::PlatformEstimate => {
                let pl = self.platform.clone().unwrap_or_default();
                if pl.g_m.is_none() {
                    missing.insert("platform.g_m");
                }
                if pl.g_c.is_none() {
                    missing.insert("platform.g_c");
                }
                if pl.detuning.is_none() && pl.detuning_over_g_c.is_none() {
                    missing.insert("platform.detuning");
                }
            }
            _ => {}
        }
        if !missing.is_empty() {
            return Err(CliError::Config(format!(
                "protocol `{protocol}` is missing required field(s): {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )));
        }

        // Value checks.
        let nonneg = |name: &str, v: Option<f64>| -> Result<(), CliError> {
            match v {
                Some(x) if !(x.is_finite() && x >= 0.0) => Err(CliError::Config(format!("{name} = {x} must be finite and >= 0"))),
                _ => Ok(()),
            }
        };
        let positive = |name: &str, v: Option<f64>| -> Result<(), CliError> {
            match v {
                Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::Config(format!("{name} = {x} must be finite and > 0"))),
                _ => Ok(()),
            }
        };
        for (name, v) in [("params.g", params.g), ("params.g_1", params.g_1), ("params.g_2", params.g_2)] {
            nonneg(name, v)?;
            if let Some(x) = v {
                if x > 0.5 {
                    warnings.push(format!("{name} = {x} exceeds 0.5; all couplings are in units of omega_1"));
                }
            }
        }
        positive("params.omega_c", params.omega_c)?;
        positive("params.omega_1", params.omega_1)?;
        if let Some(w) = params.omega_c {
            if w > 10.0 {
                warnings.push(format!("params.omega_c = {w} is large; frequencies are in units of omega_1"));
            }
        }
        if let Some(s) = &params.omega_2 {
            s.check("params.omega_2", &["min_gap"])?;
            if let Setting::Value(v) = s {
                positive("params.omega_2", Some(*v))?;
            }
        }
        for (name, v) in [
            ("baths.gamma", baths.gamma),
            ("baths.gamma_1", baths.gamma_1),
            ("baths.gamma_2", baths.gamma_2),
            ("baths.kappa", baths.kappa),
            ("baths.kappa_over_gamma", baths.kappa_over_gamma),
            ("baths.temperature", baths.temperature),
        ] {
            nonneg(name, v)?;
        }
        if let Some(s) = &drive.omega_d {
            s.check("drive.omega_d", &["pair_center"])?;
        }
        if let Some(s) = &drive.t0 {
            s.check("drive.t0", &["auto"])?;
        }
        if let Some(s) = &drive.sigma {
            s.check("drive.sigma", &["auto"])?;
        }
        if let Some(s) = &dynamics.fft_start {
            s.check("dynamics.fft_start", &["after_pulse"])?;
        }
        positive("dynamics.t_end", dynamics.t_end)?;
        positive("dynamics.energy_window", dynamics.energy_window)?;
        if let Some(init) = &dynamics.initial {
            init.parse::<optomech::dynamics::InitialState>()
                .map_err(|e| CliError::Config(format!("dynamics.initial: {e}")))?;
        }
        if let Some(n) = dynamics.samples {
            if n < 2 {
                return Err(CliError::Config(format!("dynamics.samples = {n} must be at least 2")));
            }
        }
        if let Some(pair) = self.splitting.as_ref().and_then(|s| s.pair.as_ref()) {
            crate::protocols::parse_pair(pair)?;
        }
        if let Some(sp) = &self.space {
            for (name, v) in [("space.cutoff", sp.cutoff), ("space.n_cav", sp.n_cav), ("space.n_m1", sp.n_m1), ("space.n_m2", sp.n_m2)] {
                if let Some(n) = v {
                    if n < 2 {
                        return Err(CliError::Config(format!("{name} = {n} must be at least 2")));
                    }
                }
            }
        }
        if let Some(num) = &self.numeric {
            positive("numeric.rtol", num.rtol)?;
            positive("numeric.atol", num.atol)?;
        }
        if let Some(g) = self.coupling_scan.as_ref().and_then(|c| c.g_values.as_ref()) {
            if g.is_empty() || g.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(CliError::Config("coupling_scan.g_values must be non-empty and positive".into()));
            }
        }
        Ok(warnings)
    }

    /// Shrinks grids and time spans for quick smoke runs.
    pub fn apply_ci_limits(&mut self) {
        if let Some(sw) = self.sweep.as_mut() {
            sw.points = Some(sw.points.unwrap_or(201).min(21));
        }
        if let Some(sp) = self.splitting.as_mut() {
            sp.coarse_points = Some(sp.coarse_points.unwrap_or(21).min(11));
            sp.rel_tol = Some(sp.rel_tol.unwrap_or(1e-6).max(1e-4));
        }
        if let Some(cs) = self.coupling_scan.as_mut() {
            if let Some(g) = cs.g_values.as_mut() {
                g.truncate(3);
            }
        }
        if let Some(d) = self.dynamics.as_mut() {
            d.t_end = d.t_end.map(|t| t.min(300.0));
            d.samples = Some(d.samples.unwrap_or(501).min(101));
        }
    }
}
