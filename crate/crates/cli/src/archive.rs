//! Result archives: commented CSV tables, a JSON mirror and gnuplot data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Units line written at the top of every CSV and `.dat` file.
pub const UNITS_NOTE: &str =
    "units: frequencies, energies, rates and temperatures in omega_1 (hbar = k_B = 1); times in 1/omega_1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub unit: String,
}

impl Column {
    pub fn new(name: impl Into<String>, unit: impl Into<String>) -> Self {
        Self { name: name.into(), unit: unit.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub description: String,
    pub columns: Vec<Column>,
    /// `None` marks an undefined value (e.g. g² of an empty mode).
    pub rows: Vec<Vec<Option<Cell>>>,
}

impl Table {
    pub fn new(name: &str, description: &str, columns: Vec<Column>) -> Self {
        Self { name: name.into(), description: description.into(), columns, rows: Vec::new() }
    }

    /// Appends a numeric row; non-finite values become `None`.
    pub fn push_numbers(&mut self, values: impl IntoIterator<Item = Option<f64>>) {
        let row: Vec<Option<Cell>> =
            values.into_iter().map(|v| v.filter(|x| x.is_finite()).map(Cell::Num)).collect();
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_row(&mut self, row: Vec<Option<Cell>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Numeric column by name (`NaN` where undefined).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j].as_ref().and_then(Cell::as_f64).unwrap_or(f64::NAN)).collect())
    }

    /// Value of column `value` in the row whose text column `key` equals `key_value`.
    pub fn lookup(&self, key: &str, key_value: &str, value: &str) -> Option<f64> {
        let (k, v) = (self.column_index(key)?, self.column_index(value)?);
        self.rows
            .iter()
            .find(|r| matches!(&r[k], Some(Cell::Text(s)) if s == key_value))
            .and_then(|r| r[v].as_ref().and_then(Cell::as_f64))
    }

    /// CSV text with `#` comment headers.
    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        out.push_str(&format!("# table: {}\n# {}\n# {UNITS_NOTE}\n", self.name, self.description));
        for c in &self.columns {
            out.push_str(&format!("# column {}: {}\n", c.name, c.unit));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))
            .map_err(|e| CliError::Io(e.to_string()))?;
        for row in &self.rows {
            w.write_record(row.iter().map(format_cell)).map_err(|e| CliError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv output is UTF-8"));
        Ok(out)
    }
}

fn format_cell(c: &Option<Cell>) -> String {
    match c {
        Some(Cell::Num(x)) => format!("{x:.12e}"),
        Some(Cell::Text(s)) => s.clone(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub protocol: String,
    /// Canonical config text; parses back to the config that was run.
    pub config: String,
    pub config_hash: String,
    pub code_version: String,
    pub created_unix: u64,
    pub ci: bool,
    pub warnings: Vec<String>,
    /// Values derived from rules in the config (e.g. `omega_2 = "min_gap"`).
    pub resolved: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultArchive {
    pub metadata: Metadata,
    pub tables: Vec<Table>,
    /// Headline scalars, all in units of ω₁.
    pub summary: BTreeMap<String, f64>,
}

impl ResultArchive {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    /// Writes `config.toml`, one CSV per table, and optionally
    /// `archive.json` and plot data, into `dir`.
    pub fn write(&self, dir: &Path, json: bool, plot: bool) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        let mut put = |name: &str, text: &str| -> Result<(), CliError> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
            Ok(())
        };
        put("config.toml", &self.metadata.config)?;
        for t in &self.tables {
            put(&format!("{}.csv", t.name), &t.to_csv()?)?;
        }
        let mut summary = String::from("# summary\n# ");
        summary.push_str(UNITS_NOTE);
        summary.push('\n');
        for (k, v) in &self.summary {
            summary.push_str(&format!("{k} = {v:.12e}\n"));
        }
        put("summary.txt", &summary)?;
        if json {
            let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
            put("archive.json", &text)?;
        }
        if plot {
            for kind in self.available_plots() {
                written.extend(emit_plotdata(self, kind, &dir.join("plot"))?);
            }
        }
        Ok(written)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a result archive: {e}", path.display())))
    }

    pub fn available_plots(&self) -> Vec<PlotKind> {
        PlotKind::ALL.into_iter().filter(|k| k.source(self).is_some()).collect()
    }
}

/// Curve families that can be exported for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Levels,
    Populations,
    G2,
    Fft,
    Dynamics,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [PlotKind::Levels, PlotKind::Populations, PlotKind::G2, PlotKind::Fft, PlotKind::Dynamics];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Levels => "levels",
            PlotKind::Populations => "populations",
            PlotKind::G2 => "g2",
            PlotKind::Fft => "fft",
            PlotKind::Dynamics => "dynamics",
        }
    }

    /// Source table and selected columns (`None` = all columns).
    fn source(self, archive: &ResultArchive) -> Option<(&Table, Option<&'static [&'static str]>)> {
        let (table, cols): (&str, Option<&'static [&'static str]>) = match self {
            PlotKind::Levels => ("levels", None),
            PlotKind::Populations => ("populations", None),
            PlotKind::G2 => ("dynamics", Some(&["t", "g2_1", "g2_2"])),
            PlotKind::Fft => ("fft", None),
            PlotKind::Dynamics => ("dynamics", Some(&["t", "n_b1", "n_b2", "n_a", "g2_1", "g2_2"])),
        };
        archive.table(table).map(|t| (t, cols))
    }
}

/// Writes `<kind>.dat`: whitespace-separated columns with `#` headers,
/// `NaN` for undefined values.
pub fn emit_plotdata(archive: &ResultArchive, kind: PlotKind, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Some((table, cols)) = kind.source(archive) else {
        let available: Vec<&str> = archive.available_plots().into_iter().map(PlotKind::name).collect();
        return Err(CliError::Config(format!(
            "archive of protocol `{}` has no `{}` series; available: {}",
            archive.metadata.protocol,
            kind.name(),
            if available.is_empty() { "none".to_string() } else { available.join(", ") }
        )));
    };
    let idx: Vec<usize> = match cols {
        Some(names) => names.iter().filter_map(|n| table.column_index(n)).collect(),
        None => (0..table.columns.len())
            .filter(|&j| table.rows.iter().all(|r| !matches!(r[j], Some(Cell::Text(_)))))
            .collect(),
    };
    let mut text = format!("# {} from table `{}` ({})\n# {UNITS_NOTE}\n#", kind.name(), table.name, archive.metadata.protocol);
    for &j in &idx {
        let c = &table.columns[j];
        text.push_str(&format!(" {}[{}]", c.name, c.unit));
    }
    text.push('\n');
    for row in &table.rows {
        let line: Vec<String> = idx
            .iter()
            .map(|&j| match &row[j] {
                Some(Cell::Num(x)) => format!("{x:.12e}"),
                _ => "NaN".to_string(),
            })
            .collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(format!("{}.dat", kind.name()));
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(vec![path])
}
