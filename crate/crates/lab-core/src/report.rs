//! Emitted artifacts: pass/fail verdicts, a deterministic `summary.json`,
//! CSV series tables, and raw binary field snapshots.
//!
//! Timing and host details go to `run_meta.json`, never into
//! `summary.json`, so identical configs produce byte-identical summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::diagnostics::InflationSeries;
use crate::field::RealField;
use crate::grid::Grid;

/// One named check: measured value against its limit, with enough
/// detail to reconstruct what was compared.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub pass: bool,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<32} measured {:>12.5e}  limit {:>10.3e}  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.criterion,
            self.measured,
            self.limit,
            self.detail
        )
    }
}

/// The machine-readable outcome of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub preset: String,
    pub config: ExperimentConfig,
    /// Flag-over-file override notes, in application order.
    pub provenance: Vec<String>,
    /// Scalar diagnostics keyed by name; sorted keys keep the JSON stable.
    pub data: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    /// Files written next to this summary, keyed by filename.
    pub artifacts: BTreeMap<String, String>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, provenance: Vec<String>) -> Self {
        Summary {
            version: env!("CARGO_PKG_VERSION").to_string(),
            preset: config.preset.clone(),
            config: config.clone(),
            provenance,
            data: BTreeMap::new(),
            verdicts: Vec::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, key: &str, value: f64) {
        self.data.insert(key.to_string(), value);
    }

    /// Records a measured-versus-limit check where smaller is better.
    pub fn check_below(&mut self, criterion: &str, measured: f64, limit: f64, detail: &str) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            pass: measured.is_finite() && measured <= limit,
            measured,
            limit,
            detail: detail.to_string(),
        });
    }

    /// Records a check that passed or failed by a predicate evaluated by
    /// the caller; `measured` and `limit` document what was compared.
    pub fn check(&mut self, criterion: &str, pass: bool, measured: f64, limit: f64, detail: &str) {
        self.verdicts.push(Verdict {
            criterion: criterion.to_string(),
            pass,
            measured,
            limit,
            detail: detail.to_string(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn note_artifact(&mut self, filename: &str, description: &str) {
        self.artifacts.insert(filename.to_string(), description.to_string());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Writes `summary.json` into `dir`, creating the directory if needed.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), self.to_json())
    }
}

/// Wall-clock and host facts, separated from the summary so reruns of
/// the same config still produce identical summaries.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_seconds: f64,
    pub grid_n: usize,
    pub dx: f64,
    pub threads: usize,
    pub started_unix: u64,
}

impl RunMeta {
    pub fn new(grid: Grid, wall_seconds: f64, threads: usize) -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunMeta { wall_seconds, grid_n: grid.n, dx: grid.dx(), threads, started_unix }
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("meta serializes");
        std::fs::write(dir.join("run_meta.json"), text)
    }
}

/// Column-oriented table for CSV emission. Non-finite entries become
/// empty cells rather than `NaN` strings.
#[derive(Clone, Debug, Default)]
pub struct Table {
    columns: Vec<(String, Vec<f64>)>,
}

impl Table {
    pub fn new() -> Self {
        Table::default()
    }

    pub fn column(mut self, name: &str, values: &[f64]) -> Self {
        self.columns.push((name.to_string(), values.to_vec()));
        self
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let rows = self.columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        for (name, v) in &self.columns {
            assert_eq!(v.len(), rows, "column '{name}' has a mismatched length");
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        let mut cell = String::new();
        for r in 0..rows {
            w.write_record(self.columns.iter().map(|(_, v)| {
                cell.clear();
                if v[r].is_finite() {
                    cell = format!("{:.12e}", v[r]);
                }
                cell.clone()
            }))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standard layout for an inflation time series.
pub fn inflation_table(series: &InflationSeries) -> Table {
    let px: Vec<f64> = series.points.iter().map(|p| p[0]).collect();
    let py: Vec<f64> = series.points.iter().map(|p| p[1]).collect();
    Table::new()
        .column("t", &series.times)
        .column("value", &series.values)
        .column("supnorm", &series.sup_norms)
        .column("point_x", &px)
        .column("point_y", &py)
}

/// Writes a field as little-endian binary: `u64` grid size, `f64`
/// half-width, then the samples row-major. Compact, exact, easy to read
/// back from any plotting environment.
pub fn write_field(path: &Path, field: &RealField) -> io::Result<()> {
    let n = field.grid.n;
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&(n as u64).to_le_bytes())?;
    f.write_all(&field.grid.l.to_le_bytes())?;
    for row in field.data.rows() {
        for &v in row {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    f.flush()
}

pub fn read_field(path: &Path) -> io::Result<RealField> {
    let mut f = io::BufReader::new(std::fs::File::open(path)?);
    let mut b8 = [0u8; 8];
    f.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    f.read_exact(&mut b8)?;
    let l = f64::from_le_bytes(b8);
    if n < 4 || n % 2 != 0 || !(l > 0.0) || n > 1 << 16 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("implausible field header: n = {n}, l = {l}"),
        ));
    }
    let grid = Grid::new(n, l);
    let mut field = RealField::zeros(grid);
    for i in 0..n {
        for j in 0..n {
            f.read_exact(&mut b8)?;
            field.data[[i, j]] = f64::from_le_bytes(b8);
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_json_is_deterministic_and_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.preset = "anisotropy".into();
        let build = || {
            let mut s = Summary::new(&cfg, vec!["grid.n: flag value 512 overrides 256".into()]);
            s.record("witness_max", 3.2e-4);
            s.record("alignment_gap", 1.5e-11);
            s.check_below("witness-vanishes-when-isotropic", 1.5e-11, 1e-10, "20 rotations");
            s.note_artifact("witness.csv", "witness values per trial");
            s
        };
        let a = build().to_json();
        let b = build().to_json();
        assert_eq!(a, b);

        let back: Summary = serde_json::from_str(&a).unwrap();
        assert_eq!(back.preset, "anisotropy");
        assert_eq!(back.data["witness_max"], 3.2e-4);
        assert!(back.all_pass());
        assert_eq!(back.version, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn failed_verdicts_flip_all_pass() {
        let cfg = ExperimentConfig::default();
        let mut s = Summary::new(&cfg, Vec::new());
        s.check_below("a", 1.0, 2.0, "");
        assert!(s.all_pass());
        s.check_below("b", 3.0, 2.0, "");
        assert!(!s.all_pass());
        s.check("c", true, f64::NAN, 0.0, "predicate checked elsewhere");
        assert!(!s.all_pass());
        // Non-finite measured values can never satisfy check_below.
        let mut t = Summary::new(&cfg, Vec::new());
        t.check_below("nan", f64::NAN, 1.0, "");
        assert!(!t.all_pass());
    }

    #[test]
    fn csv_blanks_out_nan_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        Table::new()
            .column("t", &[0.0, 0.1, 0.2])
            .column("value", &[1.0, f64::NAN, 3.0])
            .column("supnorm", &[f64::NAN, f64::NAN, 9.0])
            .write_csv(&path)
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,value,supnorm");
        assert!(lines[1].starts_with("0.000000000000e0,1.000000000000e0,"));
        assert!(lines[1].ends_with(','), "NaN must yield an empty cell: {}", lines[1]);
        assert_eq!(lines[2].split(',').nth(1), Some(""));
        assert!(!text.contains("NaN"));
    }

    #[test]
    fn field_snapshots_round_trip_exactly() {
        let grid = Grid::new(16, 1.25);
        let field = RealField::sample(grid, |x, y| (3.0 * x).sin() * (2.0 * y).cos() + 0.1 * x);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("omega.f64");
        write_field(&path, &field).unwrap();

        let expect = 16 + 16 * 16 * 8;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expect as u64);

        let back = read_field(&path).unwrap();
        assert_eq!(back.grid.n, 16);
        assert_eq!(back.grid.l, 1.25);
        assert_eq!(back.data, field.data);
    }

    #[test]
    fn corrupt_field_headers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.f64");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&7u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_field(&path).is_err());
    }
}
