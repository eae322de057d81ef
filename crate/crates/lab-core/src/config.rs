//! Experiment configuration: a TOML-backed schema with strict unknown-key
//! rejection, whole-file validation, and flag-over-file override
//! provenance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    /// Every violation found, not just the first.
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

pub const PRESETS: [&str; 8] = [
    "verify-quadrature",
    "anisotropy",
    "c1-inflation",
    "cm-inflation",
    "decoupling",
    "flow-expansion",
    "two-patch",
    "axi-conditions",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub l: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 512, l: 1.0 }
    }
}

/// Profile-family knobs; which ones matter depends on the preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySection {
    pub m_order: usize,
    pub j_min: i32,
    pub j_max: i32,
    /// Annular envelope half-width at unit scale.
    pub eps: f64,
    /// Bubble radius for the localized order-m profiles.
    pub bubble_w: f64,
    /// Steering strength and plateau radius.
    pub beta: f64,
    pub rho: f64,
    /// Multiplier on the family data (high part only where split).
    pub amplitude: f64,
    /// Annular envelope shape: "exp" or "poly<k>".
    pub bump: String,
}

impl Default for FamilySection {
    fn default() -> Self {
        FamilySection {
            m_order: 1,
            j_min: 2,
            j_max: 5,
            eps: 0.3,
            bubble_w: 0.15,
            beta: 0.5,
            rho: 0.35,
            amplitude: 1.0,
            bump: "poly10".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperSection {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
}

impl Default for StepperSection {
    fn default() -> Self {
        StepperSection { dt: 1e-3, t_end: 0.1, snapshot_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Kernel cross-check and sup-norm cadences in steps (0 disables).
    pub kernel_every: usize,
    pub sup_every: usize,
    /// Initial-slope sample horizon.
    pub slope_t_max: f64,
    /// Expansion-residual fit window and sample count.
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub n_fit: usize,
    /// Decoupling / support-tracking cadences in steps.
    pub gap_every: usize,
    pub support_every: usize,
    /// Axisymmetric profile parameters.
    pub axi_eps: f64,
    pub axi_delta: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            kernel_every: 10,
            sup_every: 10,
            slope_t_max: 0.05,
            fit_lo: 1e-3,
            fit_hi: 1e-2,
            n_fit: 10,
            gap_every: 5,
            support_every: 5,
            axi_eps: 0.05,
            axi_delta: 2e-3,
        }
    }
}

/// Full experiment description. Anything the presets tune lives here so
/// a saved config reproduces a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: String,
    pub out_dir: String,
    pub grid: GridSection,
    pub family: FamilySection,
    pub stepper: StepperSection,
    pub diagnostics: DiagnosticsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: String::new(),
            out_dir: "lab-out".into(),
            grid: GridSection::default(),
            family: FamilySection::default(),
            stepper: StepperSection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn lab_grid(&self) -> Grid {
        Grid::new(self.grid.n, self.grid.l)
    }

    /// Collects every violation; an empty list means the config is sound.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !self.preset.is_empty() && !PRESETS.contains(&self.preset.as_str()) {
            errs.push(format!(
                "unknown preset '{}'; expected one of {}",
                self.preset,
                PRESETS.join(", ")
            ));
        }
        let g = &self.grid;
        if g.n < 16 || !g.n.is_power_of_two() {
            errs.push(format!("grid.n = {} must be a power of two at least 16", g.n));
        }
        if !(g.l > 0.0) {
            errs.push(format!("grid.l = {} must be positive", g.l));
        }
        let f = &self.family;
        if f.m_order < 1 {
            errs.push("family.m_order must be at least 1".into());
        }
        if f.j_min > f.j_max {
            errs.push(format!("family window [{}, {}] is empty", f.j_min, f.j_max));
        }
        if !(f.eps > 0.0 && f.eps < 1.0 / 3.0) {
            errs.push(format!(
                "family.eps = {} must lie in (0, 1/3) so neighboring shells stay disjoint",
                f.eps
            ));
        }
        if !(f.bubble_w > 0.0 && f.bubble_w < 0.5) {
            errs.push(format!("family.bubble_w = {} must lie in (0, 0.5)", f.bubble_w));
        }
        if !(f.rho > 0.0 && 2.0 * f.rho < 1.0) {
            errs.push(format!(
                "family.rho = {} needs 0 < 2 rho < 1 so the collar clears the unit shell",
                f.rho
            ));
        }
        if !f.beta.is_finite() {
            errs.push("family.beta must be finite".into());
        }
        if !(f.amplitude.is_finite() && f.amplitude >= 0.0) {
            errs.push(format!("family.amplitude = {} must be finite and nonnegative", f.amplitude));
        }
        if parse_bump(&f.bump).is_none() {
            errs.push(format!("family.bump = '{}' is neither 'exp' nor 'poly<k>'", f.bump));
        }
        let s = &self.stepper;
        if !(s.dt > 0.0) {
            errs.push(format!("stepper.dt = {} must be positive", s.dt));
        }
        if !(s.t_end >= 0.0) {
            errs.push(format!("stepper.t_end = {} must be nonnegative", s.t_end));
        }
        let d = &self.diagnostics;
        if !(d.fit_lo > 0.0 && d.fit_hi > d.fit_lo) {
            errs.push(format!(
                "diagnostics fit window [{}, {}] must be positive and increasing",
                d.fit_lo, d.fit_hi
            ));
        }
        if d.n_fit < 2 {
            errs.push("diagnostics.n_fit must be at least 2".into());
        }
        if d.gap_every == 0 || d.support_every == 0 {
            errs.push("diagnostics gap_every and support_every must be at least 1".into());
        }
        if !(d.slope_t_max > 0.0) {
            errs.push("diagnostics.slope_t_max must be positive".into());
        }
        if !(d.axi_eps > 0.0 && d.axi_eps < 0.5) {
            errs.push(format!("diagnostics.axi_eps = {} must lie in (0, 0.5)", d.axi_eps));
        }
        if !(d.axi_delta > 0.0 && d.axi_delta < d.axi_eps) {
            errs.push(format!(
                "diagnostics.axi_delta = {} must lie in (0, axi_eps)",
                d.axi_delta
            ));
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

/// Recognized envelope shapes for [`FamilySection::bump`].
pub fn parse_bump(name: &str) -> Option<crate::envelope::Bump> {
    match name {
        "exp" => Some(crate::envelope::Bump::Exp),
        _ => name
            .strip_prefix("poly")
            .and_then(|k| k.parse::<u32>().ok())
            .filter(|&k| (2..=20).contains(&k))
            .map(crate::envelope::Bump::Poly),
    }
}

/// Command-line overrides; `Some` beats the file value and is recorded
/// in the report's provenance trail.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub grid_n: Option<usize>,
    pub grid_l: Option<f64>,
    pub scales: Option<(i32, i32)>,
    pub m_order: Option<usize>,
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub amplitude: Option<f64>,
    pub out_dir: Option<String>,
}

impl Overrides {
    /// Applies every set override, returning one provenance note per
    /// replaced value.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Vec<String> {
        let mut notes = Vec::new();
        let mut put = |field: &str, old: String, new: String| {
            notes.push(format!("{field}: flag value {new} overrides {old}"));
        };
        if let Some(n) = self.grid_n {
            if n != cfg.grid.n {
                put("grid.n", cfg.grid.n.to_string(), n.to_string());
            }
            cfg.grid.n = n;
        }
        if let Some(l) = self.grid_l {
            if l != cfg.grid.l {
                put("grid.l", cfg.grid.l.to_string(), l.to_string());
            }
            cfg.grid.l = l;
        }
        if let Some((a, b)) = self.scales {
            if (a, b) != (cfg.family.j_min, cfg.family.j_max) {
                put(
                    "family.scales",
                    format!("{}..{}", cfg.family.j_min, cfg.family.j_max),
                    format!("{a}..{b}"),
                );
            }
            cfg.family.j_min = a;
            cfg.family.j_max = b;
        }
        if let Some(m) = self.m_order {
            if m != cfg.family.m_order {
                put("family.m_order", cfg.family.m_order.to_string(), m.to_string());
            }
            cfg.family.m_order = m;
        }
        if let Some(e) = self.eps {
            if e != cfg.family.eps {
                put("family.eps", cfg.family.eps.to_string(), e.to_string());
            }
            cfg.family.eps = e;
        }
        if let Some(b) = self.beta {
            if b != cfg.family.beta {
                put("family.beta", cfg.family.beta.to_string(), b.to_string());
            }
            cfg.family.beta = b;
        }
        if let Some(dt) = self.dt {
            if dt != cfg.stepper.dt {
                put("stepper.dt", cfg.stepper.dt.to_string(), dt.to_string());
            }
            cfg.stepper.dt = dt;
        }
        if let Some(t) = self.t_end {
            if t != cfg.stepper.t_end {
                put("stepper.t_end", cfg.stepper.t_end.to_string(), t.to_string());
            }
            cfg.stepper.t_end = t;
        }
        if let Some(a) = self.amplitude {
            if a != cfg.family.amplitude {
                put("family.amplitude", cfg.family.amplitude.to_string(), a.to_string());
            }
            cfg.family.amplitude = a;
        }
        if let Some(o) = &self.out_dir {
            if *o != cfg.out_dir {
                put("out_dir", cfg.out_dir.clone(), o.clone());
            }
            cfg.out_dir = o.clone();
        }
        notes
    }
}
