//! JSON run and sweep configuration: schema, parsing with path-qualified
//! diagnostics, validation, and resolution into core types.
//!
//! A run is described by exactly one JSON document. Optional sections
//! (`spectrum`, `ftle`, `crossover`, `sff`) switch on the corresponding
//! diagnostics; omitting a section skips the work entirely. Unknown fields
//! are rejected so typos cannot silently disable a section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use bhtw_core::chaos::SpectralWindow;
use bhtw_core::ensemble::{Corrections, PairScope};
use bhtw_core::integrate::IntegratorConfig;
use bhtw_core::model::ChainParams;
use bhtw_core::wigner::{build_spec_with, CoherentStateSpec, InitialConditionPreset, DEFAULT_WIDTH};

use crate::error::{CliError, Result};

/// Initial occupation profile, config-side. Site indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PresetConfig {
    /// All particles on `site`.
    SingleSite { site: usize },
    /// Weight split across `sites`; omitted `ratios` means equal weights.
    MultiSite {
        sites: Vec<usize>,
        #[serde(default)]
        ratios: Option<Vec<f64>>,
    },
    /// Random profile over all sites, drawn from `profile_seed`.
    UniformRandom {
        #[serde(default)]
        profile_seed: u64,
    },
    /// Equal filling on every site of the chain.
    Uniform,
}

impl PresetConfig {
    pub fn to_core(&self, chain_sites: usize) -> InitialConditionPreset {
        match self {
            PresetConfig::SingleSite { site } => {
                InitialConditionPreset::SingleSite { site: *site }
            }
            PresetConfig::MultiSite { sites, ratios } => InitialConditionPreset::MultiSite {
                sites: sites.clone(),
                ratios: ratios
                    .clone()
                    .unwrap_or_else(|| vec![1.0; sites.len()]),
            },
            PresetConfig::UniformRandom { profile_seed } => {
                InitialConditionPreset::UniformRandom {
                    profile_seed: *profile_seed,
                }
            }
            PresetConfig::Uniform => InitialConditionPreset::uniform_equal(chain_sites),
        }
    }
}

/// Gaussian sampling widths for both quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Widths {
    pub sigma_p: f64,
    pub sigma_q: f64,
}

/// Power-spectrum diagnostic: periodogram of single-trajectory occupation
/// series `I_n(t)` on the output grid (the ensemble mean is smooth; the
/// Brownian signal lives in individual trajectories).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Taper applied before the transform.
    #[serde(default = "default_window")]
    pub window: SpectralWindow,
    /// 0-based sites to analyze; omitted means every site.
    #[serde(default)]
    pub sites: Option<Vec<usize>>,
    /// Which ensemble member supplies the trajectory (same RNG stream the
    /// ensemble itself would use for this index).
    #[serde(default)]
    pub trajectory_index: u64,
}

fn default_window() -> SpectralWindow {
    SpectralWindow::Hann
}

/// Finite-time Lyapunov diagnostic on the deterministic trajectory started
/// at the preset center (no Wigner sampling; first-order jump noise does not
/// shift these exponents).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FtleSection {
    #[serde(default = "default_ftle_step")]
    pub step: f64,
    #[serde(default = "default_ftle_t_final")]
    pub t_final: f64,
    #[serde(default = "default_renorm_stride")]
    pub renorm_stride: usize,
}

fn default_ftle_step() -> f64 {
    1.0
}
fn default_ftle_t_final() -> f64 {
    2.0e4
}
fn default_renorm_stride() -> usize {
    10
}

impl Default for FtleSection {
    fn default() -> Self {
        FtleSection {
            step: default_ftle_step(),
            t_final: default_ftle_t_final(),
            renorm_stride: default_renorm_stride(),
        }
    }
}

/// Crossover detection between two power-law regimes of the site-averaged
/// dispersion growth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossoverSection {
    #[serde(default = "default_early_exponent")]
    pub early_exponent: f64,
    #[serde(default = "default_late_exponent")]
    pub late_exponent: f64,
}

fn default_early_exponent() -> f64 {
    2.0
}
fn default_late_exponent() -> f64 {
    1.0
}

impl Default for CrossoverSection {
    fn default() -> Self {
        CrossoverSection {
            early_exponent: default_early_exponent(),
            late_exponent: default_late_exponent(),
        }
    }
}

/// Spectral form factor over the sampled initial energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SffSection {
    /// Energy samples (drawn with the run's own sampling streams).
    pub count: usize,
    #[serde(default = "default_sff_t_min")]
    pub t_min: f64,
    #[serde(default = "default_sff_t_max")]
    pub t_max: f64,
    /// Geometric grid points between `t_min` and `t_max`; `t = 0` is always
    /// prepended so the normalization point is part of the series.
    #[serde(default = "default_sff_points")]
    pub points: usize,
}

fn default_sff_t_min() -> f64 {
    1.0
}
fn default_sff_t_max() -> f64 {
    1.0e5
}
fn default_sff_points() -> usize {
    256
}

/// One complete simulation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Chain length (at least 2).
    pub sites: usize,
    /// Interaction over hopping.
    pub u_over_j: f64,
    /// Chemical potential over hopping.
    pub mu_over_j: f64,
    /// Initial occupation profile.
    pub preset: PresetConfig,
    /// Ensemble size (at least 2).
    pub trajectories: usize,
    /// Master seed; trajectory `i` owns RNG streams `2 i` and `2 i + 1`.
    #[serde(default)]
    pub seed: u64,
    /// Correction estimator for the first-order jump channel.
    #[serde(default = "default_corrections")]
    pub corrections: Corrections,
    /// Stepper settings (internal step, horizon, output stride, drift tolerance).
    #[serde(default = "default_integrator")]
    pub integrator: IntegratorConfig,
    /// Pair-moment storage: `full` keeps all `I_m I_n`, `diagonal` only `I_n^2`.
    #[serde(default = "default_pair_scope")]
    pub pair_scope: PairScope,
    /// Project each sample onto the constant-number shell before evolving.
    #[serde(default)]
    pub renormalize_number: bool,
    /// Phase of the filled-site coherent centers.
    #[serde(default)]
    pub center_phase: f64,
    /// Sampling widths; omitted means the symmetric vacuum width in both
    /// quadratures.
    #[serde(default)]
    pub widths: Option<Widths>,
    /// Natural-log time window `[lo, hi]` for the per-site growth fits.
    #[serde(default = "default_fit_window")]
    pub fit_window_ln: (f64, f64),
    #[serde(default)]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default)]
    pub ftle: Option<FtleSection>,
    #[serde(default)]
    pub crossover: Option<CrossoverSection>,
    #[serde(default)]
    pub sff: Option<SffSection>,
}

fn default_corrections() -> Corrections {
    Corrections::Integrated
}

fn default_integrator() -> IntegratorConfig {
    IntegratorConfig {
        step: 1.0,
        t_final: 2.0e4,
        output_stride: 10,
        conservation_tol: 1e-6,
    }
}

fn default_pair_scope() -> PairScope {
    PairScope::Full
}

fn default_fit_window() -> (f64, f64) {
    (3.0, 7.5)
}

/// Core objects a valid config resolves to.
#[derive(Debug)]
pub struct ResolvedRun {
    pub params: ChainParams,
    pub preset: InitialConditionPreset,
    pub spec: CoherentStateSpec,
    pub sigma_p: f64,
    pub sigma_q: f64,
}

impl RunConfig {
    /// Config-level validation; the resolved core types re-check everything
    /// they own.
    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(CliError::invalid(format!(
                "sites must be at least 2 for a transport chain, got {}",
                self.sites
            )));
        }
        let (lo, hi) = self.fit_window_ln;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(CliError::invalid(format!(
                "fit_window_ln must be a finite increasing pair, got [{lo}, {hi}]"
            )));
        }
        if !self.center_phase.is_finite() {
            return Err(CliError::invalid("center_phase must be finite"));
        }
        if let Some(w) = &self.widths {
            for (name, v) in [("sigma_p", w.sigma_p), ("sigma_q", w.sigma_q)] {
                if !v.is_finite() || v <= 0.0 {
                    return Err(CliError::invalid(format!(
                        "widths.{name} must be finite and > 0, got {v}"
                    )));
                }
            }
        }
        if let Some(sp) = &self.spectrum {
            if let Some(sites) = &sp.sites {
                if sites.is_empty() {
                    return Err(CliError::invalid("spectrum.sites must not be empty"));
                }
                if let Some(&bad) = sites.iter().find(|&&n| n >= self.sites) {
                    return Err(CliError::invalid(format!(
                        "spectrum.sites contains {bad}, but the chain has sites 0..{}",
                        self.sites.saturating_sub(1)
                    )));
                }
            }
            if sp.trajectory_index >= self.trajectories as u64 {
                return Err(CliError::invalid(format!(
                    "spectrum.trajectory_index {} is out of range for {} trajectories",
                    sp.trajectory_index, self.trajectories
                )));
            }
        }
        if let Some(f) = &self.ftle {
            if f.renorm_stride == 0 {
                return Err(CliError::invalid("ftle.renorm_stride must be at least 1"));
            }
            if !f.step.is_finite() || f.step <= 0.0 {
                return Err(CliError::invalid(format!(
                    "ftle.step must be finite and > 0, got {}",
                    f.step
                )));
            }
            if !f.t_final.is_finite() || f.t_final < f.step {
                return Err(CliError::invalid(format!(
                    "ftle.t_final must be finite and >= ftle.step, got {}",
                    f.t_final
                )));
            }
        }
        if let Some(c) = &self.crossover {
            for (name, v) in [
                ("early_exponent", c.early_exponent),
                ("late_exponent", c.late_exponent),
            ] {
                if !v.is_finite() {
                    return Err(CliError::invalid(format!(
                        "crossover.{name} must be finite, got {v}"
                    )));
                }
            }
        }
        if let Some(s) = &self.sff {
            if s.count < 2 {
                return Err(CliError::invalid(format!(
                    "sff.count must be at least 2, got {}",
                    s.count
                )));
            }
            if s.points < 2 {
                return Err(CliError::invalid(format!(
                    "sff.points must be at least 2, got {}",
                    s.points
                )));
            }
            if !(s.t_min.is_finite() && s.t_max.is_finite() && 0.0 < s.t_min && s.t_min < s.t_max)
            {
                return Err(CliError::invalid(format!(
                    "sff window must satisfy 0 < t_min < t_max, got [{}, {}]",
                    s.t_min, s.t_max
                )));
            }
        }
        // Everything else (sites, ratios, integrator, ensemble size) is
        // validated by the core types during resolution and execution.
        Ok(())
    }

    /// Builds the core parameter set, preset, and sampling spec.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        self.validate()?;
        let params = ChainParams::from_ratios(self.sites, self.u_over_j, self.mu_over_j)?;
        self.integrator.validate()?;
        let preset = self.preset.to_core(self.sites);
        let (sigma_p, sigma_q) = match &self.widths {
            Some(w) => (w.sigma_p, w.sigma_q),
            None => (DEFAULT_WIDTH, DEFAULT_WIDTH),
        };
        let spec = build_spec_with(&preset, &params, self.center_phase, sigma_p, sigma_q)?;
        Ok(ResolvedRun {
            params,
            preset,
            spec,
            sigma_p,
            sigma_q,
        })
    }
}

/// Which scalar field a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisField {
    UOverJ,
    Sites,
}

impl AxisField {
    pub fn name(&self) -> &'static str {
        match self {
            AxisField::UOverJ => "u_over_j",
            AxisField::Sites => "sites",
        }
    }
}

/// Sweep axis: one field, a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConfig {
    pub field: AxisField,
    pub values: Vec<f64>,
}

/// A family of runs sharing one base config and varying one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub axis: AxisConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        let values = &self.axis.values;
        if values.is_empty() {
            return Err(CliError::invalid("axis.values must not be empty"));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CliError::invalid(format!(
                    "axis.values[{i}] must be finite, got {v}"
                )));
            }
            if values[..i].contains(&v) {
                return Err(CliError::invalid(format!(
                    "axis.values contains duplicate value {v}"
                )));
            }
            if self.axis.field == AxisField::Sites && (v.fract() != 0.0 || v < 2.0 || v > 1e6) {
                return Err(CliError::invalid(format!(
                    "axis.values[{i}] = {v} is not a valid chain length (integer >= 2)"
                )));
            }
        }
        Ok(())
    }

    /// The run config of axis point `value`.
    pub fn point(&self, value: f64) -> RunConfig {
        let mut cfg = self.base.clone();
        match self.axis.field {
            AxisField::UOverJ => cfg.u_over_j = value,
            AxisField::Sites => cfg.sites = value as usize,
        }
        cfg
    }
}

/// Directory-safe rendering of an axis value (`0.5` becomes `0p5`).
pub fn axis_value_token(value: f64) -> String {
    let text = if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{value:.0}")
    } else {
        format!("{value}")
    };
    text.replace('.', "p").replace('-', "m")
}

fn parse_with_path<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let location = if path.is_empty() || path == "." {
            String::from("top level")
        } else {
            path
        };
        CliError::Validation(format!("{what} error at {location}: {}", err.inner()))
    })
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = parse_with_path(text, "config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_sweep_config(text: &str) -> Result<SweepConfig> {
    let cfg: SweepConfig = parse_with_path(text, "config")?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_config_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|err| {
        CliError::Validation(format!("cannot read config {}: {err}", path.display()))
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read_config_text(path)?)
}

pub fn load_sweep_config(path: &Path) -> Result<SweepConfig> {
    parse_sweep_config(&read_config_text(path)?)
}
