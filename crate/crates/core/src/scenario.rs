//! Declarative experiment runner.
//!
//! A scenario is a TOML document describing the source (grid, pump,
//! crystals, point spread function) and a list of experiments. Running a
//! scenario produces CSV artifacts, a JSON report and a manifest with the
//! SHA-256 of every file. All outputs are pure functions of the document and
//! the seed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bases::{frequency_bins, BasisSet};
use crate::field::{
    apply_psf, build_joint_amplitude_with, photon_flux_limit, qpm_wavenumber, BuildOptions, CrystalRole, CrystalSpec,
    DispersionModel, JointAmplitude, PumpSpec, SellmeierIndex, SellmeierTerm, DEFAULT_A2,
};
use crate::fit::{fit_cos4, fit_fringe, fit_fringe_counts, fit_gamma, FitResult};
use crate::grid::SpectralGrid;
use crate::measurement::{
    fringe_scan_field, fringe_scan_state, fringe_scan_state_noisy, franson_fringe_scan, phase_grid,
    procrustean_amplitudes, project_state, single_projection_signals, synthesize_counts, CountRecord, FringeScan,
    PhaseLadder, QuditState,
};
use crate::metrics::{bell_i2, cglmp_thresholds, schmidt_decompose_modes};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Schema violation with the path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "GridConfig::default_points")]
    pub n_points: usize,
    /// Half window in rad/fs.
    #[serde(default = "GridConfig::default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "GridConfig::default_center")]
    pub center_wavelength_nm: f64,
}

impl GridConfig {
    fn default_points() -> usize {
        1025
    }
    fn default_omega_max() -> f64 {
        0.35
    }
    fn default_center() -> f64 {
        1064.0
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_points: Self::default_points(),
            omega_max: Self::default_omega_max(),
            center_wavelength_nm: Self::default_center(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    /// Intensity FWHM in MHz.
    pub bandwidth_mhz: Option<f64>,
    /// Intensity FWHM in rad/fs.
    pub bandwidth_rad_per_fs: Option<f64>,
    #[serde(default = "PumpConfig::default_wavelength")]
    pub wavelength_nm: f64,
    /// Minimum representable bandwidth in grid cells (0 disables the clamp).
    #[serde(default = "PumpConfig::default_clamp")]
    pub clamp_cells: f64,
}

impl PumpConfig {
    fn default_wavelength() -> f64 {
        532.0
    }
    fn default_clamp() -> f64 {
        3.0
    }
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            bandwidth_mhz: Some(5.0),
            bandwidth_rad_per_fs: None,
            wavelength_nm: Self::default_wavelength(),
            clamp_cells: Self::default_clamp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum DispersionConfig {
    TaylorMismatch {
        /// Defaults to `−2π/G` (perfect phase matching at degeneracy).
        delta_k0: Option<f64>,
        #[serde(default)]
        a1: f64,
        #[serde(default = "default_a2")]
        a2: f64,
        #[serde(default)]
        a3: f64,
    },
    Sellmeier {
        a: f64,
        /// `[b, c]` pairs of the poles `b/(λ² − c)`, λ in µm.
        #[serde(default)]
        terms: Vec<[f64; 2]>,
        #[serde(default)]
        d: f64,
        validity_um: Option<[f64; 2]>,
    },
}

impl Default for DispersionConfig {
    fn default() -> Self {
        DispersionConfig::TaylorMismatch {
            delta_k0: None,
            a1: 0.0,
            a2: DEFAULT_A2,
            a3: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    #[serde(default = "CrystalConfig::default_length")]
    pub length_mm: f64,
    #[serde(default = "CrystalConfig::default_period")]
    pub poling_period_um: f64,
    #[serde(default)]
    pub dispersion: DispersionConfig,
}

impl CrystalConfig {
    fn default_length() -> f64 {
        11.5
    }
    fn default_period() -> f64 {
        9.0
    }
}

impl Default for CrystalConfig {
    fn default() -> Self {
        Self {
            length_mm: Self::default_length(),
            poling_period_um: Self::default_period(),
            dispersion: DispersionConfig::default(),
        }
    }
}

/// Poissonian detection applied to fringe experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountsConfig {
    /// Coincidence rate at the fringe maximum, Hz.
    pub peak_rate_hz: f64,
    #[serde(default = "CountsConfig::default_background")]
    pub background_rate_hz: f64,
    #[serde(default = "CountsConfig::default_duration")]
    pub duration_s: f64,
}

impl CountsConfig {
    fn default_background() -> f64 {
        11.0
    }
    fn default_duration() -> f64 {
        300.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteConfig {
    StateSpace,
    FullField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceConfig {
    /// Maximally entangled qudit mixed with white noise.
    Ideal,
    /// Projection of the simulated two-photon amplitude.
    Field,
}

fn default_a2() -> f64 {
    DEFAULT_A2
}
fn default_points() -> usize {
    64
}
fn default_stride() -> usize {
    8
}
fn default_modes() -> usize {
    3
}
fn default_lambda() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_t1() -> Vec<f64> {
    vec![0.0, 10.0, 25.0, 35.0, 50.0]
}
fn default_bin_width() -> f64 {
    0.02
}
fn default_bin_spacing() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Params {
    /// Export every `stride`-th grid sample along each axis.
    #[serde(default = "default_stride")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Params {
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// Number of Schmidt weights written to the spectrum file.
    #[serde(default = "Fig3Params::default_spectrum")]
    pub spectrum_len: usize,
}

impl Fig3Params {
    fn default_spectrum() -> usize {
        50
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreqBinParams {
    pub d: usize,
    #[serde(default = "FreqBinParams::default_source")]
    pub source: SourceConfig,
    #[serde(default = "FreqBinParams::default_route")]
    pub route: RouteConfig,
    /// Noise weight for the ideal source.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Idler bin centers in rad/fs; the signal bins are mirrored.
    pub centers: Option<Vec<f64>>,
    pub widths: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl FreqBinParams {
    fn default_source() -> SourceConfig {
        SourceConfig::Field
    }
    fn default_route() -> RouteConfig {
        RouteConfig::StateSpace
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBinParams {
    /// Interferometer delays in fs.
    #[serde(default = "default_t1")]
    pub t1: Vec<f64>,
    #[serde(default)]
    pub psf: bool,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchmidtFringeParams {
    pub d: usize,
    /// Equalize the Schmidt weights with filter amplitudes before scanning.
    #[serde(default = "default_true")]
    pub procrustean: bool,
    #[serde(default = "FreqBinParams::default_route")]
    pub route: RouteConfig,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellSweepParams {
    #[serde(default = "BellSweepParams::default_t1")]
    pub t1: Vec<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl BellSweepParams {
    fn default_t1() -> Vec<f64> {
        vec![0.0, 10.0, 25.0, 35.0, 50.0, 70.0, 100.0, 150.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcrusteanParams {
    pub d: usize,
    pub centers: Option<Vec<f64>>,
    /// Unequal widths make the diagonal state asymmetric.
    pub widths: Option<Vec<f64>>,
    #[serde(default = "default_points")]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxParams {
    #[serde(default = "FluxParams::default_bandwidth")]
    pub bandwidth_nm: f64,
    #[serde(default = "GridConfig::default_center")]
    pub wavelength_nm: f64,
    #[serde(default = "FluxParams::default_power")]
    pub power_w: f64,
}

impl FluxParams {
    fn default_bandwidth() -> f64 {
        105.0
    }
    fn default_power() -> f64 {
        1e-6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentSpec {
    Fig2Amplitude(Fig2Params),
    Fig3Schmidt(Fig3Params),
    FreqBinFringes(FreqBinParams),
    TimeBinSweep(TimeBinParams),
    SchmidtFringes(SchmidtFringeParams),
    BellI2Sweep(BellSweepParams),
    Procrustean(ProcrusteanParams),
    FluxCheck(FluxParams),
}

impl ExperimentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentSpec::Fig2Amplitude(_) => "fig2_amplitude",
            ExperimentSpec::Fig3Schmidt(_) => "fig3_schmidt",
            ExperimentSpec::FreqBinFringes(_) => "freq_bin_fringes",
            ExperimentSpec::TimeBinSweep(_) => "time_bin_sweep",
            ExperimentSpec::SchmidtFringes(_) => "schmidt_fringes",
            ExperimentSpec::BellI2Sweep(_) => "bell_i2_sweep",
            ExperimentSpec::Procrustean(_) => "procrustean",
            ExperimentSpec::FluxCheck(_) => "flux_check",
        }
    }

    /// Qudit dimension used in artifact names (0 when not applicable).
    pub fn dimension(&self) -> usize {
        match self {
            ExperimentSpec::FreqBinFringes(p) => p.d,
            ExperimentSpec::SchmidtFringes(p) => p.d,
            ExperimentSpec::Procrustean(p) => p.d,
            ExperimentSpec::Fig3Schmidt(p) => p.modes,
            ExperimentSpec::TimeBinSweep(_) | ExperimentSpec::BellI2Sweep(_) => 2,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub pump: PumpConfig,
    #[serde(default)]
    pub spdc: CrystalConfig,
    #[serde(default)]
    pub sfg: CrystalConfig,
    /// Point spread function FWHM in rad/fs.
    #[serde(default = "Scenario::default_psf")]
    pub psf_fwhm: f64,
    #[serde(default)]
    pub include_phase: bool,
    pub counts: Option<CountsConfig>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<ExperimentSpec>,
}

impl Scenario {
    fn default_psf() -> f64 {
        9.6e-3
    }

    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_error("", e.to_string()))?;
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(path, e.into_inner().message().trim().to_string())
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.grid_spec().map_err(|e| config_error("grid", e.to_string()))?;
        match (self.pump.bandwidth_mhz, self.pump.bandwidth_rad_per_fs) {
            (Some(_), Some(_)) => {
                return Err(config_error(
                    "pump",
                    "give either bandwidth_mhz or bandwidth_rad_per_fs, not both",
                ))
            }
            (None, None) => return Err(config_error("pump", "missing bandwidth_mhz or bandwidth_rad_per_fs")),
            _ => {}
        }
        self.pump_spec().map_err(|e| config_error("pump", e.to_string()))?;
        if !(self.pump.clamp_cells >= 0.0) {
            return Err(config_error("pump.clamp_cells", "must be >= 0"));
        }
        self.crystal(CrystalRole::Spdc).map_err(|e| config_error("spdc", e.to_string()))?;
        self.crystal(CrystalRole::Sfg).map_err(|e| config_error("sfg", e.to_string()))?;
        if !(self.psf_fwhm >= 0.0) || !self.psf_fwhm.is_finite() {
            return Err(config_error("psf_fwhm", "must be finite and >= 0"));
        }
        if let Some(c) = &self.counts {
            for (key, v) in [
                ("peak_rate_hz", c.peak_rate_hz),
                ("background_rate_hz", c.background_rate_hz),
                ("duration_s", c.duration_s),
            ] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(config_error(format!("counts.{key}"), "must be finite and >= 0"));
                }
            }
        }
        for (idx, exp) in self.experiments.iter().enumerate() {
            let at = |key: &str| format!("experiment[{idx}].{key}");
            let check_d = |d: usize| {
                if (2..=4).contains(&d) {
                    Ok(())
                } else {
                    Err(config_error(at("d"), format!("dimension must be 2, 3 or 4, got {d}")))
                }
            };
            let check_points = |n: usize| {
                if n >= 16 {
                    Ok(())
                } else {
                    Err(config_error(at("points"), "at least 16 scan points are required"))
                }
            };
            let check_bins = |d: usize, centers: &Option<Vec<f64>>, widths: &Option<Vec<f64>>| {
                for (key, v) in [("centers", centers), ("widths", widths)] {
                    if let Some(v) = v {
                        if v.len() != d {
                            return Err(config_error(at(key), format!("expected {d} entries, got {}", v.len())));
                        }
                    }
                }
                Ok(())
            };
            let check_t1 = |t1: &[f64]| {
                if t1.is_empty() || t1.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
                    Err(config_error(at("t1"), "needs at least one finite delay >= 0"))
                } else {
                    Ok(())
                }
            };
            match exp {
                ExperimentSpec::Fig2Amplitude(p) => {
                    if p.stride == 0 {
                        return Err(config_error(at("stride"), "must be >= 1"));
                    }
                }
                ExperimentSpec::Fig3Schmidt(p) => {
                    if p.modes == 0 {
                        return Err(config_error(at("modes"), "must be >= 1"));
                    }
                }
                ExperimentSpec::FreqBinFringes(p) => {
                    check_d(p.d)?;
                    check_points(p.points)?;
                    check_bins(p.d, &p.centers, &p.widths)?;
                    if !(0.0..=1.0).contains(&p.lambda) {
                        return Err(config_error(at("lambda"), "must lie in [0, 1]"));
                    }
                }
                ExperimentSpec::TimeBinSweep(p) => {
                    check_t1(&p.t1)?;
                    check_points(p.points)?;
                }
                ExperimentSpec::SchmidtFringes(p) => {
                    check_d(p.d)?;
                    check_points(p.points)?;
                }
                ExperimentSpec::BellI2Sweep(p) => {
                    check_t1(&p.t1)?;
                    check_points(p.points)?;
                }
                ExperimentSpec::Procrustean(p) => {
                    check_d(p.d)?;
                    check_points(p.points)?;
                    check_bins(p.d, &p.centers, &p.widths)?;
                }
                ExperimentSpec::FluxCheck(p) => {
                    if !(p.bandwidth_nm > 0.0 && p.wavelength_nm > 0.0 && p.power_w >= 0.0) {
                        return Err(config_error(at("bandwidth_nm"), "flux inputs must be positive"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<SpectralGrid> {
        SpectralGrid::with_center(self.grid.n_points, self.grid.omega_max, self.grid.center_wavelength_nm)
    }

    pub fn pump_spec(&self) -> Result<PumpSpec> {
        match (self.pump.bandwidth_mhz, self.pump.bandwidth_rad_per_fs) {
            (Some(mhz), None) => PumpSpec::from_mhz(mhz, self.pump.wavelength_nm),
            (None, Some(bw)) => PumpSpec::new(bw, self.pump.wavelength_nm),
            _ => Err(Error::InvalidParameter("pump bandwidth must be given exactly once".into())),
        }
    }

    pub fn crystal(&self, role: CrystalRole) -> Result<CrystalSpec> {
        let c = match role {
            CrystalRole::Spdc => &self.spdc,
            CrystalRole::Sfg => &self.sfg,
        };
        let dispersion = match &c.dispersion {
            DispersionConfig::TaylorMismatch { delta_k0, a1, a2, a3 } => DispersionModel::TaylorMismatch {
                delta_k0: delta_k0.unwrap_or(-qpm_wavenumber(c.poling_period_um)),
                a1: *a1,
                a2: *a2,
                a3: *a3,
            },
            DispersionConfig::Sellmeier { a, terms, d, validity_um } => DispersionModel::Sellmeier {
                index: SellmeierIndex {
                    a: *a,
                    terms: terms.iter().map(|&[b, c]| SellmeierTerm { b, c }).collect(),
                    d: *d,
                    validity_um: validity_um.map(|[lo, hi]| (lo, hi)),
                },
                pump_center_frequency: self.grid_spec()?.pump_center_frequency(),
            },
        };
        CrystalSpec::new(c.length_mm, c.poling_period_um, dispersion, role)
    }
}

/// One output file held in memory until the whole scenario succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub experiment: &'static str,
    pub summary: String,
    pub report: Value,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub experiments: Vec<ExperimentOutput>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Run experiments concurrently.
    pub parallel: bool,
}

/// Amplitudes shared between experiments, built on first use.
struct Sources<'a> {
    scenario: &'a Scenario,
    gamma: OnceLock<Result<JointAmplitude>>,
    gamma_psf: OnceLock<Result<JointAmplitude>>,
}

fn clone_result(r: &Result<JointAmplitude>) -> Result<&JointAmplitude> {
    r.as_ref().map_err(|e| Error::InvalidParameter(format!("source amplitude: {e}")))
}

impl<'a> Sources<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        Self {
            scenario,
            gamma: OnceLock::new(),
            gamma_psf: OnceLock::new(),
        }
    }

    fn gamma(&self) -> Result<&JointAmplitude> {
        clone_result(self.gamma.get_or_init(|| {
            let s = self.scenario;
            let options = BuildOptions {
                include_phase: s.include_phase,
                pump_clamp_cells: s.pump.clamp_cells,
            };
            build_joint_amplitude_with(
                &s.grid_spec()?,
                &s.pump_spec()?,
                &s.crystal(CrystalRole::Spdc)?,
                Some(&s.crystal(CrystalRole::Sfg)?),
                &options,
            )
        }))
    }

    fn gamma_psf(&self) -> Result<&JointAmplitude> {
        clone_result(self.gamma_psf.get_or_init(|| apply_psf(self.gamma()?, self.scenario.psf_fwhm)))
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidParameter(format!("CSV encoding: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidParameter(format!("CSV encoding: {e}")))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn scan_csv(scan: &FringeScan, fit: Option<&FitResult>) -> Result<Vec<u8>> {
    match fit {
        Some(f) => csv_bytes(
            &["phi_rad", "signal", "fit"],
            scan.phases
                .iter()
                .zip(&scan.values)
                .map(|(&p, &v)| vec![fmt(p), fmt(v), fmt(f.evaluate(p))]),
        ),
        None => csv_bytes(
            &["phi_rad", "signal"],
            scan.phases.iter().zip(&scan.values).map(|(&p, &v)| vec![fmt(p), fmt(v)]),
        ),
    }
}

fn counts_csv(record: &CountRecord) -> Result<Vec<u8>> {
    csv_bytes(
        &["phi_rad", "gross", "background", "duration_s"],
        record
            .phases
            .iter()
            .zip(record.gross.iter().zip(&record.background))
            .map(|(&p, (&g, &b))| vec![fmt(p), g.to_string(), b.to_string(), fmt(record.duration_s)]),
    )
}

fn fit_json(fit: &FitResult) -> Value {
    let names = fit.model.parameter_names();
    let params: serde_json::Map<String, Value> = names
        .iter()
        .zip(fit.parameters.iter().zip(&fit.uncertainties))
        .map(|(n, (v, u))| (n.to_string(), json!({"value": v, "sigma": u})))
        .collect();
    json!({
        "model": fit.model,
        "parameters": params,
        "residual_norm": fit.residual_norm,
        "iterations": fit.iterations,
    })
}

/// `d` bins with 0.03 rad/fs center spacing, symmetric about degeneracy.
fn default_centers(d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| default_bin_spacing() * (j as f64 + 0.5 - d as f64 / 2.0))
        .collect()
}

/// Idler bins as given and signal bins mirrored through degeneracy, so that
/// energy conservation pairs idler bin `j` with signal bin `j`.
fn mirrored_bins(centers: &[f64], widths: &[f64], grid: &SpectralGrid) -> Result<(BasisSet, BasisSet)> {
    let mirrored: Vec<f64> = centers.iter().map(|c| -c).collect();
    Ok((frequency_bins(centers, widths, grid)?, frequency_bins(&mirrored, widths, grid)?))
}

struct LambdaVerdict {
    lambda: f64,
    sigma: f64,
    visibility: f64,
    v_c: f64,
}

impl LambdaVerdict {
    fn new(fit: &FitResult, d: usize) -> Result<Self> {
        let (lambda, sigma) = fit.lambda().expect("lambda model");
        Ok(Self {
            lambda,
            sigma,
            visibility: fit.visibility().expect("lambda model"),
            v_c: cglmp_thresholds(d)?.v_c,
        })
    }

    fn pass(&self) -> bool {
        self.visibility > self.v_c
    }

    fn text(&self, d: usize) -> String {
        format!(
            "λ_{d} = {:.4} ± {:.4}, V_{d} = {:.4} vs V_c = {:.3}: {}",
            self.lambda,
            self.sigma,
            self.visibility,
            self.v_c,
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }

    fn json(&self) -> Value {
        json!({
            "lambda": self.lambda,
            "lambda_sigma": self.sigma,
            "visibility": self.visibility,
            "critical_visibility": self.v_c,
            "entangled": self.pass(),
        })
    }
}

/// Fit a λ scan, optionally through synthesized counts, and package outputs.
fn finish_lambda_scan(
    scenario: &Scenario,
    seed: u64,
    scan: &FringeScan,
    d: usize,
    artifacts: &mut Vec<Artifact>,
    report: &mut serde_json::Map<String, Value>,
) -> Result<LambdaVerdict> {
    let fit = match &scenario.counts {
        Some(c) => {
            let record = synthesize_counts(scan, c.peak_rate_hz, c.background_rate_hz, c.duration_s, seed)?;
            artifacts.push(Artifact {
                name: String::new(),
                contents: counts_csv(&record)?,
            });
            fit_fringe_counts(&record, d)?
        }
        None => fit_fringe(scan, d)?,
    };
    artifacts.insert(
        artifacts.len().saturating_sub(usize::from(scenario.counts.is_some())),
        Artifact {
            name: String::new(),
            contents: scan_csv(scan, if scenario.counts.is_none() { Some(&fit) } else { None })?,
        },
    );
    let verdict = LambdaVerdict::new(&fit, d)?;
    report.insert("fit".into(), fit_json(&fit));
    report.insert("verdict".into(), verdict.json());
    if let Some(l) = scan.leakage {
        report.insert("truncation_leakage".into(), json!(l));
    }
    Ok(verdict)
}

fn run_experiment(spec: &ExperimentSpec, sources: &Sources, seed: u64) -> Result<ExperimentOutput> {
    let scenario = sources.scenario;
    let mut artifacts = Vec::new();
    let mut report = serde_json::Map::new();
    let name = spec.name();
    let summary = match spec {
        ExperimentSpec::Fig2Amplitude(p) => {
            let gamma = sources.gamma()?;
            let psf = sources.gamma_psf()?;
            let axis = gamma.grid().axis();
            for amp in [gamma, psf] {
                let mut rows = Vec::new();
                for j in (0..axis.len()).step_by(p.stride) {
                    for i in (0..axis.len()).step_by(p.stride) {
                        let z = amp.values()[(i, j)];
                        rows.push(vec![fmt(axis[i]), fmt(axis[j]), fmt(z.re), fmt(z.im)]);
                    }
                }
                artifacts.push(Artifact {
                    name: String::new(),
                    contents: csv_bytes(&["omega_i", "omega_s", "re", "im"], rows)?,
                });
            }
            let meta = gamma.metadata();
            report.insert("pump_clamped".into(), json!(meta.pump_clamped));
            report.insert("effective_pump_bandwidth".into(), json!(meta.effective_pump_bandwidth));
            report.insert("psf_fwhm".into(), json!(scenario.psf_fwhm));
            report.insert("warnings".into(), json!(meta.warnings));
            format!(
                "Γ and Γ_PSF exported on a {}² grid (stride {}), pump clamped: {}",
                axis.len(),
                p.stride,
                meta.pump_clamped
            )
        }
        ExperimentSpec::Fig3Schmidt(p) => {
            let psf = sources.gamma_psf()?;
            let dec = schmidt_decompose_modes(psf, p.modes)?;
            let axis = psf.grid().axis();
            let mut header = vec!["omega".to_string()];
            for j in 0..p.modes {
                header.push(format!("re_{j}"));
                header.push(format!("im_{j}"));
            }
            let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = axis.iter().enumerate().map(|(i, &w)| {
                let mut row = vec![fmt(w)];
                for j in 0..p.modes {
                    let z = dec.idler.functions()[(i, j)];
                    row.push(fmt(z.re));
                    row.push(fmt(z.im));
                }
                row
            });
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(&header_refs, rows)?,
            });
            let r = &dec.report;
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(
                    &["index", "beta"],
                    r.betas.iter().take(p.spectrum_len).enumerate().map(|(j, b)| vec![j.to_string(), fmt(*b)]),
                )?,
            });
            report.insert("entropy_ebits".into(), json!(r.entropy));
            report.insert("schmidt_number".into(), json!(r.schmidt_number));
            report.insert("effective_dimension".into(), json!(r.effective_dimension));
            report.insert("betas".into(), json!(r.betas.iter().take(p.spectrum_len).collect::<Vec<_>>()));
            format!(
                "E = {:.3} ebit, K = {:.3}, d_eff = {:.2}",
                r.entropy, r.schmidt_number, r.effective_dimension
            )
        }
        ExperimentSpec::FreqBinFringes(p) => {
            let phases = phase_grid(p.points);
            let ladder = PhaseLadder::uniform(p.d);
            let scan = match p.source {
                SourceConfig::Ideal => {
                    fringe_scan_state_noisy(&QuditState::maximally_entangled(p.d), p.lambda, &ladder, &phases)?
                }
                SourceConfig::Field => {
                    let amp = sources.gamma_psf()?;
                    let centers = p.centers.clone().unwrap_or_else(|| default_centers(p.d));
                    let widths = p.widths.clone().unwrap_or_else(|| vec![default_bin_width(); p.d]);
                    let (bi, bs) = mirrored_bins(&centers, &widths, amp.grid())?;
                    report.insert("centers".into(), json!(centers));
                    report.insert("widths".into(), json!(widths));
                    match p.route {
                        RouteConfig::StateSpace => fringe_scan_state(&project_state(amp, &bi, &bs)?, &ladder, &phases)?,
                        RouteConfig::FullField => fringe_scan_field(amp, &bi, &bs, &ladder, &phases)?,
                    }
                }
            };
            let v = finish_lambda_scan(scenario, seed, &scan, p.d, &mut artifacts, &mut report)?;
            v.text(p.d)
        }
        ExperimentSpec::TimeBinSweep(p) => {
            let amp = if p.psf { sources.gamma_psf()? } else { sources.gamma()? };
            let phases: Vec<f64> = phase_grid(p.points).iter().map(|x| 2.0 * x).collect();
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            for &t1 in &p.t1 {
                let scan = franson_fringe_scan(amp, t1, &phases)?;
                let g = fit_gamma(&scan)?;
                let (g1, g1s) = g.gamma1().expect("gamma model");
                let (g2, g2s) = g.gamma2().expect("gamma model");
                let i2 = bell_i2(g1, g2)?.value;
                let mut entry = json!({"t1_fs": t1, "fit": fit_json(&g), "i2": i2});
                if t1 == 0.0 {
                    let c = fit_cos4(&scan)?;
                    entry["cos4_fit"] = fit_json(&c);
                }
                entries.push(entry);
                artifacts.push(Artifact {
                    name: String::new(),
                    contents: scan_csv(&scan, Some(&g))?,
                });
                rows.push(vec![fmt(t1), fmt(g1), fmt(g1s), fmt(g2), fmt(g2s), fmt(i2)]);
            }
            let summary_rows = rows.clone();
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(&["t1_fs", "gamma1", "gamma1_sigma", "gamma2", "gamma2_sigma", "i2"], rows)?,
            });
            report.insert("psf".into(), json!(p.psf));
            report.insert("sweep".into(), Value::Array(entries));
            let parts: Vec<String> = summary_rows
                .iter()
                .map(|r| format!("t1={} fs: γ1={:.3} I2={:.3}", r[0].parse::<f64>().unwrap_or(0.0), r[1].parse::<f64>().unwrap_or(0.0), r[5].parse::<f64>().unwrap_or(0.0)))
                .collect();
            parts.join("; ")
        }
        ExperimentSpec::SchmidtFringes(p) => {
            let amp = sources.gamma_psf()?;
            let dec = schmidt_decompose_modes(amp, p.d)?;
            let betas = &dec.report.betas[..p.d];
            let amplitudes = if p.procrustean {
                procrustean_amplitudes(betas)?
            } else {
                vec![1.0; p.d]
            };
            let ladder = PhaseLadder::symmetric(amplitudes.clone());
            let phases = phase_grid(p.points);
            let scan = match p.route {
                RouteConfig::StateSpace => {
                    fringe_scan_state(&project_state(amp, &dec.idler, &dec.signal)?, &ladder, &phases)?
                }
                RouteConfig::FullField => fringe_scan_field(amp, &dec.idler, &dec.signal, &ladder, &phases)?,
            };
            report.insert("betas".into(), json!(betas));
            report.insert("filter_amplitudes".into(), json!(amplitudes));
            let v = finish_lambda_scan(scenario, seed, &scan, p.d, &mut artifacts, &mut report)?;
            v.text(p.d)
        }
        ExperimentSpec::BellI2Sweep(p) => {
            let phases: Vec<f64> = phase_grid(p.points).iter().map(|x| 2.0 * x).collect();
            let free = sources.gamma()?;
            let psf = sources.gamma_psf()?;
            let mut rows = Vec::new();
            let mut entries = Vec::new();
            for &t1 in &p.t1 {
                let mut vals = Vec::new();
                for amp in [free, psf] {
                    let fit = fit_gamma(&franson_fringe_scan(amp, t1, &phases)?)?;
                    let r = bell_i2(fit.gamma1().expect("gamma").0, fit.gamma2().expect("gamma").0)?;
                    vals.push(r.value);
                }
                entries.push(json!({"t1_fs": t1, "i2_psf_free": vals[0], "i2_psf": vals[1]}));
                rows.push(vec![fmt(t1), fmt(vals[0]), fmt(vals[1])]);
            }
            let best = entries
                .iter()
                .filter_map(|e| e["i2_psf_free"].as_f64())
                .fold(f64::MIN, f64::max);
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(&["t1_fs", "i2_psf_free", "i2_psf"], rows)?,
            });
            report.insert("sweep".into(), Value::Array(entries));
            format!(
                "max PSF-free I2 = {best:.3} ({})",
                if best > 2.0 { "violates I2 <= 2" } else { "no violation" }
            )
        }
        ExperimentSpec::Procrustean(p) => {
            let amp = sources.gamma_psf()?;
            let centers = p.centers.clone().unwrap_or_else(|| default_centers(p.d));
            let widths = p
                .widths
                .clone()
                .unwrap_or_else(|| (0..p.d).map(|j| default_bin_width() * (1.0 - 0.2 * j as f64)).collect());
            let (bi, bs) = mirrored_bins(&centers, &widths, amp.grid())?;
            let before = single_projection_signals(amp, &bi, &bs, &vec![1.0; p.d])?;
            let u = procrustean_amplitudes(&before)?;
            let after = single_projection_signals(amp, &bi, &bs, &u)?;
            let max = after.iter().copied().fold(f64::MIN, f64::max);
            let min = after.iter().copied().fold(f64::MAX, f64::min);
            let spread = (max - min) / max;
            let scan = fringe_scan_field(amp, &bi, &bs, &PhaseLadder::symmetric(u.clone()), &phase_grid(p.points))?;
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(
                    &["bin", "signal_before", "amplitude", "signal_after"],
                    (0..p.d).map(|k| vec![k.to_string(), fmt(before[k]), fmt(u[k]), fmt(after[k])]),
                )?,
            });
            report.insert("centers".into(), json!(centers));
            report.insert("widths".into(), json!(widths));
            report.insert("signals_before".into(), json!(before));
            report.insert("amplitudes".into(), json!(u));
            report.insert("signals_after".into(), json!(after));
            report.insert("relative_spread".into(), json!(spread));
            let v = finish_lambda_scan(scenario, seed, &scan, p.d, &mut artifacts, &mut report)?;
            format!("filtered S_k spread {:.2e}; {}", spread, v.text(p.d))
        }
        ExperimentSpec::FluxCheck(p) => {
            let f = photon_flux_limit(p.bandwidth_nm, p.wavelength_nm)?;
            let n = f.mode_density(p.power_w);
            artifacts.push(Artifact {
                name: String::new(),
                contents: csv_bytes(
                    &["quantity", "value"],
                    [
                        vec!["max_flux_per_s".to_string(), fmt(f.flux)],
                        vec!["max_power_w".to_string(), fmt(f.power_w)],
                        vec!["mode_density".to_string(), fmt(n)],
                    ],
                )?,
            });
            report.insert("max_flux_per_s".into(), json!(f.flux));
            report.insert("max_power_w".into(), json!(f.power_w));
            report.insert("mode_density".into(), json!(n));
            format!(
                "Φ_max = {:.3e} /s, P_max = {:.2} µW, n = {:.3} at {:.2} µW",
                f.flux,
                f.power_w * 1e6,
                n,
                p.power_w * 1e6
            )
        }
    };
    report.insert("summary".into(), json!(summary));
    Ok(ExperimentOutput {
        experiment: name,
        summary,
        report: Value::Object(report),
        artifacts,
    })
}

/// Execute every experiment of a scenario. Nothing is written to disk.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<RunOutput> {
    let seed = options.seed.unwrap_or(scenario.seed);
    let sources = Sources::new(scenario);
    // Each experiment gets its own stream derived from the run seed.
    let job = |(idx, spec): (usize, &ExperimentSpec)| {
        run_experiment(spec, &sources, seed.wrapping_add(idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    };
    let outputs: Vec<Result<ExperimentOutput>> = if options.parallel {
        scenario.experiments.par_iter().enumerate().map(job).collect()
    } else {
        scenario.experiments.iter().enumerate().map(job).collect()
    };
    let mut experiments = outputs.into_iter().collect::<Result<Vec<_>>>()?;

    let mut counters: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for (exp, spec) in experiments.iter_mut().zip(&scenario.experiments) {
        let d = spec.dimension();
        for a in &mut exp.artifacts {
            let idx = counters.entry((exp.experiment.to_string(), d)).or_insert(0);
            a.name = format!("{}_{}_{}.csv", exp.experiment, d, idx);
            *idx += 1;
        }
        if let Value::Object(map) = &mut exp.report {
            map.insert(
                "artifacts".into(),
                json!(exp.artifacts.iter().map(|a| a.name.clone()).collect::<Vec<_>>()),
            );
        }
    }
    Ok(RunOutput { experiments, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub report: ManifestEntry,
    /// One entry per CSV artifact.
    pub entries: Vec<ManifestEntry>,
}

pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: file exists (use --force to overwrite)")]
    Exists { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Report document for a run.
pub fn report_json(run: &RunOutput) -> Vec<u8> {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": run.seed,
        "experiments": run.experiments.iter().map(|e| json!({"experiment": e.experiment, "result": e.report})).collect::<Vec<_>>(),
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("JSON values serialize");
    bytes.push(b'\n');
    bytes
}

/// Write all artifacts, the report and the manifest into `dir`.
///
/// Existing files are only replaced when `force` is set; the check runs
/// before anything is written.
pub fn emit_outputs(run: &RunOutput, dir: &Path, force: bool) -> std::result::Result<Manifest, OutputError> {
    let report = report_json(run);
    let files: Vec<(String, &[u8])> = run
        .experiments
        .iter()
        .flat_map(|e| e.artifacts.iter().map(|a| (a.name.clone(), a.contents.as_slice())))
        .collect();

    let all_names = files.iter().map(|(n, _)| n.as_str()).chain([REPORT_FILE, MANIFEST_FILE]);
    if !force {
        for name in all_names {
            let path = dir.join(name);
            if path.exists() {
                return Err(OutputError::Exists { path });
            }
        }
    }
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|source| OutputError::Io { path, source })?;
        Ok(ManifestEntry {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        })
    };
    let entries = files
        .iter()
        .map(|(name, bytes)| write(name, bytes))
        .collect::<std::result::Result<Vec<_>, OutputError>>()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed: run.seed,
        report: write(REPORT_FILE, &report)?,
        entries,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, bytes).map_err(|source| OutputError::Io { path, source })?;
    Ok(manifest)
}

/// Scan phases over `[0, 2π)` for fringes with period 2π.
pub fn full_period_phases(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let s = Scenario::from_toml_str("schema_version = 1\n").unwrap();
        assert_eq!(s.grid.n_points, 1025);
        assert_eq!(s.pump.bandwidth_mhz, Some(5.0));
        assert_eq!(s.psf_fwhm, 9.6e-3);
        assert!(s.experiments.is_empty());
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let e = Scenario::from_toml_str("schema_version = 1\n[grid]\nn_pointz = 5\n").unwrap_err();
        assert!(e.path.contains("grid"), "{e}");
        let e = Scenario::from_toml_str("schema_version = 1\n[[experiment]]\nkind = \"freq_bin_fringes\"\nd = 7\n").unwrap_err();
        assert_eq!(e.path, "experiment[0].d");
        let e = Scenario::from_toml_str("schema_version = 2\n").unwrap_err();
        assert_eq!(e.path, "schema_version");
    }

    #[test]
    fn experiment_names_and_dimensions() {
        let s = Scenario::from_toml_str(
            "schema_version = 1\n[[experiment]]\nkind = \"flux_check\"\n[[experiment]]\nkind = \"procrustean\"\nd = 3\n",
        )
        .unwrap();
        assert_eq!(s.experiments[0].name(), "flux_check");
        assert_eq!(s.experiments[1].dimension(), 3);
    }

    #[test]
    fn default_bins_are_symmetric() {
        let c = default_centers(2);
        assert!((c[0] + c[1]).abs() < 1e-15);
        let c = default_centers(3);
        assert_eq!(c[1], 0.0);
    }
}
