//! Two-photon spectral amplitudes.
//!
//! The joint spectral amplitude of the down-converted pair is the product of
//! the pump envelope and the crystal's phase-matching function. Detection by
//! sum-frequency generation multiplies in a second phase-matching function,
//! and the finite spectral resolution at the shaper is modeled as a Gaussian
//! blur of the amplitude.

use std::f64::consts::{LN_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolve::convolve_separable_same;
use crate::grid::{mhz_to_rad_per_fs, SpectralGrid};
use crate::{Error, Result, SPEED_OF_LIGHT_NM_PER_FS};

/// Speed of light in mm/fs.
const C_MM_PER_FS: f64 = SPEED_OF_LIGHT_NM_PER_FS * 1e-6;

/// Samples required across the phase-matching main lobe.
const MIN_LOBE_SAMPLES: usize = 8;

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Pump laser. `bandwidth` is the FWHM of the spectral intensity in rad/fs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    pub bandwidth: f64,
    pub wavelength_nm: f64,
}

impl PumpSpec {
    pub fn new(bandwidth: f64, wavelength_nm: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pump bandwidth must be positive, got {bandwidth}"
            )));
        }
        if !(wavelength_nm > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pump wavelength must be positive, got {wavelength_nm}"
            )));
        }
        Ok(Self {
            bandwidth,
            wavelength_nm,
        })
    }

    pub fn from_mhz(bandwidth_mhz: f64, wavelength_nm: f64) -> Result<Self> {
        Self::new(mhz_to_rad_per_fs(bandwidth_mhz), wavelength_nm)
    }

    /// Single-mode 532 nm laser with 5 MHz linewidth.
    pub fn lab_default() -> Self {
        Self::from_mhz(5.0, 532.0).expect("valid default pump")
    }
}

/// Gaussian pump envelope `exp(-(ω_i+ω_s)² 2 ln2 / Δω_p²)`.
pub fn pump_envelope(omega_sum: f64, pump: &PumpSpec) -> f64 {
    (-omega_sum * omega_sum * 2.0 * LN_2 / (pump.bandwidth * pump.bandwidth)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrystalRole {
    Spdc,
    Sfg,
}

/// One Sellmeier pole `b / (λ² - c)` with λ in µm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SellmeierTerm {
    pub b: f64,
    pub c: f64,
}

/// Refractive index `n²(λ) = a + Σ b_k / (λ² - c_k) - d λ²`, λ in µm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SellmeierIndex {
    pub a: f64,
    pub terms: Vec<SellmeierTerm>,
    #[serde(default)]
    pub d: f64,
    /// Declared validity window in µm, if any.
    #[serde(default)]
    pub validity_um: Option<(f64, f64)>,
}

impl SellmeierIndex {
    pub fn index(&self, wavelength_um: f64) -> Result<f64> {
        if let Some((lo, hi)) = self.validity_um {
            if wavelength_um < lo || wavelength_um > hi {
                return Err(Error::Domain(format!(
                    "{wavelength_um:.4} µm outside [{lo}, {hi}] µm"
                )));
            }
        }
        let l2 = wavelength_um * wavelength_um;
        let n2 = self.a + self.terms.iter().map(|t| t.b / (l2 - t.c)).sum::<f64>() - self.d * l2;
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::Domain(format!(
                "Sellmeier index undefined at {wavelength_um:.4} µm"
            )));
        }
        Ok(n2.sqrt())
    }

    /// Wavenumber in rad/mm at absolute angular frequency `omega` (rad/fs).
    pub fn wavenumber(&self, omega: f64) -> Result<f64> {
        let wavelength_um = 2.0 * PI * SPEED_OF_LIGHT_NM_PER_FS / omega * 1e-3;
        Ok(self.index(wavelength_um)? * omega / C_MM_PER_FS)
    }
}

/// Material phase mismatch `k_i + k_s - k_p` as a function of the relative
/// idler and signal frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DispersionModel {
    /// `Δk₀ + a₁(ω_i+ω_s) + a₂(ω_i−ω_s)² + a₃(ω_i+ω_s)²` in rad/mm, with
    /// frequencies in rad/fs.
    TaylorMismatch {
        delta_k0: f64,
        #[serde(default)]
        a1: f64,
        #[serde(default)]
        a2: f64,
        #[serde(default)]
        a3: f64,
    },
    /// Full dispersion from a Sellmeier index; `pump_center_frequency` is the
    /// absolute ω_p in rad/fs the relative axis is referenced to.
    Sellmeier {
        index: SellmeierIndex,
        pump_center_frequency: f64,
    },
}

impl DispersionModel {
    /// Perfect quasi-phase matching at every frequency pair.
    pub fn perfect(poling_period_um: f64) -> Self {
        DispersionModel::TaylorMismatch {
            delta_k0: -qpm_wavenumber(poling_period_um),
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
        }
    }

    fn material_mismatch(&self, omega_i: f64, omega_s: f64) -> Result<f64> {
        match self {
            DispersionModel::TaylorMismatch { delta_k0, a1, a2, a3 } => {
                let sum = omega_i + omega_s;
                let diff = omega_i - omega_s;
                Ok(delta_k0 + a1 * sum + a2 * diff * diff + a3 * sum * sum)
            }
            DispersionModel::Sellmeier {
                index,
                pump_center_frequency,
            } => {
                let half = 0.5 * pump_center_frequency;
                let ki = index.wavenumber(omega_i + half)?;
                let ks = index.wavenumber(omega_s + half)?;
                let kp = index.wavenumber(omega_i + omega_s + pump_center_frequency)?;
                Ok(ki + ks - kp)
            }
        }
    }
}

/// Grating vector `2π/G` in rad/mm for a poling period in µm.
pub fn qpm_wavenumber(poling_period_um: f64) -> f64 {
    2.0 * PI / poling_period_um * 1e3
}

/// Default quadratic mismatch coefficient (rad/mm per (rad/fs)²) of the
/// shipped calibration.
pub const DEFAULT_A2: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSpec {
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub dispersion: DispersionModel,
    pub role: CrystalRole,
}

impl CrystalSpec {
    pub fn new(length_mm: f64, poling_period_um: f64, dispersion: DispersionModel, role: CrystalRole) -> Result<Self> {
        if !(length_mm > 0.0) || !(poling_period_um > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "crystal length and poling period must be positive (L = {length_mm}, G = {poling_period_um})"
            )));
        }
        Ok(Self {
            length_mm,
            poling_period_um,
            dispersion,
            role,
        })
    }

    /// 11.5 mm PPKTP with 9 µm poling and the shipped Taylor calibration.
    pub fn lab_default(role: CrystalRole) -> Self {
        let g = 9.0;
        Self::new(
            11.5,
            g,
            DispersionModel::TaylorMismatch {
                delta_k0: -qpm_wavenumber(g),
                a1: 0.0,
                a2: DEFAULT_A2,
                a3: 0.0,
            },
            role,
        )
        .expect("valid default crystal")
    }
}

/// Phase mismatch in rad/mm; SPDC uses `k_i + k_s − k_p`, SFG the negation.
pub fn phase_mismatch(omega_i: f64, omega_s: f64, crystal: &CrystalSpec) -> Result<f64> {
    let dk = crystal.dispersion.material_mismatch(omega_i, omega_s)?;
    Ok(match crystal.role {
        CrystalRole::Spdc => dk,
        CrystalRole::Sfg => -dk,
    })
}

/// Half the accumulated phase, `(Δk ± 2π/G) L / 2`.
fn phase_argument(omega_i: f64, omega_s: f64, crystal: &CrystalSpec) -> Result<f64> {
    let dk = phase_mismatch(omega_i, omega_s, crystal)?;
    let k_g = qpm_wavenumber(crystal.poling_period_um);
    let shifted = match crystal.role {
        CrystalRole::Spdc => dk + k_g,
        CrystalRole::Sfg => dk - k_g,
    };
    Ok(shifted * crystal.length_mm / 2.0)
}

/// Quasi-phase-matching function `sinc(x) [e^{ix}]`.
pub fn phase_matching(omega_i: f64, omega_s: f64, crystal: &CrystalSpec, include_phase: bool) -> Result<Complex64> {
    let x = phase_argument(omega_i, omega_s, crystal)?;
    let mag = sinc(x);
    Ok(if include_phase {
        Complex64::from_polar(1.0, x) * mag
    } else {
        Complex64::new(mag, 0.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AmplitudeKind {
    Lambda,
    Gamma,
    GammaPsf,
    /// User-supplied analytic field.
    Custom,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeMetadata {
    /// The pump bandwidth was below the grid resolution and was widened.
    pub pump_clamped: bool,
    /// Pump bandwidth actually used (rad/fs).
    pub effective_pump_bandwidth: Option<f64>,
    pub psf_fwhm: Option<f64>,
    pub warnings: Vec<String>,
}

/// Complex amplitude on `grid × grid`, indexed `(idler, signal)`, normalized
/// under the 2-D trapezoid rule.
#[derive(Debug, Clone)]
pub struct JointAmplitude {
    grid: SpectralGrid,
    values: DMatrix<Complex64>,
    kind: AmplitudeKind,
    metadata: AmplitudeMetadata,
}

impl JointAmplitude {
    /// Wrap and normalize a sampled field.
    pub fn from_values(grid: SpectralGrid, values: DMatrix<Complex64>, kind: AmplitudeKind) -> Result<Self> {
        let n = grid.n_points();
        if values.shape() != (n, n) {
            return Err(Error::Dimension {
                expected: n,
                got: values.nrows(),
            });
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("joint amplitude".into()));
        }
        let mut amp = Self {
            grid,
            values,
            kind,
            metadata: AmplitudeMetadata::default(),
        };
        amp.normalize()?;
        Ok(amp)
    }

    /// Sample `f(ω_i, ω_s)` on the grid and normalize.
    pub fn from_fn(grid: SpectralGrid, kind: AmplitudeKind, f: impl Fn(f64, f64) -> Complex64) -> Result<Self> {
        let axis = grid.axis();
        let n = grid.n_points();
        let values = DMatrix::from_fn(n, n, |i, j| f(axis[i], axis[j]));
        Self::from_values(grid, values, kind)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<Complex64> {
        &self.values
    }

    pub fn kind(&self) -> AmplitudeKind {
        self.kind
    }

    pub fn metadata(&self) -> &AmplitudeMetadata {
        &self.metadata
    }

    /// `∫∫ |Γ|²` with trapezoid weights.
    pub fn norm_squared(&self) -> f64 {
        let w = self.grid.weights();
        let n = self.grid.n_points();
        let mut acc = 0.0;
        for j in 0..n {
            for i in 0..n {
                acc += w[i] * w[j] * self.values[(i, j)].norm_sqr();
            }
        }
        acc
    }

    fn normalize(&mut self) -> Result<()> {
        let norm2 = self.norm_squared();
        if !(norm2 > 0.0) {
            return Err(Error::InvalidParameter("amplitude vanishes on the grid".into()));
        }
        let s = 1.0 / norm2.sqrt();
        self.values.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// Largest `|Γ(i, j) − Γ(j, i)|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.grid.n_points();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in (j + 1)..n {
                worst = worst.max((self.values[(i, j)] - self.values[(j, i)]).norm());
            }
        }
        worst
    }

    /// `Γ(ω, −ω)` along the energy-conserving anti-diagonal.
    pub fn anti_diagonal(&self) -> Vec<Complex64> {
        let n = self.grid.n_points();
        (0..n).map(|k| self.values[(k, n - 1 - k)]).collect()
    }

    /// `Γ(ω, ω)` along the diagonal.
    pub fn diagonal(&self) -> Vec<Complex64> {
        let n = self.grid.n_points();
        (0..n).map(|k| self.values[(k, k)]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Keep the `e^{ix}` factors of the phase-matching functions.
    pub include_phase: bool,
    /// Minimum pump bandwidth in grid cells; `0` disables the clamp.
    pub pump_clamp_cells: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            include_phase: false,
            pump_clamp_cells: 3.0,
        }
    }
}

/// Λ (without an SFG crystal) or Γ (with one) using the default options.
pub fn build_joint_amplitude(
    grid: &SpectralGrid,
    pump: &PumpSpec,
    spdc: &CrystalSpec,
    sfg: Option<&CrystalSpec>,
) -> Result<JointAmplitude> {
    build_joint_amplitude_with(grid, pump, spdc, sfg, &BuildOptions::default())
}

pub fn build_joint_amplitude_with(
    grid: &SpectralGrid,
    pump: &PumpSpec,
    spdc: &CrystalSpec,
    sfg: Option<&CrystalSpec>,
    options: &BuildOptions,
) -> Result<JointAmplitude> {
    if spdc.role != CrystalRole::Spdc {
        return Err(Error::InvalidParameter("preparation crystal must have the SPDC role".into()));
    }
    if let Some(c) = sfg {
        if c.role != CrystalRole::Sfg {
            return Err(Error::InvalidParameter("detection crystal must have the SFG role".into()));
        }
    }
    check_lobe_resolution(grid, spdc)?;
    if let Some(c) = sfg {
        check_lobe_resolution(grid, c)?;
    }

    let min_bw = options.pump_clamp_cells * grid.spacing();
    let clamped = pump.bandwidth < min_bw;
    let effective = PumpSpec {
        bandwidth: if clamped { min_bw } else { pump.bandwidth },
        ..*pump
    };

    let axis = grid.axis();
    let n = grid.n_points();
    let columns: Vec<Result<Vec<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let ws = axis[j];
            let mut col = Vec::with_capacity(n);
            for &wi in &axis {
                let alpha = pump_envelope(wi + ws, &effective);
                let mut v = phase_matching(wi, ws, spdc, options.include_phase)? * alpha;
                if let Some(c) = sfg {
                    v *= phase_matching(wi, ws, c, options.include_phase)?;
                }
                col.push(v);
            }
            Ok(col)
        })
        .collect();
    let mut data = Vec::with_capacity(n * n);
    for col in columns {
        data.extend(col?);
    }
    let values = DMatrix::from_vec(n, n, data);
    let kind = if sfg.is_some() {
        AmplitudeKind::Gamma
    } else {
        AmplitudeKind::Lambda
    };
    let mut amp = JointAmplitude::from_values(grid.clone(), values, kind)?;
    amp.metadata.pump_clamped = clamped;
    amp.metadata.effective_pump_bandwidth = Some(effective.bandwidth);
    if clamped {
        amp.metadata.warnings.push(format!(
            "pump bandwidth {:.3e} rad/fs below {} grid cells; clamped to {:.3e} rad/fs",
            pump.bandwidth, options.pump_clamp_cells, effective.bandwidth
        ));
    }
    Ok(amp)
}

/// The phase-matching main lobe along the anti-diagonal must span at least
/// [`MIN_LOBE_SAMPLES`] grid samples.
fn check_lobe_resolution(grid: &SpectralGrid, crystal: &CrystalSpec) -> Result<()> {
    let axis = grid.axis();
    let n = axis.len();
    let args: Vec<f64> = axis
        .iter()
        .map(|&w| phase_argument(w, -w, crystal))
        .collect::<Result<_>>()?;
    let peak = (0..n)
        .min_by(|&a, &b| args[a].abs().partial_cmp(&args[b].abs()).unwrap())
        .unwrap_or(0);
    if args[peak].abs() >= PI {
        return Err(Error::Resolution(format!(
            "{:?} phase matching has no main lobe inside the window",
            crystal.role
        )));
    }
    let mut lo = peak;
    while lo > 0 && args[lo - 1].abs() < PI {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < n && args[hi + 1].abs() < PI {
        hi += 1;
    }
    let samples = hi - lo + 1;
    if samples < MIN_LOBE_SAMPLES {
        return Err(Error::Resolution(format!(
            "{:?} phase-matching main lobe spans {samples} samples (< {MIN_LOBE_SAMPLES})",
            crystal.role
        )));
    }
    Ok(())
}

/// Sampled 1-D profile of the point spread function, `k(m Δω)` for
/// `m = -h..=h`, truncated where it falls below ~1e-17 of its peak.
pub fn psf_kernel(grid: &SpectralGrid, fwhm: f64) -> Vec<f64> {
    let dw = grid.spacing();
    let sigma = fwhm / (2.0 * LN_2.sqrt());
    let h = ((9.0 * sigma / dw).ceil() as usize).min(grid.n_points() - 1);
    let c = 2.0 * LN_2 / (fwhm * fwhm);
    (0..=2 * h)
        .map(|k| {
            let w = (k as f64 - h as f64) * dw;
            (-w * w * c).exp()
        })
        .collect()
}

/// Convolve with the isotropic Gaussian point spread function
/// `exp(−(ω_i² + ω_s²) 2 ln2 / Δω_PSF²)` and renormalize.
pub fn apply_psf(amp: &JointAmplitude, fwhm: f64) -> Result<JointAmplitude> {
    if !(fwhm >= 0.0) || !fwhm.is_finite() {
        return Err(Error::InvalidParameter(format!("PSF width must be >= 0, got {fwhm}")));
    }
    let mut metadata = amp.metadata.clone();
    metadata.psf_fwhm = Some(fwhm);
    let values = if fwhm == 0.0 {
        amp.values.clone()
    } else {
        if fwhm < amp.grid.spacing() {
            metadata.warnings.push(format!(
                "PSF width {fwhm:.3e} rad/fs is narrower than one grid cell; convolution is close to identity"
            ));
        }
        let kernel = psf_kernel(&amp.grid, fwhm);
        convolve_separable_same(&amp.values, &kernel)
    };
    let mut out = JointAmplitude::from_values(amp.grid.clone(), values, AmplitudeKind::GammaPsf)?;
    out.metadata = metadata;
    Ok(out)
}

/// Maximum down-converted photon flux at the single-photon limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxLimit {
    /// Photons per second.
    pub flux: f64,
    /// Optical power in W.
    pub power_w: f64,
}

impl FluxLimit {
    /// Mean number of photons per spectral-temporal mode at `power_w`.
    pub fn mode_density(&self, power_w: f64) -> f64 {
        power_w / self.power_w
    }
}

const PLANCK: f64 = 6.626_070_15e-34;
const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// `Φ_max ≈ Δν = c Δλ / λ²`, `P_max = Φ_max h c / λ`.
pub fn photon_flux_limit(bandwidth_nm: f64, center_wavelength_nm: f64) -> Result<FluxLimit> {
    if !(bandwidth_nm > 0.0) || !(center_wavelength_nm > 0.0) {
        return Err(Error::InvalidParameter(
            "bandwidth and wavelength must be positive".into(),
        ));
    }
    let lambda = center_wavelength_nm * 1e-9;
    let flux = SPEED_OF_LIGHT_M_PER_S * bandwidth_nm * 1e-9 / (lambda * lambda);
    let power_w = flux * PLANCK * SPEED_OF_LIGHT_M_PER_S / lambda;
    Ok(FluxLimit { flux, power_w })
}
