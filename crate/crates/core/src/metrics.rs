//! Entanglement measures and Bell-type thresholds.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bases::{schmidt_pair_with_spectrum, BasisSet};
use crate::field::JointAmplitude;
use crate::linalg::weighted_svd;
use crate::{Error, Result};

/// Weights below this floor are left out of the entropy sum.
pub const ENTROPY_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    /// Schmidt weights, descending, summing to one.
    pub betas: Vec<f64>,
    /// von Neumann entropy in ebits.
    pub entropy: f64,
    pub schmidt_number: f64,
    /// `2^E`.
    pub effective_dimension: f64,
    /// Number of weights above [`ENTROPY_FLOOR`].
    pub rank: usize,
}

impl EntanglementReport {
    /// Report for a set of (not necessarily normalized) Schmidt weights.
    pub fn from_betas(betas: &[f64]) -> Result<Self> {
        if betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::NonFinite("Schmidt weights".into()));
        }
        let total: f64 = betas.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("Schmidt weights sum to zero".into()));
        }
        let mut betas: Vec<f64> = betas.iter().map(|b| b / total).collect();
        betas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let kept = betas.iter().filter(|&&b| b > ENTROPY_FLOOR);
        let entropy = -kept.clone().map(|b| b * b.log2()).sum::<f64>();
        let purity: f64 = betas.iter().map(|b| b * b).sum();
        Ok(Self {
            rank: kept.count(),
            entropy: entropy.max(0.0),
            schmidt_number: 1.0 / purity,
            effective_dimension: entropy.max(0.0).exp2(),
            betas,
        })
    }
}

/// Schmidt spectrum and entanglement measures of a joint amplitude.
pub fn schmidt_decompose(amp: &JointAmplitude) -> Result<EntanglementReport> {
    let svd = weighted_svd(amp.values(), &amp.grid().weights(), false)?;
    let betas: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    EntanglementReport::from_betas(&betas)
}

/// Report together with the first `d` idler and signal modes.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub report: EntanglementReport,
    pub idler: BasisSet,
    pub signal: BasisSet,
}

pub fn schmidt_decompose_modes(amp: &JointAmplitude, d: usize) -> Result<SchmidtDecomposition> {
    let (idler, signal, sv) = schmidt_pair_with_spectrum(amp, d)?;
    let betas: Vec<f64> = sv.iter().map(|s| s * s).collect();
    let report = EntanglementReport::from_betas(&betas)?;
    Ok(SchmidtDecomposition { report, idler, signal })
}

/// Closed-form Schmidt number of
/// `exp(−(ω_i+ω_s)²/4a² − (ω_i−ω_s)²/4b²)`, namely `(a/b + b/a)/2`.
pub fn double_gaussian_oracle(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParameter(format!("widths must be positive (a = {a}, b = {b})")));
    }
    Ok(0.5 * (a / b + b / a))
}

/// Schmidt weights of the same double Gaussian, `β_j = (1 − μ) μ^j` with
/// `μ = ((b − a)/(b + a))²`, truncated to `n` terms.
pub fn double_gaussian_betas(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mu = ((b - a) / (b + a)).powi(2);
    (0..n).map(|j| (1.0 - mu) * mu.powi(j as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CglmpThresholds {
    pub d: usize,
    pub i_max: f64,
    pub lambda_c: f64,
    pub v_c: f64,
}

/// Largest quantum value of the CGLMP expression for `d = 2, 3, 4`.
pub fn cglmp_max(d: usize) -> Result<f64> {
    match d {
        2 => Ok(2.0 * SQRT_2),
        3 => Ok(2.873),
        4 => Ok(2.896),
        _ => Err(Error::UnsupportedDimension(d)),
    }
}

pub fn cglmp_thresholds(d: usize) -> Result<CglmpThresholds> {
    let i_max = cglmp_max(d)?;
    let lambda_c = 2.0 / i_max;
    Ok(CglmpThresholds {
        d,
        i_max,
        lambda_c,
        v_c: visibility_from_lambda(lambda_c, d),
    })
}

/// `V = dλ / (2 + λ(d − 2))`.
pub fn visibility_from_lambda(lambda: f64, d: usize) -> f64 {
    let d = d as f64;
    d * lambda / (2.0 + lambda * (d - 2.0))
}

/// Inverse of [`visibility_from_lambda`], `λ = 2V / (d − V(d − 2))`.
pub fn lambda_from_visibility(v: f64, d: usize) -> f64 {
    let d = d as f64;
    2.0 * v / (d - v * (d - 2.0))
}

/// Analyzer phases for the two settings of each photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellSettings {
    pub idler: [f64; 2],
    pub signal: [f64; 2],
}

impl Default for BellSettings {
    fn default() -> Self {
        Self {
            idler: [0.0, FRAC_PI_2],
            signal: [FRAC_PI_4, -FRAC_PI_4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub d: usize,
    pub value: f64,
    pub settings: BellSettings,
    /// Correlators `E[x][y]` for idler setting x and signal setting y.
    pub correlators: [[f64; 2]; 2],
    pub lambda_c: f64,
    pub v_c: f64,
}

impl BellResult {
    pub fn violates(&self) -> bool {
        self.value > 2.0
    }
}

/// Two-photon signal `|1 + γ₁(e^{iφ_i} + e^{iφ_s}) + γ₂ e^{i(φ_i+φ_s)}|²`.
pub fn gamma_signal(gamma1: f64, gamma2: f64, phi_i: f64, phi_s: f64) -> f64 {
    let z = Complex64::new(1.0, 0.0)
        + gamma1 * (Complex64::from_polar(1.0, phi_i) + Complex64::from_polar(1.0, phi_s))
        + gamma2 * Complex64::from_polar(1.0, phi_i + phi_s);
    z.norm_sqr()
}

/// `I₂` with the default settings.
pub fn bell_i2(gamma1: f64, gamma2: f64) -> Result<BellResult> {
    bell_i2_with(gamma1, gamma2, &BellSettings::default())
}

/// `I₂ = E₁₁ + E₁₂ − E₂₁ + E₂₂` where outcome `a` of a photon shifts its
/// analyzer phase by `πa` and `E = P(same) − P(different)`.
pub fn bell_i2_with(gamma1: f64, gamma2: f64, settings: &BellSettings) -> Result<BellResult> {
    if !(gamma1 >= 0.0 && gamma2 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "γ₁ and γ₂ must be non-negative (got {gamma1}, {gamma2})"
        )));
    }
    let mut e = [[0.0; 2]; 2];
    for (x, &alpha) in settings.idler.iter().enumerate() {
        for (y, &beta) in settings.signal.iter().enumerate() {
            let mut p = [[0.0; 2]; 2];
            for (a, row) in p.iter_mut().enumerate() {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = gamma_signal(gamma1, gamma2, alpha + PI * a as f64, beta + PI * b as f64);
                }
            }
            let total: f64 = p.iter().flatten().sum();
            if !(total > 0.0) {
                return Err(Error::InvalidParameter("all outcome probabilities vanish".into()));
            }
            e[x][y] = (p[0][0] + p[1][1] - p[0][1] - p[1][0]) / total;
        }
    }
    let value = e[0][0] + e[0][1] - e[1][0] + e[1][1];
    let t = cglmp_thresholds(2)?;
    Ok(BellResult {
        d: 2,
        value,
        settings: *settings,
        correlators: e,
        lambda_c: t.lambda_c,
        v_c: t.v_c,
    })
}
