//! Single-photon spectral transfer functions applied by the pulse shaper.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bases::BasisSet;
use crate::grid::SpectralGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Idler,
    Signal,
}

/// Coefficients `u_j = |u_j| e^{iφ_j}` of a transfer function in a basis.
#[derive(Debug, Clone)]
pub struct TransferSpec<'a> {
    pub basis: &'a BasisSet,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub side: Side,
}

impl<'a> TransferSpec<'a> {
    pub fn new(basis: &'a BasisSet, amplitudes: Vec<f64>, phases: Vec<f64>, side: Side) -> Result<Self> {
        let d = basis.dimension();
        for len in [amplitudes.len(), phases.len()] {
            if len != d {
                return Err(Error::Dimension { expected: d, got: len });
            }
        }
        if amplitudes.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter("transfer amplitudes must lie in [0, 1]".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("transfer phases".into()));
        }
        Ok(Self {
            basis,
            amplitudes,
            phases,
            side,
        })
    }

    /// Unit amplitudes with the phase ladder `φ_j = jφ`.
    pub fn ladder(basis: &'a BasisSet, phi: f64, side: Side) -> Self {
        let d = basis.dimension();
        Self {
            basis,
            amplitudes: vec![1.0; d],
            phases: (0..d).map(|j| j as f64 * phi).collect(),
            side,
        }
    }

    pub fn coefficients(&self) -> Vec<Complex64> {
        self.amplitudes
            .iter()
            .zip(&self.phases)
            .map(|(&a, &p)| Complex64::from_polar(a, p))
            .collect()
    }
}

/// Complex transmission `M(ω)` sampled on a grid axis, with `|M| ≤ 1`.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    grid: SpectralGrid,
    values: Vec<Complex64>,
    scale: f64,
    pixelated: bool,
}

impl TransferFunction {
    /// Wrap raw samples, dividing by `max|M|` when it exceeds one.
    pub fn from_samples(grid: &SpectralGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::Dimension {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("transfer function".into()));
        }
        let peak = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
        Ok(Self::scaled(grid, values, scale))
    }

    pub(crate) fn scaled(grid: &SpectralGrid, mut values: Vec<Complex64>, scale: f64) -> Self {
        if scale != 1.0 {
            values.iter_mut().for_each(|z| *z *= scale);
        }
        Self {
            grid: grid.clone(),
            values,
            scale,
            pixelated: false,
        }
    }

    /// Unit transmission.
    pub fn identity(grid: &SpectralGrid) -> Self {
        Self::scaled(grid, vec![Complex64::new(1.0, 0.0); grid.n_points()], 1.0)
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Factor applied to the raw samples to satisfy `|M| ≤ 1`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_pixelated(&self) -> bool {
        self.pixelated
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Divide by the L∞ norm (for shape comparisons).
    pub fn peak_normalized(&self) -> Vec<Complex64> {
        let m = self.max_abs();
        self.values.iter().map(|z| z / m).collect()
    }
}

/// `Σ_j u_j f_j*(ω)` without enforcing `|M| ≤ 1`.
pub(crate) fn raw_transfer(basis: &BasisSet, coefficients: &[Complex64]) -> Vec<Complex64> {
    let f = basis.functions();
    (0..f.nrows())
        .map(|i| {
            coefficients
                .iter()
                .enumerate()
                .map(|(j, u)| u * f[(i, j)].conj())
                .sum()
        })
        .collect()
}

/// `M(ω) = Σ_j |u_j| e^{iφ_j} f_j*(ω)`, rescaled globally if `max|M| > 1`.
pub fn transfer_from_coefficients(spec: &TransferSpec) -> Result<TransferFunction> {
    let raw = raw_transfer(spec.basis, &spec.coefficients());
    TransferFunction::from_samples(spec.basis.grid(), raw)
}

/// Unbalanced Mach-Zehnder interferometer, `M(ω) = T + R e^{i(ωΔt + φ)}`.
pub fn franson_transfer(t: f64, r: f64, delta_t: f64, phi: f64, grid: &SpectralGrid) -> Result<TransferFunction> {
    if !(t >= 0.0 && r >= 0.0) || t + r > 1.0 + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "interferometer amplitudes need T, R >= 0 and T + R <= 1 (T = {t}, R = {r})"
        )));
    }
    let values = grid
        .axis()
        .iter()
        .map(|&w| Complex64::new(t, 0.0) + Complex64::from_polar(r, w * delta_t + phi))
        .collect();
    TransferFunction::from_samples(grid, values)
}

/// Affine map `x = offset_um + um_per_unit · (ω − ω_min)` from relative
/// frequency to transverse position on the modulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMapping {
    pub offset_um: f64,
    /// µm per rad/fs.
    pub um_per_unit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlmModel {
    pub n_pixels: usize,
    pub pixel_width_um: f64,
    pub gap_um: f64,
    /// `None` spreads the grid window over the full aperture.
    pub mapping: Option<AffineMapping>,
}

impl SlmModel {
    pub fn new(n_pixels: usize, pixel_width_um: f64, gap_um: f64) -> Result<Self> {
        if n_pixels == 0 || !(pixel_width_um > 0.0) || !(gap_um >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "SLM needs n_pixels >= 1, positive pixel width and non-negative gap (got {n_pixels}, {pixel_width_um}, {gap_um})"
            )));
        }
        Ok(Self {
            n_pixels,
            pixel_width_um,
            gap_um,
            mapping: None,
        })
    }

    /// 640 pixels, 100 µm wide, 3 µm gaps.
    pub fn lab_default() -> Self {
        Self::new(640, 100.0, 3.0).expect("valid default SLM")
    }

    pub fn pitch_um(&self) -> f64 {
        self.pixel_width_um + self.gap_um
    }

    /// Distance from the left edge of the first pixel to the right edge of
    /// the last.
    pub fn aperture_um(&self) -> f64 {
        self.n_pixels as f64 * self.pitch_um() - self.gap_um
    }

    fn mapping_for(&self, grid: &SpectralGrid) -> AffineMapping {
        self.mapping.unwrap_or(AffineMapping {
            offset_um: 0.0,
            um_per_unit: self.aperture_um() / grid.window(),
        })
    }

    /// `(pixel, overlap)` pairs for the transverse interval `[a, b]`, overlap
    /// in µm. Gaps and the region outside the aperture contribute nothing.
    fn overlaps(&self, a: f64, b: f64) -> Vec<(usize, f64)> {
        let pitch = self.pitch_um();
        let first = (a / pitch).floor().max(0.0) as usize;
        let last = ((b / pitch).floor().max(0.0) as usize).min(self.n_pixels - 1);
        (first..=last)
            .filter_map(|p| {
                let lo = p as f64 * pitch;
                let ov = b.min(lo + self.pixel_width_um) - a.max(lo);
                (ov > 0.0).then_some((p, ov))
            })
            .collect()
    }
}

/// Replace `M` by its per-pixel mean.
///
/// Each grid sample stands for a cell of one grid spacing; the cell is split
/// between the pixels it overlaps, and the parts falling into gaps or outside
/// the aperture transmit nothing.
pub fn pixelate(m: &TransferFunction, slm: &SlmModel) -> Result<TransferFunction> {
    let axis = m.grid.axis();
    let map = slm.mapping_for(&m.grid);
    let cell = map.um_per_unit * m.grid.spacing();
    let aperture = slm.aperture_um();
    let cells: Vec<(f64, f64)> = axis
        .iter()
        .map(|&w| {
            let x = map.offset_um + map.um_per_unit * (w - m.grid.omega_min());
            (x - 0.5 * cell, x + 0.5 * cell)
        })
        .collect();
    let outside: f64 = cells
        .iter()
        .map(|&(a, b)| (b - a) - (b.min(aperture) - a.max(0.0)).max(0.0))
        .sum();
    let fraction = outside / (cell * axis.len() as f64);
    if fraction > 0.1 {
        return Err(Error::Mapping(format!(
            "{:.1}% of the frequency axis falls outside the SLM aperture",
            100.0 * fraction
        )));
    }
    let hits: Vec<Vec<(usize, f64)>> = cells.iter().map(|&(a, b)| slm.overlaps(a, b)).collect();
    let mut sums = vec![Complex64::new(0.0, 0.0); slm.n_pixels];
    let mut weights = vec![0.0; slm.n_pixels];
    for (h, v) in hits.iter().zip(&m.values) {
        for &(p, ov) in h {
            sums[p] += v * ov;
            weights[p] += ov;
        }
    }
    let values = hits
        .iter()
        .map(|h| h.iter().map(|&(p, ov)| sums[p] / weights[p] * (ov / cell)).sum())
        .collect();
    Ok(TransferFunction {
        grid: m.grid.clone(),
        values,
        scale: m.scale,
        pixelated: true,
    })
}

/// Product modulation `M(ω_i, ω_s) = M^i(ω_i) M^s(ω_s)`, evaluated lazily.
#[derive(Debug, Clone, Copy)]
pub struct TwoPhotonModulation<'a> {
    pub idler: &'a TransferFunction,
    pub signal: &'a TransferFunction,
}

impl TwoPhotonModulation<'_> {
    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        self.idler.values[i] * self.signal.values[j]
    }
}

pub fn combined_modulation<'a>(m_i: &'a TransferFunction, m_s: &'a TransferFunction) -> Result<TwoPhotonModulation<'a>> {
    m_i.grid.ensure_same(&m_s.grid)?;
    Ok(TwoPhotonModulation {
        idler: m_i,
        signal: m_s,
    })
}
