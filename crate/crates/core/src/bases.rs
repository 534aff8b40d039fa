//! Discrete single-photon bases on the spectral axis.
//!
//! Every basis function is sampled on the grid axis and renormalized under
//! the trapezoid rule, so inner products computed by [`gram_matrix`] are
//! exact for the sampled functions rather than for their continuum parents.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{sinc, JointAmplitude};
use crate::grid::SpectralGrid;
use crate::linalg::weighted_svd;
use crate::{Error, Result};

/// Samples required inside each frequency bin.
const MIN_BIN_SAMPLES: usize = 3;

/// Smallest Schmidt weight still counted as part of the numerical rank.
pub const RANK_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    FrequencyBin,
    TimeBin,
    Schmidt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BasisMetadata {
    FrequencyBins {
        centers: Vec<f64>,
        widths: Vec<f64>,
    },
    TimeBins {
        centers: Vec<f64>,
        widths: Vec<f64>,
        /// Largest off-diagonal Gram magnitude after renormalization.
        max_overlap: f64,
    },
    Schmidt {
        /// Weights of the returned modes, descending.
        betas: Vec<f64>,
    },
}

/// `d` functions sampled on a grid axis, stored as the columns of an
/// `n × d` matrix.
#[derive(Debug, Clone)]
pub struct BasisSet {
    grid: SpectralGrid,
    functions: DMatrix<Complex64>,
    kind: BasisKind,
    metadata: BasisMetadata,
}

impl BasisSet {
    pub fn dimension(&self) -> usize {
        self.functions.ncols()
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn metadata(&self) -> &BasisMetadata {
        &self.metadata
    }

    /// All functions as columns.
    pub fn functions(&self) -> &DMatrix<Complex64> {
        &self.functions
    }

    pub fn function(&self, j: usize) -> Vec<Complex64> {
        self.functions.column(j).iter().copied().collect()
    }
}

fn normalize_columns(functions: &mut DMatrix<Complex64>, weights: &[f64]) -> Result<()> {
    for mut col in functions.column_iter_mut() {
        let norm2: f64 = col.iter().zip(weights).map(|(z, w)| w * z.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(Error::Basis("basis function vanishes on the grid".into()));
        }
        let s = 1.0 / norm2.sqrt();
        col.iter_mut().for_each(|z| *z *= s);
    }
    Ok(())
}

fn check_lengths(centers: &[f64], widths: &[f64]) -> Result<()> {
    if centers.is_empty() {
        return Err(Error::Basis("a basis needs at least one function".into()));
    }
    if centers.len() != widths.len() {
        return Err(Error::Dimension {
            expected: centers.len(),
            got: widths.len(),
        });
    }
    if widths.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Basis("bin widths must be finite and non-negative".into()));
    }
    Ok(())
}

fn check_separation(centers: &[f64], widths: &[f64], unit: &str) -> Result<()> {
    for j in 0..centers.len() {
        for k in (j + 1)..centers.len() {
            let gap = (centers[j] - centers[k]).abs();
            if gap <= 0.5 * (widths[j] + widths[k]) {
                return Err(Error::Basis(format!(
                    "bins {j} and {k} overlap: |{} - {}| {unit} <= mean width {}",
                    centers[j],
                    centers[k],
                    0.5 * (widths[j] + widths[k])
                )));
            }
        }
    }
    Ok(())
}

/// Rectangular bins of height `1/√Δω_j` centered at `ω_j`.
pub fn frequency_bins(centers: &[f64], widths: &[f64], grid: &SpectralGrid) -> Result<BasisSet> {
    check_lengths(centers, widths)?;
    check_separation(centers, widths, "rad/fs")?;
    let axis = grid.axis();
    let n = axis.len();
    let d = centers.len();
    let mut functions = DMatrix::zeros(n, d);
    for (j, (&c, &w)) in centers.iter().zip(widths).enumerate() {
        let half = 0.5 * w * (1.0 + 1e-12) + 1e-15;
        let height = Complex64::new(1.0 / w.sqrt(), 0.0);
        let mut count = 0;
        for (i, &om) in axis.iter().enumerate() {
            if (om - c).abs() <= half {
                functions[(i, j)] = height;
                count += 1;
            }
        }
        if count < MIN_BIN_SAMPLES {
            return Err(Error::Resolution(format!(
                "frequency bin {j} (center {c}, width {w}) covers {count} samples (< {MIN_BIN_SAMPLES})"
            )));
        }
    }
    normalize_columns(&mut functions, &grid.weights())?;
    Ok(BasisSet {
        grid: grid.clone(),
        functions,
        kind: BasisKind::FrequencyBin,
        metadata: BasisMetadata::FrequencyBins {
            centers: centers.to_vec(),
            widths: widths.to_vec(),
        },
    })
}

/// Frequency-domain image of temporal bins,
/// `f_j(ω) = √(Δt_j/2π) e^{−iωt_j} sinc(ωΔt_j/2)`; `Δt_j = 0` gives the pure
/// phasor truncated by the grid window.
pub fn time_bins(centers: &[f64], widths: &[f64], grid: &SpectralGrid) -> Result<BasisSet> {
    check_lengths(centers, widths)?;
    check_separation(centers, widths, "fs")?;
    let axis = grid.axis();
    let d = centers.len();
    let mut functions = DMatrix::from_fn(axis.len(), d, |i, j| {
        let om = axis[i];
        let (t, dt) = (centers[j], widths[j]);
        let envelope = if dt == 0.0 {
            1.0
        } else {
            (dt / (2.0 * PI)).sqrt() * sinc(om * dt / 2.0)
        };
        Complex64::from_polar(envelope, -om * t)
    });
    normalize_columns(&mut functions, &grid.weights())?;
    let mut basis = BasisSet {
        grid: grid.clone(),
        functions,
        kind: BasisKind::TimeBin,
        metadata: BasisMetadata::TimeBins {
            centers: centers.to_vec(),
            widths: widths.to_vec(),
            max_overlap: 0.0,
        },
    };
    let gram = gram_matrix(&basis);
    let mut worst: f64 = 0.0;
    for j in 0..d {
        for k in 0..d {
            if j != k {
                worst = worst.max(gram[(j, k)].norm());
            }
        }
    }
    if let BasisMetadata::TimeBins { max_overlap, .. } = &mut basis.metadata {
        *max_overlap = worst;
    }
    Ok(basis)
}

/// Idler and signal Schmidt modes of `amp`, paired so that
/// `Γ ≈ Σ_j √β_j f_j^i(ω_i) f_j^s(ω_s)`.
///
/// Each pair is phased so that the largest-magnitude sample of the idler
/// mode is real and positive.
pub fn schmidt_mode_pair(amp: &JointAmplitude, d: usize) -> Result<(BasisSet, BasisSet)> {
    schmidt_pair_with_spectrum(amp, d).map(|(i, s, _)| (i, s))
}

/// Mode pair together with the full list of singular values.
pub(crate) fn schmidt_pair_with_spectrum(amp: &JointAmplitude, d: usize) -> Result<(BasisSet, BasisSet, Vec<f64>)> {
    let grid = amp.grid();
    let n = grid.n_points();
    if d == 0 || d > n {
        return Err(Error::Rank(format!("requested {d} modes from a {n}-point grid")));
    }
    let svd = weighted_svd(amp.values(), &grid.weights(), true)?;
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let betas: Vec<f64> = svd.singular_values[..d].iter().map(|s| s * s / total).collect();
    if betas[d - 1] < RANK_FLOOR {
        return Err(Error::Rank(format!(
            "Schmidt weight β_{} = {:.3e} is below the rank floor {RANK_FLOOR:e}",
            d - 1,
            betas[d - 1]
        )));
    }
    let left = svd.left.expect("vectors requested");
    let right = svd.right.expect("vectors requested");
    let mut idler = left.columns(0, d).into_owned();
    let mut signal = right.columns(0, d).into_owned();
    for j in 0..d {
        let (imax, _) = idler
            .column(j)
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bv), (i, z)| if z.norm() > bv { (i, z.norm()) } else { (bi, bv) });
        let z = idler[(imax, j)];
        let phase = z / z.norm();
        idler.column_mut(j).iter_mut().for_each(|v| *v *= phase.conj());
        signal.column_mut(j).iter_mut().for_each(|v| *v *= phase);
        idler[(imax, j)] = Complex64::new(idler[(imax, j)].norm(), 0.0);
    }
    let metadata = BasisMetadata::Schmidt { betas };
    Ok((
        BasisSet {
            grid: grid.clone(),
            functions: idler,
            kind: BasisKind::Schmidt,
            metadata: metadata.clone(),
        },
        BasisSet {
            grid: grid.clone(),
            functions: signal,
            kind: BasisKind::Schmidt,
            metadata,
        },
        svd.singular_values,
    ))
}

/// First `d` idler Schmidt modes; for a symmetric amplitude the signal modes
/// coincide up to sign.
pub fn schmidt_modes(amp: &JointAmplitude, d: usize) -> Result<BasisSet> {
    Ok(schmidt_mode_pair(amp, d)?.0)
}

/// `G_jk = ∫ f_j* f_k dω` by the trapezoid rule.
pub fn gram_matrix(basis: &BasisSet) -> DMatrix<Complex64> {
    let w = basis.grid.weights();
    let f = &basis.functions;
    let d = basis.dimension();
    DMatrix::from_fn(d, d, |j, k| {
        f.column(j)
            .iter()
            .zip(f.column(k).iter())
            .zip(&w)
            .map(|((a, b), w)| a.conj() * b * *w)
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AmplitudeKind;

    fn max_identity_error(g: &DMatrix<Complex64>) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..g.nrows() {
            for k in 0..g.ncols() {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - target).norm());
            }
        }
        worst
    }

    #[test]
    fn disjoint_frequency_bins_are_orthonormal() {
        let grid = SpectralGrid::new(401, 0.35).unwrap();
        let b = frequency_bins(&[-0.05, 0.05], &[0.04, 0.04], &grid).unwrap();
        assert!(max_identity_error(&gram_matrix(&b)) < 1e-12);
    }

    #[test]
    fn overlapping_and_tiny_bins_are_rejected() {
        let grid = SpectralGrid::new(401, 0.35).unwrap();
        assert!(matches!(
            frequency_bins(&[0.0, 0.03], &[0.04, 0.04], &grid),
            Err(Error::Basis(_))
        ));
        assert!(matches!(
            frequency_bins(&[0.0], &[1e-4], &grid),
            Err(Error::Resolution(_))
        ));
        assert!(frequency_bins(&[0.0, 0.1], &[0.04], &grid).is_err());
    }

    #[test]
    fn time_bin_at_zero_frequency() {
        // On a grid wide enough that the sinc is negligible at the edge, the
        // renormalization is close to identity and f(0) ≈ √(Δt/2π).
        let grid = SpectralGrid::new(4001, 20.0).unwrap();
        let dt = 10.0;
        let b = time_bins(&[0.0], &[dt], &grid).unwrap();
        let f0 = b.functions()[(grid.center_index(), 0)];
        assert!((f0.re / (dt / (2.0 * PI)).sqrt() - 1.0).abs() < 5e-3);
        assert!(f0.im.abs() < 1e-15);
    }

    #[test]
    fn phasor_bins_overlap_as_sinc() {
        let grid = SpectralGrid::new(2049, 0.35).unwrap();
        let t = 50.0;
        let b = time_bins(&[0.0, t], &[0.0, 0.0], &grid).unwrap();
        let g = gram_matrix(&b);
        let w = grid.window();
        // Trapezoid sum of a phasor over the uniform grid (Dirichlet form).
        let h = grid.spacing();
        let n = grid.n_points() as f64;
        let x = t * h / 2.0;
        let dirichlet = ((n - 1.0) * x).sin() / ((n - 1.0) * x.tan());
        assert!((g[(0, 1)].norm() - dirichlet.abs()).abs() < 1e-12);
        assert!((dirichlet - sinc(t * w / 2.0)).abs() < 1e-3);
        assert!(g[(0, 1)].norm() <= 0.06);
        match b.metadata() {
            BasisMetadata::TimeBins { max_overlap, .. } => assert!((max_overlap - g[(0, 1)].norm()).abs() < 1e-15),
            _ => panic!("wrong metadata"),
        }
    }

    #[test]
    fn commensurate_phasor_bins_are_orthonormal() {
        let grid = SpectralGrid::new(1025, 0.35).unwrap();
        let t = 2.0 * PI / grid.window() * 4.0;
        let b = time_bins(&[0.0, t, 2.0 * t], &[0.0; 3], &grid).unwrap();
        assert!(max_identity_error(&gram_matrix(&b)) < 1e-6);
    }

    #[test]
    fn separable_amplitude_has_one_mode() {
        let grid = SpectralGrid::new(201, 0.35).unwrap();
        let amp = JointAmplitude::from_fn(grid, AmplitudeKind::Custom, |a, b| {
            Complex64::new((-(a - 0.02) * (a - 0.02) * 300.0 - b * b * 500.0).exp(), 0.0)
        })
        .unwrap();
        let b = schmidt_modes(&amp, 1).unwrap();
        match b.metadata() {
            BasisMetadata::Schmidt { betas } => assert!((betas[0] - 1.0).abs() < 1e-10),
            _ => panic!("wrong metadata"),
        }
        assert!(matches!(schmidt_modes(&amp, 2), Err(Error::Rank(_))));
    }

    #[test]
    fn schmidt_sign_convention() {
        let grid = SpectralGrid::new(201, 0.35).unwrap();
        let amp = JointAmplitude::from_fn(grid, AmplitudeKind::Custom, |a, b| {
            let s = a + b;
            let d = a - b;
            Complex64::from_polar((-s * s * 2000.0 - d * d * 40.0).exp(), 3.0 * a * b)
        })
        .unwrap();
        let (bi, bs) = schmidt_mode_pair(&amp, 3).unwrap();
        for j in 0..3 {
            let col = bi.function(j);
            let peak = col.iter().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).unwrap();
            assert!(peak.im == 0.0 && peak.re > 0.0);
        }
        assert!(max_identity_error(&gram_matrix(&bi)) < 1e-9);
        assert!(max_identity_error(&gram_matrix(&bs)) < 1e-9);
    }
}
