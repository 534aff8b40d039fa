//! Coincidence detection, projection onto qudit states and fringe scans.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bases::{BasisKind, BasisSet};
use crate::field::JointAmplitude;
use crate::shaper::{franson_transfer, raw_transfer, TransferFunction, TwoPhotonModulation};
use crate::{Error, Result};

/// `S = |∫∫ Γ(ω_i, ω_s) M^i(ω_i) M^s(ω_s) dω_i dω_s|²` by the trapezoid rule.
pub fn coincidence_signal(amp: &JointAmplitude, m_i: &TransferFunction, m_s: &TransferFunction) -> Result<f64> {
    amp.grid().ensure_same(m_i.grid())?;
    amp.grid().ensure_same(m_s.grid())?;
    Ok(detected_amplitude(amp, m_i.values(), m_s.values()).norm_sqr())
}

/// Same as [`coincidence_signal`] for a prebuilt product modulation.
pub fn coincidence_signal_modulated(amp: &JointAmplitude, m: &TwoPhotonModulation) -> Result<f64> {
    coincidence_signal(amp, m.idler, m.signal)
}

fn detected_amplitude(amp: &JointAmplitude, m_i: &[Complex64], m_s: &[Complex64]) -> Complex64 {
    let w = amp.grid().weights();
    let g = amp.values();
    let n = w.len();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let col = g.column(j);
            let inner: Complex64 = (0..n).map(|i| col[i] * m_i[i] * w[i]).sum();
            inner * m_s[j] * w[j]
        })
        .sum()
}

/// Discrete two-photon state `Σ c_jk |j⟩_i |k⟩_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuditState {
    coefficients: DMatrix<Complex64>,
    idler_kind: Option<BasisKind>,
    signal_kind: Option<BasisKind>,
}

impl QuditState {
    pub fn from_coefficients(coefficients: DMatrix<Complex64>) -> Result<Self> {
        let weight: f64 = coefficients.iter().map(|z| z.norm_sqr()).sum();
        if !weight.is_finite() {
            return Err(Error::NonFinite("state coefficients".into()));
        }
        if weight > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter(format!("state weight {weight} exceeds 1")));
        }
        Ok(Self {
            coefficients,
            idler_kind: None,
            signal_kind: None,
        })
    }

    /// Diagonal state `Σ_j c_j |j⟩|j⟩`.
    pub fn diagonal(c: &[Complex64]) -> Result<Self> {
        let d = c.len();
        Self::from_coefficients(DMatrix::from_fn(d, d, |j, k| if j == k { c[j] } else { Complex64::new(0.0, 0.0) }))
    }

    /// `(1/√d) Σ_j |j⟩|j⟩`.
    pub fn maximally_entangled(d: usize) -> Self {
        let c = vec![Complex64::new(1.0 / (d as f64).sqrt(), 0.0); d];
        Self::diagonal(&c).expect("normalized")
    }

    pub fn dimension(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn coefficients(&self) -> &DMatrix<Complex64> {
        &self.coefficients
    }

    pub fn basis_kinds(&self) -> (Option<BasisKind>, Option<BasisKind>) {
        (self.idler_kind, self.signal_kind)
    }

    /// `Σ |c_jk|²`.
    pub fn captured_weight(&self) -> f64 {
        self.coefficients.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Weight of the amplitude outside the span of the two bases.
    pub fn truncation_leakage(&self) -> f64 {
        1.0 - self.captured_weight()
    }
}

/// `c_jk = ∫∫ f_j^{i*}(ω_i) f_k^{s*}(ω_s) Γ(ω_i, ω_s)`.
pub fn project_state(amp: &JointAmplitude, basis_i: &BasisSet, basis_s: &BasisSet) -> Result<QuditState> {
    amp.grid().ensure_same(basis_i.grid())?;
    amp.grid().ensure_same(basis_s.grid())?;
    let w = amp.grid().weights();
    let weighted_conj = |b: &BasisSet| {
        let f = b.functions();
        DMatrix::from_fn(f.nrows(), f.ncols(), |a, j| f[(a, j)].conj() * w[a])
    };
    let h_i = weighted_conj(basis_i);
    let h_s = weighted_conj(basis_s);
    let y = amp.values() * &h_s;
    let c = h_i.transpose() * y;
    let mut state = QuditState::from_coefficients(c)?;
    state.idler_kind = Some(basis_i.kind());
    state.signal_kind = Some(basis_s.kind());
    Ok(state)
}

fn check_measurement_vector(u: &[Complex64], expected: usize) -> Result<()> {
    if u.len() != expected {
        return Err(Error::Dimension {
            expected,
            got: u.len(),
        });
    }
    if u.iter().any(|z| z.norm() > 1.0 + 1e-12) {
        return Err(Error::InvalidParameter("measurement amplitudes must satisfy |u_j| <= 1".into()));
    }
    Ok(())
}

/// `|Σ_jk u^i_j u^s_k c_jk|²`.
pub fn projection_probability(state: &QuditState, u_i: &[Complex64], u_s: &[Complex64]) -> Result<f64> {
    let c = &state.coefficients;
    check_measurement_vector(u_i, c.nrows())?;
    check_measurement_vector(u_s, c.ncols())?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, ui) in u_i.iter().enumerate() {
        for (k, us) in u_s.iter().enumerate() {
            acc += ui * us * c[(j, k)];
        }
    }
    Ok(acc.norm_sqr())
}

/// Projection on a state mixed with white noise,
/// `λ |⟨χ|ψ⟩|² + (1 − λ) ‖u^i‖² ‖u^s‖² / d²`.
pub fn noisy_projection_probability(state: &QuditState, lambda: f64, u_i: &[Complex64], u_s: &[Complex64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("noise weight λ = {lambda} outside [0, 1]")));
    }
    let pure = projection_probability(state, u_i, u_s)?;
    let d2 = (state.coefficients.nrows() * state.coefficients.ncols()) as f64;
    let ni: f64 = u_i.iter().map(|z| z.norm_sqr()).sum();
    let ns: f64 = u_s.iter().map(|z| z.norm_sqr()).sum();
    Ok(lambda * pure + (1.0 - lambda) * ni * ns / d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanRoute {
    StateSpace,
    FullField,
}

/// Measurement amplitudes `|u_j|` for both photons; at scan phase φ the
/// coefficients are `u_j = |u_j| e^{ijφ}` on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLadder {
    pub amplitudes_i: Vec<f64>,
    pub amplitudes_s: Vec<f64>,
}

impl PhaseLadder {
    pub fn uniform(d: usize) -> Self {
        Self {
            amplitudes_i: vec![1.0; d],
            amplitudes_s: vec![1.0; d],
        }
    }

    /// Same amplitudes on both photons.
    pub fn symmetric(amplitudes: Vec<f64>) -> Self {
        Self {
            amplitudes_i: amplitudes.clone(),
            amplitudes_s: amplitudes,
        }
    }

    pub fn vectors(&self, phi: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let v = |a: &[f64]| {
            a.iter()
                .enumerate()
                .map(|(j, &m)| Complex64::from_polar(m, j as f64 * phi))
                .collect()
        };
        (v(&self.amplitudes_i), v(&self.amplitudes_s))
    }
}

/// Evenly spaced phases over one period `[0, π)`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * k as f64 / n as f64).collect()
}

/// Coincidence signal versus scan phase, normalized to unit mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeScan {
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
    pub route: ScanRoute,
    pub d: usize,
    pub basis_kind: Option<BasisKind>,
    /// `1 − Σ|c_jk|²` for the projected state, when known.
    pub leakage: Option<f64>,
    /// Mean of the raw signal before normalization.
    pub raw_mean: f64,
}

impl FringeScan {
    fn normalized(
        phases: Vec<f64>,
        raw: Vec<f64>,
        route: ScanRoute,
        d: usize,
        basis_kind: Option<BasisKind>,
        leakage: Option<f64>,
    ) -> Result<Self> {
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::InvalidParameter("fringe signal vanishes over the scan".into()));
        }
        Ok(Self {
            values: raw.iter().map(|v| (v / mean).max(0.0)).collect(),
            phases,
            route,
            d,
            basis_kind,
            leakage,
            raw_mean: mean,
        })
    }

    /// `(max − min)/(max + min)`.
    pub fn visibility(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::MIN, f64::max);
        let min = self.values.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / (max + min)
    }
}

fn check_phases(phases: &[f64]) -> Result<()> {
    if phases.len() < 2 {
        return Err(Error::InvalidParameter("a fringe scan needs at least two phases".into()));
    }
    if phases.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidParameter("scan phases must be strictly increasing".into()));
    }
    let span = phases[phases.len() - 1] - phases[0];
    let step = span / (phases.len() - 1) as f64;
    if span + step < PI * (1.0 - 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "scan covers {span:.4} rad; one full period (π) is required"
        )));
    }
    Ok(())
}

/// Fringe scan by projecting a discrete state.
pub fn fringe_scan_state(state: &QuditState, ladder: &PhaseLadder, phases: &[f64]) -> Result<FringeScan> {
    fringe_scan_state_noisy(state, 1.0, ladder, phases)
}

/// Fringe scan of a state mixed with white noise (`λ = 1` is the pure state).
pub fn fringe_scan_state_noisy(state: &QuditState, lambda: f64, ladder: &PhaseLadder, phases: &[f64]) -> Result<FringeScan> {
    check_phases(phases)?;
    let raw = phases
        .iter()
        .map(|&phi| {
            let (ui, us) = ladder.vectors(phi);
            noisy_projection_probability(state, lambda, &ui, &us)
        })
        .collect::<Result<Vec<_>>>()?;
    FringeScan::normalized(
        phases.to_vec(),
        raw,
        ScanRoute::StateSpace,
        state.dimension(),
        state.idler_kind,
        Some(state.truncation_leakage()),
    )
}

/// Fringe scan by building transfer functions from the ladder at every
/// phase and evaluating the detected signal on the full amplitude.
///
/// One rescale factor, the largest `max|M|` over the whole scan, is applied
/// to every point so that the `|M| ≤ 1` constraint does not distort the
/// fringe shape.
pub fn fringe_scan_field(
    amp: &JointAmplitude,
    basis_i: &BasisSet,
    basis_s: &BasisSet,
    ladder: &PhaseLadder,
    phases: &[f64],
) -> Result<FringeScan> {
    check_phases(phases)?;
    amp.grid().ensure_same(basis_i.grid())?;
    amp.grid().ensure_same(basis_s.grid())?;
    for (b, a) in [(basis_i, &ladder.amplitudes_i), (basis_s, &ladder.amplitudes_s)] {
        if b.dimension() != a.len() {
            return Err(Error::Dimension {
                expected: b.dimension(),
                got: a.len(),
            });
        }
    }
    let transfers: Vec<(Vec<Complex64>, Vec<Complex64>)> = phases
        .iter()
        .map(|&phi| {
            let (ui, us) = ladder.vectors(phi);
            (raw_transfer(basis_i, &ui), raw_transfer(basis_s, &us))
        })
        .collect();
    let peak = transfers
        .iter()
        .flat_map(|(a, b)| a.iter().chain(b.iter()))
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let grid = amp.grid();
    let raw = transfers
        .into_iter()
        .map(|(a, b)| {
            let mi = TransferFunction::scaled(grid, a, scale);
            let ms = TransferFunction::scaled(grid, b, scale);
            coincidence_signal(amp, &mi, &ms)
        })
        .collect::<Result<Vec<_>>>()?;
    let leakage = project_state(amp, basis_i, basis_s)?.truncation_leakage();
    FringeScan::normalized(
        phases.to_vec(),
        raw,
        ScanRoute::FullField,
        basis_i.dimension(),
        Some(basis_i.kind()),
        Some(leakage),
    )
}

/// Fringe scan through a pair of interferometers, `M(ω) = ½(1 + e^{i(ωt₁ + φ)})`
/// on both photons. Samples with a period of 2π in φ are expected.
pub fn franson_fringe_scan(amp: &JointAmplitude, t1: f64, phases: &[f64]) -> Result<FringeScan> {
    check_phases(phases)?;
    let grid = amp.grid();
    let raw = phases
        .par_iter()
        .map(|&phi| {
            let m = franson_transfer(0.5, 0.5, t1, phi, grid)?;
            coincidence_signal(amp, &m, &m)
        })
        .collect::<Result<Vec<_>>>()?;
    FringeScan::normalized(phases.to_vec(), raw, ScanRoute::FullField, 2, Some(BasisKind::TimeBin), None)
}

/// Detected signal when both photons are projected onto bin `k` alone with
/// amplitude `|u_k|`, for every `k`.
///
/// All transfer functions share one rescale factor, fixed by the unit-
/// amplitude single-bin transfers, so signals measured with different
/// amplitudes are directly comparable.
pub fn single_projection_signals(
    amp: &JointAmplitude,
    basis_i: &BasisSet,
    basis_s: &BasisSet,
    amplitudes: &[f64],
) -> Result<Vec<f64>> {
    let d = basis_i.dimension();
    if basis_s.dimension() != d || amplitudes.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: amplitudes.len().min(basis_s.dimension()),
        });
    }
    if amplitudes.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidParameter("filter amplitudes must lie in [0, 1]".into()));
    }
    let peak = basis_i
        .functions()
        .iter()
        .chain(basis_s.functions().iter())
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    let grid = amp.grid();
    (0..d)
        .map(|k| {
            let mut u = vec![Complex64::new(0.0, 0.0); d];
            u[k] = Complex64::new(amplitudes[k], 0.0);
            let mi = TransferFunction::scaled(grid, raw_transfer(basis_i, &u), scale);
            let ms = TransferFunction::scaled(grid, raw_transfer(basis_s, &u), scale);
            coincidence_signal(amp, &mi, &ms)
        })
        .collect()
}

/// Poissonian coincidence counts for a fringe scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub phases: Vec<f64>,
    /// Signal plus background counts per point.
    pub gross: Vec<u64>,
    /// Independent background-only counts per point.
    pub background: Vec<u64>,
    pub duration_s: f64,
    pub seed: u64,
}

/// Draw counts with mean `(peak_rate · S/max S + background_rate) · duration`
/// per point; the background is drawn separately with mean
/// `background_rate · duration`.
pub fn synthesize_counts(scan: &FringeScan, peak_rate: f64, background_rate: f64, duration_s: f64, seed: u64) -> Result<CountRecord> {
    for (name, v) in [("peak rate", peak_rate), ("background rate", background_rate), ("duration", duration_s)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    let max = scan.values.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |mean: f64| -> u64 {
        if mean > 0.0 {
            Poisson::new(mean).expect("positive finite mean").sample(&mut rng) as u64
        } else {
            0
        }
    };
    let mut gross = Vec::with_capacity(scan.values.len());
    let mut background = Vec::with_capacity(scan.values.len());
    for &s in &scan.values {
        let rel = if max > 0.0 { s / max } else { 0.0 };
        gross.push(draw((peak_rate * rel + background_rate) * duration_s));
        background.push(draw(background_rate * duration_s));
    }
    Ok(CountRecord {
        phases: scan.phases.clone(),
        gross,
        background,
        duration_s,
        seed,
    })
}

/// Filter amplitudes `|u_k| = (S_min/S_k)^{1/4}` that equalize single
/// projection signals `S_k ∝ |u_k|⁴ |c_k|²`.
pub fn procrustean_amplitudes(signals: &[f64]) -> Result<Vec<f64>> {
    if signals.is_empty() {
        return Err(Error::InvalidParameter("no projection signals".into()));
    }
    if let Some(index) = signals.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateBin { index });
    }
    let min = signals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(signals.iter().map(|s| (min / s).powf(0.25)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AmplitudeKind;
    use crate::grid::SpectralGrid;

    #[test]
    fn ideal_qubit_fringe() {
        let s = QuditState::maximally_entangled(2);
        let phases = phase_grid(64);
        let scan = fringe_scan_state(&s, &PhaseLadder::uniform(2), &phases).unwrap();
        for (phi, v) in phases.iter().zip(&scan.values) {
            assert!((v - (1.0 + (2.0 * phi).cos())).abs() < 1e-12);
        }
        assert!((scan.visibility() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn row_column_selection() {
        let c = DMatrix::from_fn(3, 3, |j, k| Complex64::new(0.1 * j as f64, 0.05 * k as f64));
        let s = QuditState::from_coefficients(c.clone()).unwrap();
        let e = |j: usize| (0..3).map(|m| Complex64::new(if m == j { 1.0 } else { 0.0 }, 0.0)).collect::<Vec<_>>();
        let p = projection_probability(&s, &e(2), &e(1)).unwrap();
        assert!((p - c[(2, 1)].norm_sqr()).abs() < 1e-15);
        assert!(projection_probability(&s, &e(0)[..2], &e(1)).is_err());
    }

    #[test]
    fn ququart_minimum_vanishes() {
        let s = QuditState::maximally_entangled(4);
        let phases = phase_grid(64);
        let scan = fringe_scan_state(&s, &PhaseLadder::uniform(4), &phases).unwrap();
        let min = scan.values.iter().copied().fold(f64::MAX, f64::min);
        assert!(min < 1e-12);
    }

    #[test]
    fn scans_need_a_full_period() {
        let s = QuditState::maximally_entangled(2);
        let short: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
        assert!(fringe_scan_state(&s, &PhaseLadder::uniform(2), &short).is_err());
    }

    #[test]
    fn counts_are_reproducible() {
        let s = QuditState::maximally_entangled(2);
        let scan = fringe_scan_state(&s, &PhaseLadder::uniform(2), &phase_grid(16)).unwrap();
        let a = synthesize_counts(&scan, 50.0, 11.0, 300.0, 7).unwrap();
        let b = synthesize_counts(&scan, 50.0, 11.0, 300.0, 7).unwrap();
        assert_eq!(a, b);
        let z = synthesize_counts(&scan, 50.0, 11.0, 0.0, 7).unwrap();
        assert!(z.gross.iter().chain(&z.background).all(|&c| c == 0));
    }

    #[test]
    fn procrustean_examples() {
        let u = procrustean_amplitudes(&[4.0, 1.0]).unwrap();
        assert!((u[0] - 0.5f64.sqrt()).abs() < 1e-12 && u[1] == 1.0);
        let u = procrustean_amplitudes(&[16.0, 1.0, 1.0]).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-12);
        assert_eq!(procrustean_amplitudes(&[2.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        assert!(matches!(
            procrustean_amplitudes(&[1.0, 0.0]),
            Err(Error::DegenerateBin { index: 1 })
        ));
    }

    #[test]
    fn uniform_transmission_integrates_amplitude() {
        let grid = SpectralGrid::new(101, 0.35).unwrap();
        let amp = JointAmplitude::from_fn(grid.clone(), AmplitudeKind::Custom, |a, b| {
            Complex64::new((-(a * a + b * b) * 50.0).exp(), 0.0)
        })
        .unwrap();
        let one = TransferFunction::identity(&grid);
        let s = coincidence_signal(&amp, &one, &one).unwrap();
        let w = grid.weights();
        let mut integral = 0.0;
        for i in 0..101 {
            for j in 0..101 {
                integral += w[i] * w[j] * amp.values()[(i, j)].re;
            }
        }
        assert!((s - integral * integral).abs() < 1e-12 * s);
    }
}
