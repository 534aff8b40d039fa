//! Least-squares fits of two-photon fringe models.
//!
//! Three families are supported:
//!
//! * noisy maximally entangled qudits,
//!   `S = A [1 + (2λ/d) Σ_{m=1}^{d−1} (d−m) cos(m(2φ + φ₀))]`;
//! * the product of two single-photon interferences,
//!   `S = A cos⁴((φ + φ₀/2)/2)`;
//! * the time-bin state with one-photon admixture,
//!   `S = A |1 + 2γ₁ e^{iθ} + γ₂ e^{2iθ}|²`, `θ = φ + φ₀/2`.
//!
//! Fits use a projected Levenberg-Marquardt iteration with analytic
//! Jacobians and a deterministic initialization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::measurement::{CountRecord, FringeScan};
use crate::metrics::{lambda_from_visibility, visibility_from_lambda};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FringeModel {
    /// Parameters `[A, λ, φ₀]`.
    Lambda { d: usize },
    /// Parameters `[A, φ₀]`.
    Cos4,
    /// Parameters `[A, γ₁, γ₂, φ₀]`.
    Gamma,
}

impl FringeModel {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            FringeModel::Lambda { .. } => &["scale", "lambda", "phi0"],
            FringeModel::Cos4 => &["scale", "phi0"],
            FringeModel::Gamma => &["scale", "gamma1", "gamma2", "phi0"],
        }
    }

    fn n_params(&self) -> usize {
        self.parameter_names().len()
    }

    /// Model value and its gradient with respect to the parameters.
    pub fn evaluate(&self, p: &[f64], phi: f64) -> (f64, Vec<f64>) {
        match *self {
            FringeModel::Lambda { d } => {
                let (a, lambda, phi0) = (p[0], p[1], p[2]);
                let theta = 2.0 * phi + phi0;
                let df = d as f64;
                let mut harmonic = 0.0;
                let mut dharmonic = 0.0;
                for m in 1..d {
                    let w = (df - m as f64) * 2.0 / df;
                    let mf = m as f64;
                    harmonic += w * (mf * theta).cos();
                    dharmonic -= w * mf * (mf * theta).sin();
                }
                let shape = 1.0 + lambda * harmonic;
                (a * shape, vec![shape, a * harmonic, a * lambda * dharmonic])
            }
            FringeModel::Cos4 => {
                let (a, phi0) = (p[0], p[1]);
                let x = 0.5 * (phi + 0.5 * phi0);
                let c = x.cos();
                let shape = c.powi(4);
                (a * shape, vec![shape, -a * c.powi(3) * x.sin()])
            }
            FringeModel::Gamma => {
                let (a, g1, g2, phi0) = (p[0], p[1], p[2], p[3]);
                let theta = phi + 0.5 * phi0;
                let (c1, c2) = (theta.cos(), (2.0 * theta).cos());
                let (s1, s2) = (theta.sin(), (2.0 * theta).sin());
                let k0 = 1.0 + 4.0 * g1 * g1 + g2 * g2;
                let k1 = 4.0 * g1 * (1.0 + g2);
                let k2 = 2.0 * g2;
                let shape = k0 + k1 * c1 + k2 * c2;
                (
                    a * shape,
                    vec![
                        shape,
                        a * (8.0 * g1 + 4.0 * (1.0 + g2) * c1),
                        a * (2.0 * g2 + 4.0 * g1 * c1 + 2.0 * c2),
                        -a * (0.5 * k1 * s1 + k2 * s2),
                    ],
                )
            }
        }
    }

    pub fn value(&self, p: &[f64], phi: f64) -> f64 {
        self.evaluate(p, phi).0
    }

    /// Box constraints per parameter; φ₀ is unbounded and wrapped instead.
    fn bounds(&self) -> Vec<(f64, f64)> {
        let inf = f64::INFINITY;
        match self {
            FringeModel::Lambda { .. } => vec![(1e-300, inf), (0.0, 1.0), (-inf, inf)],
            FringeModel::Cos4 => vec![(1e-300, inf), (-inf, inf)],
            FringeModel::Gamma => vec![(1e-300, inf), (0.0, inf), (0.0, 1.0), (-inf, inf)],
        }
    }

    /// Clamp parameters into their physical ranges and wrap φ₀.
    fn project(&self, p: &mut [f64]) {
        for (x, (lo, hi)) in p.iter_mut().zip(self.bounds()) {
            *x = x.clamp(lo, hi);
        }
        let last = p.len() - 1;
        p[last] = wrap(p[last]);
    }
}

/// Wrap an angle into `(−2π, 2π]`; φ₀ enters the models with period 2π or
/// 4π so only a loose wrap is applied.
fn wrap(x: f64) -> f64 {
    let period = 4.0 * PI;
    let mut y = x.rem_euclid(period);
    if y > 2.0 * PI {
        y -= period;
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FringeModel,
    pub parameters: Vec<f64>,
    /// One-standard-deviation uncertainties.
    pub uncertainties: Vec<f64>,
    /// `sqrt(Σ w r²)`.
    pub residual_norm: f64,
    pub iterations: usize,
}

impl FitResult {
    fn named(&self, name: &str) -> Option<(f64, f64)> {
        let idx = self.model.parameter_names().iter().position(|n| *n == name)?;
        Some((self.parameters[idx], self.uncertainties[idx]))
    }

    pub fn scale(&self) -> f64 {
        self.parameters[0]
    }

    pub fn lambda(&self) -> Option<(f64, f64)> {
        self.named("lambda")
    }

    pub fn gamma1(&self) -> Option<(f64, f64)> {
        self.named("gamma1")
    }

    pub fn gamma2(&self) -> Option<(f64, f64)> {
        self.named("gamma2")
    }

    pub fn phi0(&self) -> f64 {
        self.named("phi0").map(|v| v.0).unwrap_or(0.0)
    }

    /// Visibility implied by a λ fit.
    pub fn visibility(&self) -> Option<f64> {
        match self.model {
            FringeModel::Lambda { d } => self.lambda().map(|(l, _)| visibility_from_lambda(l, d)),
            _ => None,
        }
    }

    pub fn evaluate(&self, phi: f64) -> f64 {
        self.model.value(&self.parameters, phi)
    }
}

/// Points with statistical weights (inverse variances).
struct FitData {
    phases: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl FitData {
    fn from_scan(scan: &FringeScan) -> Self {
        Self {
            phases: scan.phases.clone(),
            values: scan.values.clone(),
            weights: vec![1.0; scan.values.len()],
        }
    }

    /// Background-subtracted counts weighted by `1/(gross + background)`.
    fn from_counts(record: &CountRecord) -> Self {
        let values = record
            .gross
            .iter()
            .zip(&record.background)
            .map(|(&g, &b)| g as f64 - b as f64)
            .collect();
        let weights = record
            .gross
            .iter()
            .zip(&record.background)
            .map(|(&g, &b)| 1.0 / ((g + b) as f64).max(1.0))
            .collect();
        Self {
            phases: record.phases.clone(),
            values,
            weights,
        }
    }

    fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn argmax_phase(&self) -> f64 {
        let (k, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |(bk, bv), (k, &v)| if v > bv { (k, v) } else { (bk, bv) });
        self.phases[k]
    }

    fn visibility(&self) -> f64 {
        let max = self.values.iter().copied().fold(f64::MIN, f64::max);
        let min = self.values.iter().copied().fold(f64::MAX, f64::min).max(0.0);
        if max + min > 0.0 {
            (max - min) / (max + min)
        } else {
            0.0
        }
    }
}

fn initial_guess(model: FringeModel, data: &FitData) -> Vec<f64> {
    let phi0 = wrap(-2.0 * data.argmax_phase());
    let mean = data.mean().max(1e-300);
    match model {
        FringeModel::Lambda { d } => {
            let lambda = lambda_from_visibility(data.visibility(), d).clamp(0.0, 1.0);
            vec![mean, lambda, phi0]
        }
        FringeModel::Cos4 => {
            let max = data.values.iter().copied().fold(f64::MIN, f64::max).max(1e-300);
            vec![max, phi0]
        }
        FringeModel::Gamma => harmonic_guess(data).unwrap_or_else(|| vec![mean / 2.25, 0.5, 0.5, phi0]),
    }
}

/// Weighted least squares of `c0 + c1 cos θ + c2 cos 2θ` at fixed φ₀.
fn harmonic_coefficients(data: &FitData, phi0: f64) -> Option<([f64; 3], f64)> {
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut aty = nalgebra::Vector3::<f64>::zeros();
    for ((&phi, &y), &w) in data.phases.iter().zip(&data.values).zip(&data.weights) {
        let t = phi + 0.5 * phi0;
        let row = nalgebra::Vector3::new(1.0, t.cos(), (2.0 * t).cos());
        ata += w * row * row.transpose();
        aty += w * y * row;
    }
    let c = ata.lu().solve(&aty)?;
    let cost = data
        .phases
        .iter()
        .zip(&data.values)
        .zip(&data.weights)
        .map(|((&phi, &y), &w)| {
            let t = phi + 0.5 * phi0;
            let r = y - c[0] - c[1] * t.cos() - c[2] * (2.0 * t).cos();
            w * r * r
        })
        .sum();
    Some(([c[0], c[1], c[2]], cost))
}

/// Map harmonic amplitudes back to `(A, γ₁, γ₂)` with `γ₂ ≤ 1`.
fn invert_harmonics([c0, c1, c2]: [f64; 3]) -> Option<[f64; 3]> {
    if !(c0 > 0.0 && c1 >= 0.0 && c2 >= 0.0) {
        return None;
    }
    if c2 <= 1e-12 * c0 {
        // γ₂ = 0: c0/c1 = (1 + 4γ₁²)/(4γ₁), smaller root.
        if c1 <= 0.0 {
            return Some([c0, 0.0, 0.0]);
        }
        let r = c0 / c1;
        let disc = r * r - 1.0;
        if disc < -1e-9 {
            return None;
        }
        let g1 = 0.5 * (r - disc.max(0.0).sqrt());
        return Some([c1 / (4.0 * g1), g1, 0.0]);
    }
    let (rho0, rho1) = (c0 / c2, c1 / c2);
    // 2uρ₀ = 1 + u² + ρ₁²u²/(1 + u)² with u = γ₂.
    let f = |u: f64| 1.0 + u * u + (rho1 * u / (1.0 + u)).powi(2) - 2.0 * rho0 * u;
    let f1 = f(1.0);
    // f has a double root at the fold, so rounding decides its sign there.
    let u = if f1.abs() <= 1e-9 * (1.0 + rho0) {
        1.0
    } else if f1 > 0.0 {
        return None;
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Some([c2 / (2.0 * u), rho1 * u / (2.0 * (1.0 + u)), u])
}

/// Starting point for the γ model from a harmonic fit, which stays well
/// conditioned where the γ parametrization folds (γ₂ = 1).
fn harmonic_guess(data: &FitData) -> Option<Vec<f64>> {
    const STEPS: usize = 1440;
    let h = 4.0 * PI / STEPS as f64;
    let admissible = |phi0: f64| {
        harmonic_coefficients(data, phi0).filter(|(c, _)| c[1] >= 0.0).map(|(_, cost)| cost)
    };
    let mut best: Option<(f64, f64)> = None;
    for k in 0..STEPS {
        let phi0 = -2.0 * PI + h * (k as f64 + 1.0);
        if let Some(cost) = admissible(phi0) {
            if best.is_none_or(|(_, b)| cost < b) {
                best = Some((phi0, cost));
            }
        }
    }
    let (mut a, mut b) = (best?.0 - h, best?.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let eval = |x: f64| admissible(x).unwrap_or(f64::INFINITY);
    for _ in 0..100 {
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        if eval(x1) < eval(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let phi0 = wrap(0.5 * (a + b));
    let (c, _) = harmonic_coefficients(data, phi0)?;
    let [scale, g1, g2] = invert_harmonics(c)?;
    Some(vec![scale, g1, g2, phi0])
}

fn cost_and_jacobian(model: FringeModel, p: &[f64], data: &FitData) -> (f64, DMatrix<f64>, DVector<f64>) {
    let n = data.values.len();
    let np = model.n_params();
    let mut jac = DMatrix::zeros(n, np);
    let mut res = DVector::zeros(n);
    let mut cost = 0.0;
    for k in 0..n {
        let (v, g) = model.evaluate(p, data.phases[k]);
        let sw = data.weights[k].sqrt();
        let r = (data.values[k] - v) * sw;
        res[k] = r;
        cost += r * r;
        for (q, gq) in g.iter().enumerate() {
            jac[(k, q)] = gq * sw;
        }
    }
    (cost, jac, res)
}

fn cost_only(model: FringeModel, p: &[f64], data: &FitData) -> f64 {
    data.phases
        .iter()
        .zip(&data.values)
        .zip(&data.weights)
        .map(|((&phi, &y), &w)| {
            let r = y - model.value(p, phi);
            w * r * r
        })
        .sum()
}

fn run_fit(model: FringeModel, data: &FitData) -> Result<FitResult> {
    let np = model.n_params();
    let n = data.values.len();
    if n < 2 * np {
        return Err(Error::InvalidParameter(format!(
            "fit needs at least {} points, got {n}",
            2 * np
        )));
    }
    if data.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fringe data".into()));
    }
    let bounds = model.bounds();
    let mut p = initial_guess(model, data);
    model.project(&mut p);
    let scale = data.values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut mu = 1e-3;
    let mut last_step = f64::INFINITY;
    let (mut cost, mut jac, mut res) = cost_and_jacobian(model, &p, data);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &res;
        let mut accepted = false;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            for q in 0..np {
                lhs[(q, q)] += mu * jtj[(q, q)].max(1e-12);
            }
            // Parameters pinned at a bound with the step pointing outward
            // are frozen so the remaining ones move freely.
            let mut frozen = vec![false; np];
            let mut step = None;
            for _ in 0..=np {
                let mut lhs = lhs.clone();
                let mut rhs = grad.clone();
                for q in (0..np).filter(|&q| frozen[q]) {
                    for r in 0..np {
                        lhs[(q, r)] = 0.0;
                        lhs[(r, q)] = 0.0;
                    }
                    lhs[(q, q)] = 1.0;
                    rhs[q] = 0.0;
                }
                let Some(s) = lhs.lu().solve(&rhs) else { break };
                let mut changed = false;
                for (q, &(lo, hi)) in bounds.iter().enumerate() {
                    if !frozen[q] && ((p[q] <= lo && s[q] < 0.0) || (p[q] >= hi && s[q] > 0.0)) {
                        frozen[q] = true;
                        changed = true;
                    }
                }
                step = Some(s);
                if !changed {
                    break;
                }
                step = None;
            }
            let Some(step) = step else {
                mu *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            model.project(&mut trial);
            let trial_cost = cost_only(model, &trial, data);
            if trial_cost <= cost {
                last_step = p
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).abs() / a.abs().max(1.0))
                    .fold(0.0, f64::max);
                let improvement = cost - trial_cost;
                p = trial;
                (cost, jac, res) = cost_and_jacobian(model, &p, data);
                mu = (mu / 10.0).max(1e-12);
                accepted = true;
                if last_step < 1e-12 || improvement <= 1e-10 * cost || cost < 1e-28 * scale * scale * n as f64 {
                    converged = true;
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            // No descent direction left within the bounds: a stationary point.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::Fit {
            iterations,
            cost,
            step: last_step,
        });
    }

    let dof = (n - np) as f64;
    let s2 = cost / dof;
    let jtj = jac.transpose() * &jac;
    let uncertainties = match jtj.clone().try_inverse() {
        Some(cov) => (0..np).map(|q| (s2 * cov[(q, q)]).max(0.0).sqrt()).collect(),
        None => match jtj.pseudo_inverse(1e-14) {
            Ok(cov) => (0..np).map(|q| (s2 * cov[(q, q)]).max(0.0).sqrt()).collect(),
            Err(_) => vec![f64::NAN; np],
        },
    };
    Ok(FitResult {
        model,
        parameters: p,
        uncertainties,
        residual_norm: cost.sqrt(),
        iterations,
    })
}

/// Fit the noisy-qudit model of dimension `d` to a normalized scan.
pub fn fit_fringe(scan: &FringeScan, d: usize) -> Result<FitResult> {
    check_d(d)?;
    run_fit(FringeModel::Lambda { d }, &FitData::from_scan(scan))
}

/// Fit the noisy-qudit model to background-subtracted, Poisson-weighted
/// counts.
pub fn fit_fringe_counts(record: &CountRecord, d: usize) -> Result<FitResult> {
    check_d(d)?;
    run_fit(FringeModel::Lambda { d }, &FitData::from_counts(record))
}

pub fn fit_gamma(scan: &FringeScan) -> Result<FitResult> {
    run_fit(FringeModel::Gamma, &FitData::from_scan(scan))
}

pub fn fit_gamma_counts(record: &CountRecord) -> Result<FitResult> {
    run_fit(FringeModel::Gamma, &FitData::from_counts(record))
}

pub fn fit_cos4(scan: &FringeScan) -> Result<FitResult> {
    run_fit(FringeModel::Cos4, &FitData::from_scan(scan))
}

/// Fit an arbitrary model to raw `(φ, S)` samples with unit weights.
pub fn fit_model(model: FringeModel, phases: &[f64], values: &[f64]) -> Result<FitResult> {
    if phases.len() != values.len() {
        return Err(Error::Dimension {
            expected: phases.len(),
            got: values.len(),
        });
    }
    if let FringeModel::Lambda { d } = model {
        check_d(d)?;
    }
    run_fit(
        model,
        &FitData {
            phases: phases.to_vec(),
            values: values.to_vec(),
            weights: vec![1.0; values.len()],
        },
    )
}

fn check_d(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("fringe models need d >= 2, got {d}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::phase_grid;

    fn synth(model: FringeModel, p: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let span = if matches!(model, FringeModel::Lambda { .. }) { 1.0 } else { 2.0 };
        let phases: Vec<f64> = phase_grid(n).iter().map(|x| x * span).collect();
        let values = phases.iter().map(|&x| model.value(p, x)).collect();
        (phases, values)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cases: [(FringeModel, Vec<f64>); 4] = [
            (FringeModel::Lambda { d: 3 }, vec![1.3, 0.8, 0.4]),
            (FringeModel::Lambda { d: 4 }, vec![0.9, 0.6, -1.0]),
            (FringeModel::Cos4, vec![2.0, 0.7]),
            (FringeModel::Gamma, vec![0.5, 0.3, 0.8, 1.1]),
        ];
        for (model, p) in cases {
            for &phi in &[0.1, 0.9, 2.3] {
                let (_, g) = model.evaluate(&p, phi);
                for q in 0..p.len() {
                    let h = 1e-6;
                    let mut a = p.clone();
                    let mut b = p.clone();
                    a[q] += h;
                    b[q] -= h;
                    let fd = (model.value(&a, phi) - model.value(&b, phi)) / (2.0 * h);
                    assert!((fd - g[q]).abs() < 1e-6, "{model:?} param {q}: {fd} vs {}", g[q]);
                }
            }
        }
    }

    #[test]
    fn recovers_noiseless_lambda() {
        for d in 2..=4 {
            let truth = [1.0, 0.903, 0.6];
            let (phases, values) = synth(FringeModel::Lambda { d }, &truth, 48);
            let fit = fit_model(FringeModel::Lambda { d }, &phases, &values).unwrap();
            let (l, _) = fit.lambda().unwrap();
            assert!((l - 0.903).abs() < 1e-6, "d = {d}: {l}");
        }
    }

    #[test]
    fn gamma_identity_with_cos4() {
        let phases = phase_grid(40);
        for &phi in &phases {
            let g = FringeModel::Gamma.value(&[1.0, 1.0, 1.0, 0.3], phi);
            let c = FringeModel::Cos4.value(&[16.0, 0.3], phi);
            assert!((g - c).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_gamma_parameters() {
        let truth = [0.7, 0.35, 0.9, -0.4];
        let (phases, values) = synth(FringeModel::Gamma, &truth, 64);
        let fit = fit_model(FringeModel::Gamma, &phases, &values).unwrap();
        assert!((fit.gamma1().unwrap().0 - 0.35).abs() < 1e-6);
        assert!((fit.gamma2().unwrap().0 - 0.9).abs() < 1e-6);
    }

    #[test]
    fn gamma_fit_settles_on_upper_bound() {
        let (phases, values) = synth(FringeModel::Cos4, &[3.0, 0.2], 64);
        let fit = fit_model(FringeModel::Gamma, &phases, &values).unwrap();
        assert!((fit.gamma1().unwrap().0 - 1.0).abs() < 1e-6, "{fit:?}");
        assert!((fit.gamma2().unwrap().0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let (phases, values) = synth(FringeModel::Lambda { d: 2 }, &[1.0, 0.5, 0.0], 5);
        assert!(fit_model(FringeModel::Lambda { d: 2 }, &phases, &values).is_err());
    }
}
