//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use biphoton::bases::{frequency_bins, gram_matrix, time_bins};
use biphoton::field::{
    apply_psf, build_joint_amplitude, photon_flux_limit, AmplitudeKind, CrystalRole, CrystalSpec, JointAmplitude,
    PumpSpec,
};
use biphoton::fit::{fit_cos4, fit_fringe, fit_fringe_counts, fit_gamma};
use biphoton::grid::SpectralGrid;
use biphoton::measurement::{
    franson_fringe_scan, fringe_scan_field, fringe_scan_state, fringe_scan_state_noisy, phase_grid,
    procrustean_amplitudes, project_state, single_projection_signals, synthesize_counts, PhaseLadder, QuditState,
};
use biphoton::metrics::{
    bell_i2, cglmp_thresholds, double_gaussian_oracle, schmidt_decompose, schmidt_decompose_modes,
};
use biphoton::shaper::{franson_transfer, transfer_from_coefficients, Side, TransferSpec};
use biphoton::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lab_gamma(grid: &SpectralGrid) -> JointAmplitude {
    build_joint_amplitude(
        grid,
        &PumpSpec::lab_default(),
        &CrystalSpec::lab_default(CrystalRole::Spdc),
        Some(&CrystalSpec::lab_default(CrystalRole::Sfg)),
    )
    .expect("default source")
}

fn lab_gamma_psf(grid: &SpectralGrid) -> JointAmplitude {
    apply_psf(&lab_gamma(grid), 9.6e-3).expect("psf")
}

fn double_gaussian(a: f64, b: f64, n: usize) -> JointAmplitude {
    let grid = SpectralGrid::new(n, 5.0 * a.max(b)).unwrap();
    JointAmplitude::from_fn(grid, AmplitudeKind::Custom, |x, y| {
        let s = x + y;
        let d = x - y;
        Complex64::new((-s * s / (4.0 * a * a) - d * d / (4.0 * b * b)).exp(), 0.0)
    })
    .unwrap()
}

fn c1_thresholds() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, table) in [(2, "0.707"), (3, "0.775"), (4, "0.817")] {
        let v = format!("{:.3}", cglmp_thresholds(d).map_err(|e| e.to_string())?.v_c);
        ok &= v == table;
        parts.push(format!("d={d}: {v}"));
    }
    ensure(ok, parts.join(", "))
}

fn c2_psf_entanglement() -> Outcome {
    let grid = SpectralGrid::new(1025, 0.35).unwrap();
    let r1 = schmidt_decompose(&lab_gamma_psf(&grid)).map_err(|e| e.to_string())?;
    let r2 = schmidt_decompose(&lab_gamma_psf(&grid.refined())).map_err(|e| e.to_string())?;
    let de = (r2.entropy - r1.entropy).abs() / r1.entropy;
    let dk = (r2.schmidt_number - r1.schmidt_number).abs() / r1.schmidt_number;
    let ok = (r1.entropy - 2.6).abs() <= 0.3
        && (r1.schmidt_number - 4.9).abs() <= 0.5
        && (r1.effective_dimension - 6.0).abs() <= 1.0
        && de < 0.02
        && dk < 0.02;
    ensure(
        ok,
        format!(
            "E = {:.3}, K = {:.3}, d_eff = {:.2}; 2049 grid: ΔE = {:.2}%, ΔK = {:.2}%",
            r1.entropy,
            r1.schmidt_number,
            r1.effective_dimension,
            100.0 * de,
            100.0 * dk
        ),
    )
}

fn c3_double_gaussian() -> Outcome {
    let pairs = [(0.05, 0.05), (0.04, 0.05), (0.025, 0.05), (0.0125, 0.05), (0.008, 0.05), (0.05, 0.01)];
    let mut worst: f64 = 0.0;
    let mut svd_k = Vec::new();
    for &(a, b) in &pairs {
        let r = schmidt_decompose(&double_gaussian(a, b, 513)).map_err(|e| e.to_string())?;
        let oracle = double_gaussian_oracle(a, b).map_err(|e| e.to_string())?;
        worst = worst.max((r.schmidt_number - oracle).abs() / oracle);
        svd_k.push(r.schmidt_number);
    }
    // Pump-to-phase-matching width ratio from 1 down to 1e-4.
    let ratios: Vec<f64> = (0..=16).map(|k| 10f64.powf(-0.25 * k as f64)).collect();
    let ks: Vec<f64> = ratios.iter().map(|r| double_gaussian_oracle(*r, 1.0).unwrap()).collect();
    let oracle_monotone = ks.windows(2).all(|w| w[1] > w[0]);
    let svd_monotone = svd_k[..5].windows(2).all(|w| w[1] > w[0]);
    ensure(
        worst < 5e-3 && oracle_monotone && svd_monotone,
        format!(
            "{} SVD pairs, worst |ΔK|/K = {:.2e}; K from {:.3} to {:.0} over 4 decades",
            pairs.len(),
            worst,
            ks[0],
            ks[ks.len() - 1]
        ),
    )
}

fn c4_ideal_fringes() -> Outcome {
    let phases = phase_grid(64);
    let mut parts = Vec::new();
    let mut ok = true;
    for d in 2..=4 {
        let scan = fringe_scan_state(&QuditState::maximally_entangled(d), &PhaseLadder::uniform(d), &phases)
            .map_err(|e| e.to_string())?;
        let fit = fit_fringe(&scan, d).map_err(|e| e.to_string())?;
        let (lambda, _) = fit.lambda().unwrap();
        ok &= (lambda - 1.0).abs() <= 1e-6;
        parts.push(format!("λ_{d} = {lambda:.9}"));
        if d == 4 {
            // Harmonics of 2φ with weights 3 : 2 : 1.
            let n = scan.values.len() as f64;
            let h: Vec<f64> = (1..=4)
                .map(|m| {
                    let z: Complex64 = scan
                        .phases
                        .iter()
                        .zip(&scan.values)
                        .map(|(p, v)| v * Complex64::from_polar(1.0, -2.0 * m as f64 * p))
                        .sum();
                    2.0 * z.norm() / n
                })
                .collect();
            let harmonics_ok = (h[0] / h[2] - 3.0).abs() < 1e-6 && (h[1] / h[2] - 2.0).abs() < 1e-6 && h[3] < 1e-9;
            ok &= harmonics_ok;
            parts.push(format!("d=4 harmonics {:.3}:{:.3}:{:.3}:{:.1e}", h[0], h[1], h[2], h[3]));
        }
    }
    ensure(ok, parts.join(", "))
}

fn c5_dual_route() -> Outcome {
    let grid = SpectralGrid::new(1025, 0.35).unwrap();
    let amp = lab_gamma_psf(&grid);
    let phases = phase_grid(48);
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, centers) in [(2usize, vec![-0.015, 0.015]), (3, vec![-0.03, 0.0, 0.03])] {
        let widths = vec![0.02; d];
        let mirrored: Vec<f64> = centers.iter().map(|c| -c).collect();
        let bi = frequency_bins(&centers, &widths, &grid).map_err(|e| e.to_string())?;
        let bs = frequency_bins(&mirrored, &widths, &grid).map_err(|e| e.to_string())?;
        let ladder = PhaseLadder::uniform(d);
        let field = fringe_scan_field(&amp, &bi, &bs, &ladder, &phases).map_err(|e| e.to_string())?;
        let state = project_state(&amp, &bi, &bs).map_err(|e| e.to_string())?;
        let proj = fringe_scan_state(&state, &ladder, &phases).map_err(|e| e.to_string())?;
        let dev = field
            .values
            .iter()
            .zip(&proj.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ok &= dev < 0.01;
        parts.push(format!(
            "d={d}: max dev {:.2e}, leakage {:.3}",
            dev,
            field.leakage.unwrap_or(f64::NAN)
        ));
    }
    ensure(ok, parts.join("; "))
}

fn c6_franson() -> Outcome {
    let grid = SpectralGrid::new(1025, 0.35).unwrap();
    let mut worst: f64 = 0.0;
    for &(t, r, t1, phi) in &[(0.5, 0.5, 25.0, 0.3), (0.7, 0.3, 50.0, -1.2), (0.2, 0.6, 10.0, 2.0)] {
        let basis = time_bins(&[0.0, t1], &[0.0, 0.0], &grid).map_err(|e| e.to_string())?;
        let spec = TransferSpec::new(&basis, vec![t, r], vec![0.0, phi], Side::Idler).map_err(|e| e.to_string())?;
        let a = transfer_from_coefficients(&spec).map_err(|e| e.to_string())?.peak_normalized();
        let b = franson_transfer(t, r, t1, phi, &grid).map_err(|e| e.to_string())?.peak_normalized();
        worst = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(worst, f64::max);
    }
    ensure(worst <= 1e-12, format!("max |Δ| = {worst:.2e} after L∞ normalization"))
}

fn c7_time_bins() -> Outcome {
    let grid = SpectralGrid::new(1025, 0.35).unwrap();
    let free = lab_gamma(&grid);
    let psf = apply_psf(&free, 9.6e-3).map_err(|e| e.to_string())?;
    let phases: Vec<f64> = phase_grid(64).iter().map(|p| 2.0 * p).collect();
    let gamma_fit = |amp: &JointAmplitude, t1: f64| -> Result<(f64, f64), String> {
        let scan = franson_fringe_scan(amp, t1, &phases).map_err(|e| e.to_string())?;
        let f = fit_gamma(&scan).map_err(|e| e.to_string())?;
        let (g1, g2) = (f.gamma1().unwrap().0, f.gamma2().unwrap().0);
        Ok((g1, bell_i2(g1, g2).map_err(|e| e.to_string())?.value))
    };
    let scan0 = franson_fringe_scan(&free, 0.0, &phases).map_err(|e| e.to_string())?;
    let cos4 = fit_cos4(&scan0).map_err(|e| e.to_string())?;
    let sweep = [0.0, 10.0, 25.0, 35.0, 50.0];
    let mut g1 = Vec::new();
    let mut i2 = Vec::new();
    for &t1 in &sweep {
        let (g, i) = gamma_fit(&free, t1)?;
        g1.push(g);
        i2.push(i);
    }
    let large = [70.0, 100.0, 150.0];
    let mut i2_psf = Vec::new();
    let mut i2_free_large = Vec::new();
    for &t1 in &large {
        i2_psf.push(gamma_fit(&psf, t1)?.1);
        i2_free_large.push(gamma_fit(&free, t1)?.1);
    }
    let monotone = g1.windows(2).all(|w| w[1] < w[0]);
    let violation = i2[3] > 2.0 && i2[4] > 2.0;
    let psf_decreasing = i2_psf.windows(2).all(|w| w[1] < w[0]);
    let psf_below = i2_psf.iter().zip(&i2_free_large).all(|(p, f)| p < f);
    let ok = cos4.residual_norm < 1e-6 && monotone && violation && psf_decreasing && psf_below;
    ensure(
        ok,
        format!(
            "cos⁴ residual {:.1e}; γ1 = [{}]; I2(35, 50 fs) = {:.3}, {:.3}; PSF I2(70, 100, 150 fs) = [{}] vs free [{}]",
            cos4.residual_norm,
            g1.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", "),
            i2[3],
            i2[4],
            i2_psf.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", "),
            i2_free_large.iter().map(|g| format!("{g:.3}")).collect::<Vec<_>>().join(", "),
        ),
    )
}

fn c8_noise_robust() -> Outcome {
    const TRIALS: u64 = 50;
    let phases = phase_grid(32);
    let mut parts = Vec::new();
    let mut ok = true;
    for (d, lambda) in [(2usize, 0.903), (3, 0.860), (4, 0.959)] {
        let scan = fringe_scan_state_noisy(&QuditState::maximally_entangled(d), lambda, &PhaseLadder::uniform(d), &phases)
            .map_err(|e| e.to_string())?;
        let hits = (0..TRIALS)
            .into_par_iter()
            .map(|seed| {
                let record = synthesize_counts(&scan, 50.0, 11.0, 300.0, 1000 * d as u64 + seed)?;
                let (l, s) = fit_fringe_counts(&record, d)?.lambda().unwrap();
                Ok(((l - lambda).abs() <= 2.0 * s) as u64)
            })
            .collect::<biphoton::Result<Vec<u64>>>()
            .map_err(|e| e.to_string())?
            .iter()
            .sum::<u64>();
        let rate = hits as f64 / TRIALS as f64;
        ok &= rate >= 0.9;
        parts.push(format!("d={d}: {hits}/{TRIALS} within 2σ"));
    }
    ensure(ok, parts.join(", "))
}

fn c9_procrustean() -> Outcome {
    let grid = SpectralGrid::new(1025, 0.35).unwrap();
    let amp = lab_gamma_psf(&grid);
    let centers = [-0.035, 0.0, 0.03];
    let widths = [0.025, 0.01, 0.02];
    let mirrored: Vec<f64> = centers.iter().map(|c| -c).collect();
    let bi = frequency_bins(&centers, &widths, &grid).map_err(|e| e.to_string())?;
    let bs = frequency_bins(&mirrored, &widths, &grid).map_err(|e| e.to_string())?;
    let before = single_projection_signals(&amp, &bi, &bs, &[1.0; 3]).map_err(|e| e.to_string())?;
    let u = procrustean_amplitudes(&before).map_err(|e| e.to_string())?;
    let after = single_projection_signals(&amp, &bi, &bs, &u).map_err(|e| e.to_string())?;
    let max = after.iter().copied().fold(f64::MIN, f64::max);
    let min = after.iter().copied().fold(f64::MAX, f64::min);
    let spread = (max - min) / max;
    let scan = fringe_scan_field(&amp, &bi, &bs, &PhaseLadder::symmetric(u.clone()), &phase_grid(48))
        .map_err(|e| e.to_string())?;
    let (lambda, _) = fit_fringe(&scan, 3).map_err(|e| e.to_string())?.lambda().unwrap();
    let asym = before.iter().copied().fold(f64::MIN, f64::max) / before.iter().copied().fold(f64::MAX, f64::min);
    ensure(
        spread <= 5e-3 && lambda >= 0.99 && asym > 1.5,
        format!("S_max/S_min before {asym:.2}, spread after {spread:.1e}, λ_3 = {lambda:.4}"),
    )
}

fn c10_flux() -> Outcome {
    let f = photon_flux_limit(105.0, 1064.0).map_err(|e| e.to_string())?;
    let ok = (f.flux / 2.8e13 - 1.0).abs() <= 0.05 && (f.power_w / 5.2e-6 - 1.0).abs() <= 0.05;
    ensure(ok, format!("Φ_max = {:.3e} /s, P_max = {:.3} µW", f.flux, f.power_w * 1e6))
}

fn c11_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut parts = Vec::new();

    let grid = SpectralGrid::new(513, 0.35).unwrap();
    let mut gram_err: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..=4);
        let width = rng.random_range(0.01..0.05);
        let centers: Vec<f64> = (0..d).map(|j| (j as f64 - (d - 1) as f64 / 2.0) * (width + 0.01)).collect();
        let b = frequency_bins(&centers, &vec![width; d], &grid).map_err(|e| e.to_string())?;
        let g = gram_matrix(&b);
        gram_err = gram_err.max((g - nalgebra::DMatrix::<Complex64>::identity(d, d)).norm());
    }
    let dg = double_gaussian(0.02, 0.05, 257);
    let dec = schmidt_decompose_modes(&dg, 3).map_err(|e| e.to_string())?;
    for basis in [&dec.idler, &dec.signal] {
        let g = gram_matrix(basis);
        gram_err = gram_err.max((g - nalgebra::DMatrix::<Complex64>::identity(3, 3)).norm());
    }
    let gram_ok = gram_err < 1e-6;
    parts.push(format!("‖G−I‖ ≤ {gram_err:.1e}"));

    let beta_sum: f64 = dec.report.betas.iter().sum();
    let norm_ok = (beta_sum - 1.0).abs() < 1e-6;
    parts.push(format!("Σβ − 1 = {:.1e}", beta_sum - 1.0));

    // Rank-3 reconstruction error equals the discarded weight.
    let w = dg.grid().weights();
    let n = w.len();
    let sig: Vec<f64> = dec.report.betas[..3].iter().map(|b| b.sqrt()).collect();
    let mut err = 0.0;
    for i in 0..n {
        for j in 0..n {
            let approx: Complex64 = (0..3)
                .map(|k| dec.idler.functions()[(i, k)] * dec.signal.functions()[(j, k)] * sig[k])
                .sum();
            err += w[i] * w[j] * (dg.values()[(i, j)] - approx).norm_sqr();
        }
    }
    let tail = 1.0 - dec.report.betas[..3].iter().sum::<f64>();
    let recon_ok = (err - tail).abs() < 1e-6;
    parts.push(format!("rank-3 error {err:.3e} vs tail {tail:.3e}"));

    let base = phase_grid(16);
    let shifted: Vec<f64> = base.iter().map(|p| p + PI).collect();
    let mut period_err: f64 = 0.0;
    for d in 2..=4 {
        let c: Vec<Complex64> = (0..d)
            .map(|_| Complex64::from_polar(rng.random_range(0.2..1.0), rng.random_range(-PI..PI)))
            .collect();
        let norm = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let c: Vec<Complex64> = c.iter().map(|z| z / norm).collect();
        let state = QuditState::diagonal(&c).map_err(|e| e.to_string())?;
        let ladder = PhaseLadder::uniform(d);
        let a = fringe_scan_state(&state, &ladder, &base).map_err(|e| e.to_string())?;
        let b = fringe_scan_state(&state, &ladder, &shifted).map_err(|e| e.to_string())?;
        period_err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(period_err, f64::max);
    }
    let period_ok = period_err < 1e-12;
    parts.push(format!("π-periodicity {period_err:.1e}"));

    let mut bell_max: f64 = 0.0;
    for _ in 0..100 {
        let r = bell_i2(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).map_err(|e| e.to_string())?;
        bell_max = bell_max.max(r.value);
    }
    let bell_ok = bell_max <= 2.0 * SQRT_2 + 1e-9;
    parts.push(format!("max I2 {bell_max:.4}"));

    let amp = lab_gamma_psf(&grid);
    let bi = frequency_bins(&[-0.02, 0.02], &[0.02, 0.02], &grid).map_err(|e| e.to_string())?;
    let bs = frequency_bins(&[0.02, -0.02], &[0.02, 0.02], &grid).map_err(|e| e.to_string())?;
    let s1 = single_projection_signals(&amp, &bi, &bs, &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let mut cov_err: f64 = 0.0;
    for lambda in [0.9, 0.5, 0.2] {
        let s = single_projection_signals(&amp, &bi, &bs, &[lambda, lambda]).map_err(|e| e.to_string())?;
        cov_err = s.iter().zip(&s1).map(|(a, b)| (a / b / lambda.powi(4) - 1.0).abs()).fold(cov_err, f64::max);
    }
    let cov_ok = cov_err < 1e-9;
    parts.push(format!("S/λ⁴ deviation {cov_err:.1e}"));

    ensure(
        gram_ok && norm_ok && recon_ok && period_ok && bell_ok && cov_ok,
        parts.join(", "),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("CGLMP thresholds", c1_thresholds),
        ("PSF-reduced entanglement", c2_psf_entanglement),
        ("double-Gaussian substitute", c3_double_gaussian),
        ("ideal fringes", c4_ideal_fringes),
        ("dual-route equivalence", c5_dual_route),
        ("Franson equivalence", c6_franson),
        ("time-bin transition", c7_time_bins),
        ("noise-robust fitting", c8_noise_robust),
        ("Procrustean filtering", c9_procrustean),
        ("flux bound", c10_flux),
        ("property suites", c11_properties),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
