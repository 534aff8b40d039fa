use biphoton::bases::frequency_bins;
use biphoton::field::{apply_psf, build_joint_amplitude, CrystalRole, CrystalSpec, JointAmplitude, PumpSpec};
use biphoton::fit::fit_fringe;
use biphoton::grid::SpectralGrid;
use biphoton::measurement::{
    coincidence_signal, fringe_scan_field, phase_grid, procrustean_amplitudes, project_state, PhaseLadder,
};
use biphoton::metrics::{schmidt_decompose, schmidt_decompose_modes};
use biphoton::shaper::{pixelate, transfer_from_coefficients, AffineMapping, Side, SlmModel, TransferSpec};
use biphoton::Error;

fn source(n: usize) -> (JointAmplitude, JointAmplitude) {
    let grid = SpectralGrid::new(n, 0.35).unwrap();
    let gamma = build_joint_amplitude(
        &grid,
        &PumpSpec::lab_default(),
        &CrystalSpec::lab_default(CrystalRole::Spdc),
        Some(&CrystalSpec::lab_default(CrystalRole::Sfg)),
    )
    .unwrap();
    let psf = apply_psf(&gamma, 9.6e-3).unwrap();
    (gamma, psf)
}

#[test]
fn psf_lowers_entanglement() {
    let (gamma, psf) = source(513);
    assert!(gamma.metadata().pump_clamped);
    assert!(gamma.asymmetry() < 1e-12);
    let k_free = schmidt_decompose(&gamma).unwrap().schmidt_number;
    let k_psf = schmidt_decompose(&psf).unwrap().schmidt_number;
    assert!(k_psf < k_free, "K {k_psf} with PSF vs {k_free} without");
}

#[test]
fn mirrored_bins_give_a_diagonal_state() {
    let (_, psf) = source(513);
    let grid = psf.grid().clone();
    let bi = frequency_bins(&[-0.03, 0.0, 0.03], &[0.02; 3], &grid).unwrap();
    let bs = frequency_bins(&[0.03, 0.0, -0.03], &[0.02; 3], &grid).unwrap();
    let state = project_state(&psf, &bi, &bs).unwrap();
    let c = state.coefficients();
    for j in 0..3 {
        for k in 0..3 {
            if j != k {
                assert!(c[(j, k)].norm() < 0.05 * c[(j, j)].norm(), "c[{j},{k}] = {}", c[(j, k)]);
            }
        }
    }
    assert!(state.truncation_leakage() > 0.0 && state.truncation_leakage() < 1.0);
}

#[test]
fn schmidt_qutrit_fringe_with_procrustean_filter() {
    let (_, psf) = source(513);
    let dec = schmidt_decompose_modes(&psf, 3).unwrap();
    let u = procrustean_amplitudes(&dec.report.betas[..3]).unwrap();
    let scan = fringe_scan_field(&psf, &dec.idler, &dec.signal, &PhaseLadder::symmetric(u), &phase_grid(36)).unwrap();
    let fit = fit_fringe(&scan, 3).unwrap();
    assert!(fit.lambda().unwrap().0 > 0.99);
}

#[test]
fn pixelated_shaper_barely_changes_a_bin_signal() {
    let (_, psf) = source(1025);
    let grid = psf.grid().clone();
    let basis = frequency_bins(&[-0.02, 0.02], &[0.02, 0.02], &grid).unwrap();
    let mirrored = frequency_bins(&[0.02, -0.02], &[0.02, 0.02], &grid).unwrap();
    let mi = transfer_from_coefficients(&TransferSpec::ladder(&basis, 0.4, Side::Idler)).unwrap();
    let ms = transfer_from_coefficients(&TransferSpec::ladder(&mirrored, 0.4, Side::Signal)).unwrap();
    let ideal = coincidence_signal(&psf, &mi, &ms).unwrap();
    let slm = SlmModel::lab_default();
    let pi = pixelate(&mi, &slm).unwrap();
    let ps = pixelate(&ms, &slm).unwrap();
    assert!(pi.is_pixelated());
    let pixel = coincidence_signal(&psf, &pi, &ps).unwrap();
    // Field transmission 100/103 per photon; both photons enter S squared.
    let expected = (100.0f64 / 103.0).powi(4);
    assert!((pixel / ideal - expected).abs() < 0.02, "{pixel} vs {ideal}");

    let off = SlmModel {
        mapping: Some(AffineMapping {
            offset_um: 20_000.0,
            um_per_unit: slm.aperture_um() / grid.window(),
        }),
        ..slm
    };
    assert!(matches!(pixelate(&mi, &off), Err(Error::Mapping(_))));
}
