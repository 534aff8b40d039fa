//! Python bindings for the `biphoton` simulation library.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use biphoton::bases;
use biphoton::field::{self, CrystalRole, CrystalSpec, PumpSpec};
use biphoton::fit;
use biphoton::grid;
use biphoton::measurement::{self, PhaseLadder, QuditState};
use biphoton::metrics;
use biphoton::scenario::{self, RunOptions};

fn py_err(e: biphoton::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Odd, symmetric frequency axis in rad/fs relative to degeneracy.
#[pyclass(name = "SpectralGrid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(grid::SpectralGrid);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n_points = 1025, omega_max = 0.35))]
    fn new(n_points: usize, omega_max: f64) -> PyResult<Self> {
        grid::SpectralGrid::new(n_points, omega_max).map(Self).map_err(py_err)
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.0.n_points()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    fn axis(&self) -> Vec<f64> {
        self.0.axis()
    }

    fn weights(&self) -> Vec<f64> {
        self.0.weights()
    }

    /// Same window with twice the resolution.
    fn refined(&self) -> Self {
        Self(self.0.refined())
    }

    fn __repr__(&self) -> String {
        format!("SpectralGrid(n_points={}, omega_max={})", self.0.n_points(), self.0.omega_max())
    }
}

/// Normalized two-photon amplitude on a grid.
#[pyclass(name = "JointAmplitude", frozen)]
struct PyAmplitude(field::JointAmplitude);

#[pymethods]
impl PyAmplitude {
    /// Down-conversion source detected by sum-frequency generation.
    ///
    /// Defaults: 5 MHz pump at 532 nm, 11.5 mm crystals poled at 9 µm.
    #[staticmethod]
    #[pyo3(signature = (grid, pump_bandwidth_mhz = 5.0, length_mm = 11.5, poling_period_um = 9.0, psf_fwhm = None))]
    fn source(
        grid: &PyGrid,
        pump_bandwidth_mhz: f64,
        length_mm: f64,
        poling_period_um: f64,
        psf_fwhm: Option<f64>,
    ) -> PyResult<Self> {
        let pump = PumpSpec::from_mhz(pump_bandwidth_mhz, 532.0).map_err(py_err)?;
        let crystal = |role| {
            CrystalSpec::new(
                length_mm,
                poling_period_um,
                CrystalSpec::lab_default(role).dispersion,
                role,
            )
        };
        let spdc = crystal(CrystalRole::Spdc).map_err(py_err)?;
        let sfg = crystal(CrystalRole::Sfg).map_err(py_err)?;
        let amp = field::build_joint_amplitude(&grid.0, &pump, &spdc, Some(&sfg)).map_err(py_err)?;
        match psf_fwhm {
            Some(w) => field::apply_psf(&amp, w).map(Self).map_err(py_err),
            None => Ok(Self(amp)),
        }
    }

    /// Convolve with a Gaussian point spread function of the given FWHM.
    fn with_psf(&self, fwhm: f64) -> PyResult<Self> {
        field::apply_psf(&self.0, fwhm).map(Self).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    #[getter]
    fn pump_clamped(&self) -> bool {
        self.0.metadata().pump_clamped
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.0.metadata().warnings.clone()
    }

    fn norm_squared(&self) -> f64 {
        self.0.norm_squared()
    }

    fn asymmetry(&self) -> f64 {
        self.0.asymmetry()
    }

    /// Samples as rows of complex numbers, `values()[i][j] = Γ(ω_i, ω_s)`.
    fn values(&self) -> Vec<Vec<biphoton::Complex64>> {
        let v = self.0.values();
        (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect()
    }

    fn diagonal(&self) -> Vec<biphoton::Complex64> {
        self.0.diagonal()
    }

    fn anti_diagonal(&self) -> Vec<biphoton::Complex64> {
        self.0.anti_diagonal()
    }
}

/// Set of `d` mode functions on a grid.
#[pyclass(name = "BasisSet", frozen)]
struct PyBasis(bases::BasisSet);

#[pymethods]
impl PyBasis {
    #[getter]
    fn dimension(&self) -> usize {
        self.0.dimension()
    }

    fn function(&self, j: usize) -> PyResult<Vec<biphoton::Complex64>> {
        if j >= self.0.dimension() {
            return Err(PyValueError::new_err(format!("mode {j} out of range")));
        }
        Ok(self.0.function(j))
    }

    /// Largest deviation of the Gram matrix from the identity.
    fn orthonormality_error(&self) -> f64 {
        let g = bases::gram_matrix(&self.0);
        let d = self.0.dimension();
        let mut worst: f64 = 0.0;
        for j in 0..d {
            for k in 0..d {
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((g[(j, k)] - target).norm());
            }
        }
        worst
    }
}

#[pyfunction]
fn frequency_bins(centers: Vec<f64>, widths: Vec<f64>, grid: &PyGrid) -> PyResult<PyBasis> {
    bases::frequency_bins(&centers, &widths, &grid.0).map(PyBasis).map_err(py_err)
}

#[pyfunction]
fn time_bins(centers: Vec<f64>, widths: Vec<f64>, grid: &PyGrid) -> PyResult<PyBasis> {
    bases::time_bins(&centers, &widths, &grid.0).map(PyBasis).map_err(py_err)
}

/// First `d` idler and signal Schmidt modes.
#[pyfunction]
fn schmidt_modes(amp: &PyAmplitude, d: usize) -> PyResult<(PyBasis, PyBasis)> {
    bases::schmidt_mode_pair(&amp.0, d)
        .map(|(i, s)| (PyBasis(i), PyBasis(s)))
        .map_err(py_err)
}

#[pyclass(name = "EntanglementReport", frozen, get_all)]
struct PyReport {
    betas: Vec<f64>,
    entropy: f64,
    schmidt_number: f64,
    effective_dimension: f64,
    rank: usize,
}

#[pymethods]
impl PyReport {
    fn __repr__(&self) -> String {
        format!(
            "EntanglementReport(entropy={:.4}, schmidt_number={:.4}, effective_dimension={:.3})",
            self.entropy, self.schmidt_number, self.effective_dimension
        )
    }
}

#[pyfunction]
fn schmidt_decompose(amp: &PyAmplitude) -> PyResult<PyReport> {
    let r = metrics::schmidt_decompose(&amp.0).map_err(py_err)?;
    Ok(PyReport {
        betas: r.betas,
        entropy: r.entropy,
        schmidt_number: r.schmidt_number,
        effective_dimension: r.effective_dimension,
        rank: r.rank,
    })
}

#[pyfunction]
fn double_gaussian_oracle(a: f64, b: f64) -> PyResult<f64> {
    metrics::double_gaussian_oracle(a, b).map_err(py_err)
}

/// Coincidence signal versus phase, normalized to unit mean.
#[pyclass(name = "FringeScan", frozen)]
struct PyScan(measurement::FringeScan);

#[pymethods]
impl PyScan {
    #[getter]
    fn phases(&self) -> Vec<f64> {
        self.0.phases.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values.clone()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.d
    }

    #[getter]
    fn leakage(&self) -> Option<f64> {
        self.0.leakage
    }

    fn visibility(&self) -> f64 {
        self.0.visibility()
    }
}

#[pyfunction]
fn phase_grid(n: usize) -> Vec<f64> {
    measurement::phase_grid(n)
}

/// Fringe of a maximally entangled qudit mixed with white noise.
#[pyfunction]
#[pyo3(signature = (d, phases, lam = 1.0))]
fn ideal_fringe(d: usize, phases: Vec<f64>, lam: f64) -> PyResult<PyScan> {
    measurement::fringe_scan_state_noisy(&QuditState::maximally_entangled(d), lam, &PhaseLadder::uniform(d), &phases)
        .map(PyScan)
        .map_err(py_err)
}

/// Fringe computed from the full field; `amplitudes` sets the filter
/// magnitudes `|u_j|` (uniform when omitted).
#[pyfunction]
#[pyo3(signature = (amp, basis_i, basis_s, phases, amplitudes = None, route = "full_field"))]
fn fringe_scan(
    amp: &PyAmplitude,
    basis_i: &PyBasis,
    basis_s: &PyBasis,
    phases: Vec<f64>,
    amplitudes: Option<Vec<f64>>,
    route: &str,
) -> PyResult<PyScan> {
    let ladder = match amplitudes {
        Some(a) => PhaseLadder::symmetric(a),
        None => PhaseLadder::uniform(basis_i.0.dimension()),
    };
    let scan = match route {
        "full_field" => measurement::fringe_scan_field(&amp.0, &basis_i.0, &basis_s.0, &ladder, &phases),
        "state_space" => measurement::project_state(&amp.0, &basis_i.0, &basis_s.0)
            .and_then(|s| measurement::fringe_scan_state(&s, &ladder, &phases)),
        other => return Err(PyValueError::new_err(format!("unknown route {other:?}"))),
    };
    scan.map(PyScan).map_err(py_err)
}

#[pyfunction]
fn franson_fringe_scan(amp: &PyAmplitude, t1: f64, phases: Vec<f64>) -> PyResult<PyScan> {
    measurement::franson_fringe_scan(&amp.0, t1, &phases).map(PyScan).map_err(py_err)
}

#[pyfunction]
fn single_projection_signals(
    amp: &PyAmplitude,
    basis_i: &PyBasis,
    basis_s: &PyBasis,
    amplitudes: Vec<f64>,
) -> PyResult<Vec<f64>> {
    measurement::single_projection_signals(&amp.0, &basis_i.0, &basis_s.0, &amplitudes).map_err(py_err)
}

#[pyfunction]
fn procrustean_amplitudes(signals: Vec<f64>) -> PyResult<Vec<f64>> {
    measurement::procrustean_amplitudes(&signals).map_err(py_err)
}

#[pyclass(name = "CountRecord", frozen)]
struct PyCounts(measurement::CountRecord);

#[pymethods]
impl PyCounts {
    #[getter]
    fn gross(&self) -> Vec<u64> {
        self.0.gross.clone()
    }

    #[getter]
    fn background(&self) -> Vec<u64> {
        self.0.background.clone()
    }

    #[getter]
    fn phases(&self) -> Vec<f64> {
        self.0.phases.clone()
    }
}

#[pyfunction]
#[pyo3(signature = (scan, peak_rate, background_rate = 11.0, duration_s = 300.0, seed = 0))]
fn synthesize_counts(scan: &PyScan, peak_rate: f64, background_rate: f64, duration_s: f64, seed: u64) -> PyResult<PyCounts> {
    measurement::synthesize_counts(&scan.0, peak_rate, background_rate, duration_s, seed)
        .map(PyCounts)
        .map_err(py_err)
}

#[pyclass(name = "FitResult", frozen)]
struct PyFit(fit::FitResult);

#[pymethods]
impl PyFit {
    #[getter]
    fn parameters(&self) -> Vec<(String, f64, f64)> {
        let names = self.0.model.parameter_names();
        names
            .iter()
            .zip(self.0.parameters.iter().zip(&self.0.uncertainties))
            .map(|(n, (v, s))| (n.to_string(), *v, *s))
            .collect()
    }

    #[getter]
    fn residual_norm(&self) -> f64 {
        self.0.residual_norm
    }

    /// `(λ, σ_λ)` for the noisy-qudit model.
    fn lam(&self) -> Option<(f64, f64)> {
        self.0.lambda()
    }

    fn gamma1(&self) -> Option<(f64, f64)> {
        self.0.gamma1()
    }

    fn gamma2(&self) -> Option<(f64, f64)> {
        self.0.gamma2()
    }

    fn visibility(&self) -> Option<f64> {
        self.0.visibility()
    }

    fn evaluate(&self, phi: f64) -> f64 {
        self.0.evaluate(phi)
    }
}

#[pyfunction]
fn fit_fringe(scan: &PyScan, d: usize) -> PyResult<PyFit> {
    fit::fit_fringe(&scan.0, d).map(PyFit).map_err(py_err)
}

#[pyfunction]
fn fit_fringe_counts(record: &PyCounts, d: usize) -> PyResult<PyFit> {
    fit::fit_fringe_counts(&record.0, d).map(PyFit).map_err(py_err)
}

#[pyfunction]
fn fit_gamma(scan: &PyScan) -> PyResult<PyFit> {
    fit::fit_gamma(&scan.0).map(PyFit).map_err(py_err)
}

#[pyfunction]
fn fit_cos4(scan: &PyScan) -> PyResult<PyFit> {
    fit::fit_cos4(&scan.0).map(PyFit).map_err(py_err)
}

/// `(I_max, λ_c, V_c)` for dimension `d`.
#[pyfunction]
fn cglmp_thresholds(d: usize) -> PyResult<(f64, f64, f64)> {
    let t = metrics::cglmp_thresholds(d).map_err(py_err)?;
    Ok((t.i_max, t.lambda_c, t.v_c))
}

#[pyfunction]
fn bell_i2(gamma1: f64, gamma2: f64) -> PyResult<f64> {
    metrics::bell_i2(gamma1, gamma2).map(|r| r.value).map_err(py_err)
}

/// `(flux per second, power in W)` at the single-photon limit.
#[pyfunction]
#[pyo3(signature = (bandwidth_nm = 105.0, center_wavelength_nm = 1064.0))]
fn photon_flux_limit(bandwidth_nm: f64, center_wavelength_nm: f64) -> PyResult<(f64, f64)> {
    let f = field::photon_flux_limit(bandwidth_nm, center_wavelength_nm).map_err(py_err)?;
    Ok((f.flux, f.power_w))
}

/// Run a TOML scenario in memory and return the JSON report.
#[pyfunction]
#[pyo3(signature = (toml_text, seed = None))]
fn run_scenario(toml_text: &str, seed: Option<u64>) -> PyResult<String> {
    let s = scenario::Scenario::from_toml_str(toml_text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let run = scenario::run_scenario(&s, &RunOptions { seed, parallel: false }).map_err(py_err)?;
    String::from_utf8(scenario::report_json(&run)).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "biphoton")]
pub fn biphoton_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyAmplitude>()?;
    m.add_class::<PyBasis>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PyScan>()?;
    m.add_class::<PyCounts>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(frequency_bins, m)?)?;
    m.add_function(wrap_pyfunction!(time_bins, m)?)?;
    m.add_function(wrap_pyfunction!(schmidt_modes, m)?)?;
    m.add_function(wrap_pyfunction!(schmidt_decompose, m)?)?;
    m.add_function(wrap_pyfunction!(double_gaussian_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(phase_grid, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_fringe, m)?)?;
    m.add_function(wrap_pyfunction!(fringe_scan, m)?)?;
    m.add_function(wrap_pyfunction!(franson_fringe_scan, m)?)?;
    m.add_function(wrap_pyfunction!(single_projection_signals, m)?)?;
    m.add_function(wrap_pyfunction!(procrustean_amplitudes, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_counts, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fringe, m)?)?;
    m.add_function(wrap_pyfunction!(fit_fringe_counts, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cos4, m)?)?;
    m.add_function(wrap_pyfunction!(cglmp_thresholds, m)?)?;
    m.add_function(wrap_pyfunction!(bell_i2, m)?)?;
    m.add_function(wrap_pyfunction!(photon_flux_limit, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
