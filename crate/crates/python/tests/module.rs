use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn module_exposes_the_main_api() {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "biphoton").unwrap();
        biphoton_py::biphoton_module(&m).unwrap();
        let locals = PyDict::new(py);
        locals.set_item("bp", &m).unwrap();
        py.run(
            cr#"
g = bp.SpectralGrid(129, 0.35)
assert g.n_points == 129
assert abs(sum(g.weights()) - 0.7) < 1e-12
amp = bp.JointAmplitude.source(g)
assert abs(amp.norm_squared() - 1) < 1e-9
r = bp.schmidt_decompose(amp)
assert abs(sum(r.betas) - 1) < 1e-9
i_max, lam_c, v_c = bp.cglmp_thresholds(3)
scan = bp.ideal_fringe(3, bp.phase_grid(24), lam_c)
assert abs(bp.fit_fringe(scan, 3).visibility() - v_c) < 1e-6
counts = bp.synthesize_counts(scan, 50.0, seed=3)
assert len(counts.gross) == 24
assert 0 < bp.bell_i2(1.0, 1.0) <= 2 * 2 ** 0.5 + 1e-9
try:
    bp.SpectralGrid(4, 0.35)
    raise AssertionError("even grid accepted")
except ValueError:
    pass
"#,
            None,
            Some(&locals),
        )
        .unwrap();
    });
}
