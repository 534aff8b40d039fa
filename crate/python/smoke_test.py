"""Quick check that the compiled extension loads and agrees with known values."""

import json
import math

import biphoton

_, lambda_c, v_c = biphoton.cglmp_thresholds(2)
assert abs(v_c - 1 / math.sqrt(2)) < 1e-3, v_c

grid = biphoton.SpectralGrid(257, 0.35)
amp = biphoton.JointAmplitude.source(grid, psf_fwhm=9.6e-3)
report = biphoton.schmidt_decompose(amp)
assert abs(sum(report.betas) - 1) < 1e-9
assert report.schmidt_number > 1
print(report)

phases = biphoton.phase_grid(32)
scan = biphoton.ideal_fringe(3, phases, lam=0.9)
lam, sigma = biphoton.fit_fringe(scan, 3).lam()
assert abs(lam - 0.9) < 1e-6, lam

bins_i = biphoton.frequency_bins([-0.02, 0.02], [0.02, 0.02], grid)
bins_s = biphoton.frequency_bins([0.02, -0.02], [0.02, 0.02], grid)
assert bins_i.orthonormality_error() < 1e-6
field = biphoton.fringe_scan(amp, bins_i, bins_s, phases)
print("qubit fringe visibility", round(field.visibility(), 4))

fit = biphoton.fit_gamma(biphoton.franson_fringe_scan(amp, 0.0, phases))
print("gamma1", fit.gamma1(), "gamma2", fit.gamma2())

flux, power = biphoton.photon_flux_limit()
assert abs(flux / 2.8e13 - 1) < 0.05

out = json.loads(biphoton.run_scenario('schema_version = 1\n[[experiment]]\nkind = "flux_check"\n'))
assert out["experiments"][0]["experiment"] == "flux_check"
print("smoke test ok")
