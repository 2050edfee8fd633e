import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iosac import config as cf
from iosac import pipeline as pl
from iosac.errors import IllConditioned, OrderJump, OutOfRange
from iosac.modesolver import CrossSection, Layer, ring_thermal_drift, solve_slab
from iosac.ring import Spectrum
from iosac.sensing import (
    AnalyteModel,
    SensingReport,
    SensingSeries,
    calibrate_thermo_optic,
    concentration_to_index,
    fit_sensitivity,
    fit_thermal,
    hybrid_thermal_drift,
    shift_to_concentration,
    simulate_series,
    track_resonance,
)

from oracles import lorentzian_spectrum

LAM0 = 1546e-9
FWHM = LAM0 / 11000
GRID = np.arange(3001) * 1e-12 + 1545e-9


def dip_series(centers, stimuli, kind="RI", grid=GRID, fwhm=FWHM):
    spectra = [Spectrum(grid, lorentzian_spectrum(grid, c, fwhm, 0.9)) for c in centers]
    return SensingSeries(np.asarray(stimuli), spectra, kind)


def test_identical_spectra_constant_track():
    s = dip_series([LAM0] * 4, [1.318, 1.32, 1.322, 1.324])
    lam = track_resonance(s)
    assert np.ptp(lam) == 0


def test_programmed_shifts_recovered():
    dn = np.array([0.0, 1e-3, 2.5e-3, 4e-3])
    s = dip_series(LAM0 + 172e-9 * dn, 1.318 + dn)
    lam = track_resonance(s)
    assert np.max(np.abs((lam - lam[0]) - 172e-9 * dn)) < 0.1e-12


def test_order_jump():
    grid = np.arange(8001) * 1e-12 + 1542e-9
    s = dip_series([1543e-9, 1546e-9], [1.318, 1.33], grid=grid)
    with pytest.raises(OrderJump):
        track_resonance(s, fsr=4.76e-9)


def test_exact_line_fit():
    dn = np.linspace(0, 5e-3, 5)
    rep = fit_sensitivity(dip_series(LAM0 + 172e-9 * dn, 1.318 + dn))
    assert rep.S == pytest.approx(172, rel=1e-6)
    assert rep.fit_residual < 1e-6


def test_paper_metric_triple():
    dn = np.linspace(0, 4e-3, 4)
    rep = fit_sensitivity(dip_series(LAM0 + 172e-9 * dn, 1.318 + dn))
    assert rep.fwhm == pytest.approx(0.14055, rel=1e-3)
    assert rep.fom == pytest.approx(1224, abs=2)
    assert rep.dl == pytest.approx(8.17e-6, abs=0.01e-6)


def test_report_identities():
    dn = np.linspace(0, 4e-3, 4)
    rep = fit_sensitivity(dip_series(LAM0 + 172e-9 * dn, 1.318 + dn), kappa=50)
    assert rep.fom * rep.resonance / rep.Q == pytest.approx(rep.S, rel=1e-12)
    assert rep.dl * rep.S * rep.kappa == pytest.approx(rep.fwhm, rel=1e-12)


def test_ill_conditioned_span():
    s = dip_series([LAM0, LAM0], [1.318, 1.318 + 1e-6])
    with pytest.raises(IllConditioned):
        fit_sensitivity(s)


def test_series_validation():
    with pytest.raises(ValueError):
        dip_series([LAM0, LAM0, LAM0], [1.0, 1.2, 1.1])
    with pytest.raises(ValueError):
        dip_series([LAM0], [1.0])
    other = Spectrum(GRID + 1e-12, np.ones_like(GRID))
    with pytest.raises(ValueError):
        SensingSeries(np.array([1.0, 2.0]), [dip_series([LAM0] * 2, [1, 2]).spectra[0], other])


def test_slope_noise_matches_least_squares():
    x = 1.318 + np.linspace(0, 0.01, 6)
    s = dip_series([LAM0] * 6, x)
    sigma = 0.01  # nm
    predicted = sigma / np.sqrt(np.sum((x - x.mean()) ** 2))
    errors = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        lam = (LAM0 * 1e9 + 172 * (x - x[0]) + rng.normal(0, sigma, x.size)) * 1e-9
        errors.append(fit_sensitivity(s, tracked=lam).S - 172)
    errors = np.array(errors)
    assert abs(errors.mean()) < 3 * predicted / 10
    assert np.std(errors) == pytest.approx(predicted, rel=0.2)


def test_analyte_model_defaults(cfg):
    model = cf.analyte_model(cfg)
    assert concentration_to_index(model, 0.0) == model.solvent
    assert concentration_to_index(model, 2.5)[0] == pytest.approx(1.32225, abs=1e-12)
    assert shift_to_concentration(model, 0.731, 172.0) == pytest.approx(2.5, abs=1e-9)
    with pytest.raises(OutOfRange):
        concentration_to_index(model, -1)
    with pytest.raises(OutOfRange):
        concentration_to_index(model, 40)


def test_analyte_model_invariants():
    with pytest.raises(ValueError):
        AnalyteModel([0, 1], [1.33, 1.32], [1, 2])
    with pytest.raises(ValueError):
        AnalyteModel([0, 1], [1.32, 1.33], [2, 1])
    with pytest.raises(ValueError):
        AnalyteModel([1, 2], [1.32, 1.33], [1, 2])


@given(c1=st.floats(0, 26), c2=st.floats(0, 26))
def test_concentration_map_monotone(c1, c2):
    model = AnalyteModel([0, 5, 10, 26], [1.318, 1.3265, 1.335, 1.3622], [34.7, 36.7, 38.7, 45.1])
    (n1, a1), (n2, a2) = concentration_to_index(model, c1), concentration_to_index(model, c2)
    if c1 <= c2:
        assert n1 <= n2 and a1 <= a2
    if c2 - c1 > 1e-9:
        assert n1 < n2
    for c, n, a in zip(model.concentrations, model.indices, model.absorption):
        assert concentration_to_index(model, c) == (n, a)


def test_json_and_directory_round_trip(tmp_path):
    dn = np.linspace(0, 4e-3, 4)
    s = dip_series(LAM0 + 172e-9 * dn, 1.318 + dn)
    rep = fit_sensitivity(s)
    back = SensingReport.from_json(rep.to_json())
    assert back == rep
    json.loads(rep.to_json())
    s.to_directory(tmp_path)
    again = SensingSeries.from_directory(tmp_path)
    assert np.array_equal(again.stimuli, s.stimuli)
    assert fit_sensitivity(again).S == pytest.approx(rep.S, rel=1e-5)


def test_end_to_end_hybrid_sensitivity(cfg, devices):
    rep = fit_sensitivity(pl.ri_series(cfg, devices))
    assert rep.S == pytest.approx(172, abs=1)


@pytest.mark.parametrize("rho, target", [(0.0, 97.0), (1.0, 197.0)])
def test_strip_and_slot_devices(cfg, devices, rho, target):
    ring = cf.build_ring(cfg, devices.strip_mode, devices.slot_mode, devices.analyte, rho=rho)
    series = simulate_series(ring, pl.wavelength_grid(cfg), [0.0, 2.5, 5.0, 10.0], "RI", devices.analyte)
    assert fit_sensitivity(series).S == pytest.approx(target, abs=0.1)


def test_hybrid_thermal_drift(cfg, devices):
    assert fit_thermal(pl.thermal_series(cfg, devices)) == pytest.approx(14.6, rel=0.02)


def test_zero_thermo_optic_gives_no_drift(cfg, devices):
    ring = devices.ring
    flat = replace(ring, strip=replace(ring.strip, dneff_dT=0.0), slot=replace(ring.slot, dneff_dT=0.0))
    series = simulate_series(flat, pl.wavelength_grid(cfg), [20, 30, 40], "temperature")
    assert fit_thermal(series) == pytest.approx(0.0, abs=1e-6)


def test_calibrated_coefficient_reproduces_target(devices):
    w = Layer(1.318, thermo_optic=-1e-4, is_analyte=True, name="water")
    cs = CrossSection((w, Layer(2.0, 784.5e-9, thermo_optic=0.0, name="SiN"), w), LAM0, "TM")
    to = calibrate_thermo_optic([(1.0, cs)], "SiN", 10.0)
    cal = CrossSection((w, Layer(2.0, 784.5e-9, thermo_optic=to, name="SiN"), w), LAM0, "TM")
    assert hybrid_thermal_drift([(1.0, cal)]) == pytest.approx(10.0, rel=1e-6)
    assert 3e-5 < devices.materials["SiN"]["thermo_optic"] < 7e-5


@pytest.mark.xfail(
    strict=True,
    reason="non-dispersive slab caps Si drift at lambda*TO_Si/n_Si ~ 83 pm/degC; see README",
)
def test_si_comparator_drift(cfg):
    m = solve_slab(cf.cross_section(cfg, "si_comparator"))
    assert ring_thermal_drift(m) == pytest.approx(90, abs=5)


def test_si_comparator_bound(cfg):
    m = solve_slab(cf.cross_section(cfg, "si_comparator"))
    cap = 1546e-9 * 1.86e-4 / 3.476 * 1e12
    assert 70 < ring_thermal_drift(m) < cap
