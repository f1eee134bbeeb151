from __future__ import annotations

import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_system
from shotnoise.analysis import (
    FitResult,
    estimate_populations,
    fit_decaying_sine,
    fit_exponential,
    fit_ramsey_reequilibration,
    thermal_probs,
)
from shotnoise.model import TWO_PI
from shotnoise.quantum import ramsey_sequence, run_sequence, simulate_cavity_ringdown

TRUE = {"amplitude": 1.0, "t2": 26e-6, "frequency": 0.5e6, "phase": 0.0, "offset": 0.5}


def sine(t, amplitude, t2, frequency, phase, offset):
    return amplitude * np.exp(-t / t2) * np.sin(TWO_PI * frequency * t + phase) + offset


# --- decaying sine --------------------------------------------------------------------


def test_sine_round_trip():
    t = np.linspace(0, 60e-6, 241)
    r = fit_decaying_sine(t, sine(t, **TRUE))
    assert r.converged and r.flags == ()
    for k in ("amplitude", "t2", "frequency", "offset"):
        assert r.params[k] == pytest.approx(TRUE[k], rel=1e-6)
    assert abs(r.params["phase"]) < 1e-6
    assert r.residual_norm < 1e-8 * TRUE["amplitude"]


def test_sine_snr20_study():
    # 2001 samples over 5 T2 (0-130 us); see the ledger for the sampling study
    t = np.linspace(0, 130e-6, 2001)
    y0 = sine(t, **TRUE)
    errs = []
    for seed in range(100):
        y = y0 + np.random.default_rng(seed).normal(0, TRUE["amplitude"] / 20, t.size)
        p = fit_decaying_sine(t, y).params
        errs.append(
            [
                abs(p["amplitude"] / TRUE["amplitude"] - 1),
                abs(p["t2"] / TRUE["t2"] - 1),
                abs(p["frequency"] / TRUE["frequency"] - 1),
                abs(p["offset"] / TRUE["offset"] - 1),
                abs(p["phase"] - TRUE["phase"]),  # true phase 0: absolute, radians
            ]
        )
    assert np.all(np.median(errs, axis=0) < 0.01)


@pytest.mark.parametrize("a", [1e-3, 0.37, 8.0, 1e4])
def test_sine_affine_retiming(a):
    t = np.linspace(0, 60e-6, 301)
    rng = np.random.default_rng(2)
    y = sine(t, **TRUE) + rng.normal(0, 0.05, t.size)
    r1 = fit_decaying_sine(t, y)
    r2 = fit_decaying_sine(a * t, y)
    assert r2.params["t2"] == pytest.approx(a * r1.params["t2"], rel=1e-8)
    assert r2.params["frequency"] == pytest.approx(r1.params["frequency"] / a, rel=1e-8)
    for k in ("amplitude", "offset"):
        assert r2.params[k] == pytest.approx(r1.params[k], rel=1e-8)
    assert abs(r2.params["phase"] - r1.params["phase"]) < 1e-8


def test_sine_short_span_flag_and_min_points():
    t = np.linspace(0, 1e-6, 20)
    r = fit_decaying_sine(t, sine(t, **TRUE))
    assert "frequency_unidentifiable" in r.flags
    with pytest.raises(ValueError):
        fit_decaying_sine(t[:7], sine(t[:7], **TRUE))


def test_sine_frequency_on_simulated_fringe():
    # fixed frame at N = 0 and selected sector 1: fringe at delta - chi
    sysm = make_system(0.0, q=1e15, t1=30e-6)
    delta = TWO_PI * 8e6
    t = np.linspace(0, 10e-6, 401)
    fr = run_sequence(sysm, ramsey_sequence(1, detuning=delta, frame_n=0, prep=("fock", 1)), t)
    r = fit_decaying_sine(t, fr.signal)
    assert r.params["frequency"] == pytest.approx(abs(delta - TWO_PI * 7e6) / TWO_PI, rel=1e-6)


# --- exponential --------------------------------------------------------------------


def test_exponential_round_trip():
    t = np.linspace(0, 100e-6, 201)
    r = fit_exponential(t, np.exp(-t / 20e-6))
    assert r.converged
    assert r.params["tau"] == pytest.approx(20e-6, rel=1e-8)
    assert r.params["amplitude"] == pytest.approx(1.0, rel=1e-8)
    assert abs(r.params["offset"]) < 1e-8
    assert r.residual_norm < 1e-8


def test_exponential_snr20_study():
    t = np.linspace(0, 100e-6, 2001)
    y0 = np.exp(-t / 20e-6)
    errs = []
    for seed in range(100):
        p = fit_exponential(t, y0 + np.random.default_rng(seed).normal(0, 0.05, t.size)).params
        errs.append([abs(p["amplitude"] - 1), abs(p["tau"] / 20e-6 - 1)])
    assert np.all(np.median(errs, axis=0) < 0.01)


def test_exponential_ringdown():
    kappa = TWO_PI * 8.01e9 / 1e6
    t = np.linspace(0, 5 / kappa, 101)
    p0 = simulate_cavity_ringdown(make_system(0.0, kappa=kappa), 1, t, ("fock", 1))
    r = fit_exponential(t, p0)
    assert r.params["tau"] == pytest.approx(1 / kappa, rel=0.02)


def test_exponential_constant_data():
    r = fit_exponential(np.linspace(0, 1e-5, 10), np.full(10, 0.3))
    assert not r.converged
    assert r.params["amplitude"] == pytest.approx(0.0, abs=1e-12)
    assert "tau_unidentifiable" in r.flags


@pytest.mark.parametrize("a", [1e-4, 3.0, 1e5])
def test_exponential_affine_retiming(a):
    t = np.linspace(0, 100e-6, 101)
    y = np.exp(-t / 20e-6) + np.random.default_rng(1).normal(0, 0.02, t.size)
    r1, r2 = fit_exponential(t, y), fit_exponential(a * t, y)
    assert r2.params["tau"] == pytest.approx(a * r1.params["tau"], rel=1e-8)
    assert r2.params["amplitude"] == pytest.approx(r1.params["amplitude"], rel=1e-8)


# --- FitResult ---------------------------------------------------------------------


def test_fit_result_serialization():
    t = np.linspace(0, 60e-6, 241)
    r = fit_decaying_sine(t, sine(t, **TRUE))
    doc = json.loads(r.to_json())
    assert doc["converged"] is True and doc["params"]["t2"] == pytest.approx(26e-6)
    assert len(r.csv_row()) == len(r.csv_header())
    assert r["t2"] == r.params["t2"] and r.stderr["t2"] >= 0
    with pytest.raises(ValueError):
        FitResult("exponential", {"amplitude": 1.0, "tau": -1.0, "offset": 0.0}, np.eye(3), 0.0, True)


# --- composite fit -----------------------------------------------------------------


def test_reequilibration_reduces_to_sine_without_photons():
    sysm = make_system(0.0, kappa=TWO_PI * 8.01e9 / 1e6, t1=30e-6, gamma_res=2e4)
    seq = ramsey_sequence(0, detuning=TWO_PI * 0.5e6)
    t = np.linspace(0, 60e-6, 241)
    y = run_sequence(sysm, seq, t).signal
    plain = fit_decaying_sine(t, y)
    comp = fit_ramsey_reequilibration(t, y, sysm, seq)
    assert "no_reequilibration_component" in comp.flags
    for k in ("amplitude", "t2", "frequency", "offset"):
        assert comp.params[k] == pytest.approx(plain.params[k], rel=1e-6)


def test_reequilibration_component_and_warning():
    kappa, n_bar = TWO_PI * 32e3, 0.5
    sysm = make_system(n_bar, kappa=kappa, t1=30e-6)
    seq = ramsey_sequence(0, detuning=TWO_PI * 1e6)
    t = np.linspace(0, 12e-6, 121)
    y = run_sequence(sysm, seq, t).signal
    r = fit_ramsey_reequilibration(t, y, sysm, seq)
    assert r.converged
    assert r.diagnostics["bump_rate"] == pytest.approx(kappa * (n_bar + 1), rel=1e-12)
    # N = 0 fringe decays at n_bar*kappa + 1/(2 T1)
    assert 1 / r.params["t2"] == pytest.approx(n_bar * kappa + 0.5 / 30e-6, rel=0.01)
    assert r.residual_norm < fit_decaying_sine(t, y).residual_norm
    with pytest.warns(UserWarning, match="n_bar"):
        r = fit_ramsey_reequilibration(t, y, sysm, seq, fit_n_bar=True)
    assert "n_bar_contrast_correlated" in r.flags
    assert r.diagnostics["n_bar"] == pytest.approx(n_bar, rel=1e-3)


# --- populations -------------------------------------------------------------------

POWERS = np.linspace(0, 1, 12)


def synthetic(seed, V=0.8, S=2.0, floor=0.02, noise=0.05, levels=8):
    clean = V * thermal_probs(floor + S * POWERS, levels)
    return clean * (1 + noise * np.random.default_rng(seed).standard_normal(clean.shape))


def test_populations_recover_scales():
    est = estimate_populations(synthetic(0), POWERS)
    assert est.scale_voltage == pytest.approx(0.8, rel=0.02)
    assert est.scale_power == pytest.approx(2.0, rel=0.02)
    assert est.thermal_ok
    assert np.all(est.probs >= 0) and np.all(est.probs.sum(axis=1) <= 1 + 1e-6)


def test_populations_zero_drive_row_is_vacuum_plus_floor():
    est = estimate_populations(synthetic(1, noise=0.0), POWERS)
    assert est.probs[0, 0] == pytest.approx(1 / 1.02, rel=1e-6)
    assert est.n_bar[0] == pytest.approx(0.02, rel=1e-6)


def test_populations_single_amplitude():
    est = estimate_populations([[0.8]], scale_voltage=0.8)
    assert est.probs[0, 0] == pytest.approx(1.0)
    assert est.n_bar[0] == pytest.approx(0.0, abs=1e-6)


def test_populations_flag_non_thermal():
    amps = np.array([[0.1, 0.7, 0.05, 0.0], [0.15, 0.6, 0.1, 0.0]])
    est = estimate_populations(amps)
    assert not est.thermal_ok and est.chi2_red > 4.0


def test_populations_reject_negative():
    with pytest.raises(ValueError):
        estimate_populations([[0.5, -0.1]])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(0.0, 2.0), min_size=4, max_size=4), min_size=1, max_size=5))
def test_populations_are_sub_distributions(rows):
    amps = np.array(rows)
    if amps[:, 0].max() == 0:
        amps[0, 0] = 0.5
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = estimate_populations(amps)
    p = est.probs
    if np.all(np.isfinite(p)):
        assert np.all(p >= 0) and np.all(p.sum(axis=1) <= 1 + 1e-6)
