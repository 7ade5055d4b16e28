import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eocavity.dynamics import TuningActuator, VoltageWaveform, filtered_voltage, transmission_spectrum
from eocavity.fitting import (
    detect_peaks,
    estimate_switching_time,
    exp_decay,
    fit_exponential,
    fit_gaussian,
    fit_lorentzian,
    gaussian,
    lorentzian,
)
from eocavity.series import Spectrum
from eocavity.spectra import IonEnsemble, SweepPlan, synth_ple
from eocavity.units import CavityParams, EmitterParams, ValidationError

MHZ, GHZ = 1e6, 1e9


def _central_diff(model, x, p, h=6e-6):
    p = np.asarray(p, dtype=float)
    J = np.empty((x.size, p.size))
    for k in range(p.size):
        step = h * max(abs(p[k]), 1.0)
        up, dn = p.copy(), p.copy()
        up[k] += step
        dn[k] -= step
        J[:, k] = (model(x, up) - model(x, dn)) / (2 * step)
    return J


def _assert_jacobian(model, x, p):
    y, J = model(x, np.asarray(p), jac=True)
    fd = _central_diff(model, x, p)
    # relative to the column size, floored at the function scale so that
    # near-zero columns are not compared against finite-difference rounding
    scale = np.abs(J).max(axis=0) + 1e-4 * np.abs(y).max()
    assert np.all(np.abs(J - fd).max(axis=0) <= 1e-6 * scale)


finite = dict(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.05, 1.0), st.floats(-5, 5), st.floats(-2, 2))
def test_lineshape_jacobians(c, w, a, o):
    x = np.linspace(-1, 1, 101)
    _assert_jacobian(lorentzian, x, [c, w, a, o])
    _assert_jacobian(gaussian, x, [c, w, a, o])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(0.05, 2.0), st.floats(-3, 3), st.floats(-1, 1))
def test_exponential_jacobian(t1, a1, t2, a2, o):
    x = np.linspace(0, 1, 101)
    _assert_jacobian(exp_decay, x, [t1, a1, o])
    _assert_jacobian(exp_decay, x, [t1, a1, t2, a2, o])


def _spec(model, p, f):
    return Spectrum(f, model(f, np.asarray(p, dtype=float)))


class TestLineshapeFits:
    def test_exact_lorentzian(self):
        f = np.arange(-2000, 2001, 10.0) * MHZ
        res = fit_lorentzian(_spec(lorentzian, [130 * MHZ, 215 * MHZ, 40.0, 2.0], f))
        assert res.converged
        assert res["fwhm"] == pytest.approx(215 * MHZ, rel=1e-3)
        assert res["center"] == pytest.approx(130 * MHZ, abs=1e-3 * 215 * MHZ)
        assert res["amplitude"] == pytest.approx(40.0, rel=1e-3)

    def test_exact_gaussian(self):
        f = np.linspace(-200, 200, 801) * GHZ
        res = fit_gaussian(_spec(gaussian, [0.0, 64 * GHZ, 1.0, 0.0], f))
        assert res.converged
        assert res["fwhm"] == pytest.approx(64 * GHZ, rel=1e-3)

    def test_transmission_dip_gives_q(self):
        cav = CavityParams(305.91e12, 244_730)
        f = np.arange(-5, 5.0001, 0.01) * GHZ
        sp = transmission_spectrum(cav, 0.0, TuningActuator(), f, depth=0.8)
        res = fit_lorentzian(sp)
        assert res["amplitude"] < 0
        assert res["fwhm"] == pytest.approx(1.250 * GHZ, rel=1e-3)
        assert cav.f0 / res["fwhm"] == pytest.approx(244_730, rel=0.01)

    def test_poisson_single_ion(self):
        e = EmitterParams(tau0=430e-6, gamma_h=215 * MHZ, diffusion_fwhm=0.0)
        cav = CavityParams(305.91e12, 64_065)
        ens = IonEnsemble.planted([0.0], 5.9, e.single_ion_fwhm)
        plan = SweepPlan(setpoints=[0.0], scan=2 * GHZ, step=10 * MHZ, dwell=1.0)
        sp = synth_ple(ens, cav, e, plan, noise=True, seed=3)[0]
        res = fit_lorentzian(sp, poisson=True)
        assert abs(res["fwhm"] - 215 * MHZ) <= 22 * MHZ
        assert 0 < res.stderr["fwhm"] < 60 * MHZ

    def test_constant_spectrum_is_degenerate(self):
        f = np.linspace(-1, 1, 50) * GHZ
        res = fit_gaussian(Spectrum(f, np.full(50, 7.0)))
        assert (not res.converged) or abs(res["amplitude"]) < 1e-6
        assert "zero_amplitude" in res.flags or not res.converged

    def test_too_few_points(self):
        with pytest.raises(ValidationError):
            fit_lorentzian(Spectrum(np.arange(5.0), np.ones(5)))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-50, 50), st.sampled_from(["lorentzian", "gaussian"]))
    def test_translation_covariance(self, shift_ghz, name):
        model, fit = (lorentzian, fit_lorentzian) if name == "lorentzian" else (gaussian, fit_gaussian)
        f = np.arange(-300, 301) * 5 * MHZ
        y = model(f, np.array([40 * MHZ, 250 * MHZ, 10.0, 1.0]))
        y = y + 0.05 * np.sin(f / (37 * MHZ))  # deterministic structure so the fit is not exact
        base = fit(Spectrum(f, y))
        moved = fit(Spectrum(f + shift_ghz * GHZ, y))
        assert moved["center"] - base["center"] == pytest.approx(shift_ghz * GHZ, abs=1e-6 * 250 * MHZ)
        assert moved["fwhm"] == pytest.approx(base["fwhm"], rel=1e-9)

    def test_consistency_with_sample_size(self):
        """RMS error of the fitted centre shrinks as 1/sqrt(N)."""
        rng = np.random.default_rng(123)
        rms = {}
        for n in (100, 10_000):
            f = np.linspace(-1, 1, n) * GHZ
            clean = lorentzian(f, np.array([0.0, 200 * MHZ, 1.0, 0.0]))
            errs = [fit_lorentzian(Spectrum(f, 1.0 + clean + rng.normal(0, 0.05, n)))["center"] for _ in range(60)]
            rms[n] = math.sqrt(np.mean(np.square(errs)))
        assert rms[100] / rms[10_000] == pytest.approx(10.0, rel=0.35)

    def test_poisson_stderr_calibrated(self):
        rng = np.random.default_rng(9)
        f = np.arange(-1000, 1001, 20.0) * MHZ
        mean = lorentzian(f, np.array([0.0, 215 * MHZ, 50.0, 2.0]))
        fits = [fit_lorentzian(Spectrum(f, rng.poisson(mean).astype(float)), poisson=True) for _ in range(200)]
        spread = np.std([r["fwhm"] for r in fits])
        reported = np.median([r.stderr["fwhm"] for r in fits])
        assert reported == pytest.approx(spread, rel=0.25)


class TestExponentialFits:
    def test_single_exact(self):
        t = np.linspace(0, 2e-3, 2001)
        res = fit_exponential(t, 3.0 * np.exp(-t / 430e-6), 1)
        assert res.converged
        assert res["tau_1"] == pytest.approx(430e-6, rel=1e-3)
        assert res["amp_1"] == pytest.approx(3.0, rel=1e-3)

    def test_double_with_noise(self):
        rng = np.random.default_rng(0)
        t = np.linspace(0, 2e-3, 4001)
        y = 0.5 * np.exp(-t / 51e-6) + 0.5 * np.exp(-t / 182e-6)
        res = fit_exponential(t, y + rng.normal(0, 0.01, t.size), 2)
        assert res["tau_1"] == pytest.approx(51e-6, abs=4e-6)
        assert res["tau_2"] == pytest.approx(182e-6, abs=40e-6)
        assert res["tau_1"] <= res["tau_2"]
        assert res["weight_1"] >= 0 and res["weight_2"] >= 0

    def test_two_components_on_single_exponential(self):
        t = np.linspace(0, 2e-3, 2001)
        res = fit_exponential(t, np.exp(-t / 430e-6), 2)
        assert "degenerate" in res.flags or min(res["weight_1"], res["weight_2"]) < 1e-3

    def test_time_origin(self):
        t = np.linspace(100e-6, 1e-3, 901)
        res = fit_exponential(t, 2.0 * np.exp(-t / 80e-6), 1)
        assert res["amp_1"] == pytest.approx(2.0, rel=1e-6)

    def test_short_window_flag(self):
        t = np.linspace(0, 500e-6, 501)
        res = fit_exponential(t, np.exp(-t / 430e-6), 1)
        assert "window_shorter_than_3_lifetimes" in res.flags

    def test_invalid(self):
        with pytest.raises(ValidationError):
            fit_exponential(np.arange(10.0), np.ones(10), 3)
        with pytest.raises(ValidationError):
            fit_exponential(np.arange(5.0), np.ones(5), 2)


class TestPeaks:
    def test_flat(self):
        assert detect_peaks(Spectrum(np.arange(100.0), np.full(100, 3.0))) == []

    def test_merge_within_separation(self):
        f = np.arange(-3000, 3001, 10.0) * MHZ
        y = lorentzian(f, np.array([-150 * MHZ, 50 * MHZ, 1.0, 0.0])) + lorentzian(
            f, np.array([150 * MHZ, 50 * MHZ, 0.8, 0.0])
        )
        assert len(detect_peaks(Spectrum(f, y))) == 2
        merged = detect_peaks(Spectrum(f, y), min_separation=400 * MHZ)
        assert len(merged) == 1 and merged[0]["center"] == pytest.approx(-150 * MHZ, abs=10 * MHZ)

    def test_planted_24(self):
        rng = np.random.default_rng(42)
        centres = np.sort(rng.choice(np.arange(-45, 45), 24, replace=False)) * 400 * MHZ + 137 * GHZ
        e = EmitterParams(tau0=430e-6, gamma_h=41 * MHZ, diffusion_fwhm=206 * MHZ)
        cav = CavityParams(305.91e12, 64_065)
        ens = IonEnsemble.planted(centres, 5.9, e.single_ion_fwhm)
        plan = SweepPlan(setpoints=[137 * GHZ], scan=40 * GHZ, step=10 * MHZ, zero_bias_offset=137 * GHZ)
        sp = synth_ple(ens, cav, e, plan)[0]
        peaks = detect_peaks(sp, min_prominence=1e-4, min_separation=e.single_ion_fwhm)
        assert len(peaks) == 24
        assert np.all(np.abs(np.array([p["center"] for p in peaks]) - centres) <= 10 * MHZ)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-3, 1e3), st.floats(-100, 100))
    def test_affine_invariance(self, scale, shift):
        f = np.arange(0, 400) * 25 * MHZ
        rng = np.random.default_rng(1)
        y = sum(lorentzian(f, np.array([c, 200 * MHZ, a, 0.0])) for c, a in zip(rng.uniform(0, 10 * GHZ, 8), rng.uniform(0.2, 1, 8)))
        ref = detect_peaks(Spectrum(f, y), 0.05, 250 * MHZ)
        out = detect_peaks(Spectrum(f, y * scale + shift + 200), 0.05, 250 * MHZ)
        assert [p["center"] for p in out] == [p["center"] for p in ref]

    def test_ordered_by_frequency(self):
        f = np.arange(0, 200.0)
        y = np.zeros(200)
        y[[150, 20, 90]] = [1.0, 3.0, 2.0]
        assert [p["center"] for p in detect_peaks(Spectrum(f, y))] == [20.0, 90.0, 150.0]


class TestSwitchingTime:
    def _step(self, tau, dt=0.01e-6):
        t = np.arange(0, 80e-6, dt)
        w = VoltageWaveform.step(0.0, 200.0, 10e-6, 80e-6)
        return t, filtered_voltage(w, tau, t)

    def test_first_order_five_us(self):
        dt = 0.01e-6
        t, v = self._step(5e-6 / math.log(9), dt)
        assert estimate_switching_time(t, v) == pytest.approx(5.00e-6, abs=dt)

    def test_double_tau(self):
        t, v = self._step(4.552e-6)
        assert estimate_switching_time(t, v) == pytest.approx(10.0e-6, rel=1e-3)

    def test_instantaneous_step(self):
        dt = 0.1e-6
        t, v = self._step(0.0, dt)
        assert 0 < estimate_switching_time(t, v) <= dt

    def test_falling_edge(self):
        t, v = self._step(5e-6 / math.log(9))
        assert estimate_switching_time(t, 200 - v) == pytest.approx(5e-6, abs=1e-8)

    def test_errors(self):
        t = np.linspace(0, 1, 101)
        with pytest.raises(ValidationError):
            estimate_switching_time(t, np.ones_like(t))
        with pytest.raises(ValidationError):
            estimate_switching_time(t, np.sin(6 * t))
