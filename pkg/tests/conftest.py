import math

import pytest

from eocavity.dynamics import DEFAULT_TAU_SW, TuningActuator
from eocavity.units import CavityParams, EmitterParams, freq_from_wavelength

F0 = freq_from_wavelength(980e-9)


@pytest.fixture
def emitter():
    return EmitterParams(tau0=430e-6, b0=0.25, gamma_h=41e6, inhom_fwhm=64e9, diffusion_fwhm=206e6)


@pytest.fixture
def cavity_a():
    return CavityParams(F0, 79_833, 50.0)


@pytest.fixture
def cavity_b():
    return CavityParams(F0, 64_065, 50.0)


@pytest.fixture
def actuator():
    return TuningActuator(270e6, 300.0, DEFAULT_TAU_SW)


@pytest.fixture
def ideal_actuator():
    return TuningActuator(270e6, 300.0, 0.0)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance verdict: ``acceptance(number, ok, detail)``."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
