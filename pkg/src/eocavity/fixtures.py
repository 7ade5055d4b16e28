"""Synthetic datasets with planted parameters, used by tests and examples."""
from __future__ import annotations

from importlib import resources

import numpy as np

from .dynamics import Subpopulation, TuningActuator, VoltageWaveform, detuning_trajectory, simulate_decay
from .io import csv_text, trace_table
from .units import CavityParams, EmitterParams, freq_from_wavelength

__all__ = ["DOUBLE_DECAY_LIFETIMES", "double_decay_trace", "double_decay_csv_text", "shipped_decay_path"]

#: the two cavity-shortened lifetimes planted in the decay fixture, s
DOUBLE_DECAY_LIFETIMES = (51e-6, 182e-6)
DOUBLE_DECAY_SEED = 2021


def double_decay_trace(noise=0.01, seed=DOUBLE_DECAY_SEED, duration=2e-3, dt=0.2e-6):
    """Equal-weight two-population decay with lifetimes 51 us and 182 us.

    Cooperativities are back-solved as ``tau0/tau - 1``. Gaussian noise with
    standard deviation ``noise * max(flux)`` is added to ``flux_cavity``.
    """
    emitter = EmitterParams(tau0=430e-6)
    cav = CavityParams(freq_from_wavelength(980e-9), 79833)
    pops = [Subpopulation(0.5, emitter.tau0 / tau - 1.0) for tau in DOUBLE_DECAY_LIFETIMES]
    traj = detuning_trajectory(VoltageWaveform.constant(0.0, duration), TuningActuator(), dt)
    tr = simulate_decay(pops, traj, emitter, cav.kappa)
    if noise:
        rng = np.random.default_rng(seed)
        tr.flux_cavity = tr.flux_cavity + rng.normal(0.0, noise * tr.flux_cavity.max(), tr.t.size)
    return tr


def double_decay_csv_text():
    cols, data = trace_table(double_decay_trace())
    return csv_text(cols, data, fixture="double-exponential", seed=DOUBLE_DECAY_SEED)


def shipped_decay_path():
    return resources.files("eocavity.data").joinpath("decay_double.csv")
