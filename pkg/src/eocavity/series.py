"""Sampled time and frequency series shared by the simulators and fitters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .units import ValidationError

__all__ = ["Trace", "Spectrum", "check_uniform"]


def check_uniform(x, name="grid", rtol=1e-6):
    """Return the spacing of a uniform, strictly increasing grid or raise."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError(f"{name} needs at least two samples")
    d = np.diff(x)
    step = (x[-1] - x[0]) / (x.size - 1)
    if step <= 0 or np.max(np.abs(d - step)) > rtol * abs(step):
        raise ValidationError(f"{name} must be uniform and strictly increasing")
    return step


@dataclass
class Trace:
    """Emitter dynamics on a uniform time grid.

    ``populations`` has one row per sub-population; ``population`` is the
    weight-averaged total. Fluxes are photons/s into the cavity/waveguide
    channel and into free space.
    """

    t: np.ndarray
    delta: np.ndarray
    populations: np.ndarray
    weights: np.ndarray
    flux_cavity: np.ndarray
    flux_free: np.ndarray

    @property
    def population(self):
        return self.weights @ self.populations

    @property
    def dt(self):
        return self.t[1] - self.t[0]

    def channel(self, name):
        """Look up a 1-D signal by name (``population``, ``delta``, ``flux_cavity``, ...)."""
        if name in ("population", "delta", "flux_cavity", "flux_free"):
            return np.asarray(getattr(self, name))
        if name == "flux_total":
            return self.flux_cavity + self.flux_free
        raise KeyError(name)


@dataclass
class Spectrum:
    """Values on a uniform frequency grid.

    ``f`` is in Hz (an offset from a stated reference). ``kind`` says what
    ``counts`` holds: ``"rate"`` (expected photons/s), ``"counts"`` (integer
    detections per bin of ``dwell`` seconds), or a normalized quantity such
    as ``"transmission"``, ``"absorption"`` or ``"histogram"``.
    """

    f: np.ndarray
    counts: np.ndarray
    kind: str = "rate"
    dwell: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.f.shape != self.counts.shape:
            raise ValidationError("frequency grid and values differ in length")
        if self.f.size >= 2:
            check_uniform(self.f, "frequency grid")
        if np.any(self.counts < 0):
            raise ValidationError("spectrum values must be >= 0")

    @property
    def step(self):
        return self.f[1] - self.f[0]

    def shifted(self, df):
        return Spectrum(self.f + df, self.counts.copy(), self.kind, self.dwell, dict(self.meta))
