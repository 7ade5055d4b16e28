"""Physical parameter types and unit conversions.

Every public frequency, linewidth and rate is an *ordinary* frequency in Hz.
A quantity quoted as ``2*pi x 370 Hz`` is stored as ``370.0``; factors of
``2*pi`` only appear inside the dynamics integrator.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

__all__ = [
    "C_LIGHT",
    "DomainError",
    "ValidationError",
    "CavityParams",
    "EmitterParams",
    "CqedParams",
    "freq_from_wavelength",
    "gamma_from_lifetime",
    "lifetime_from_gamma",
    "linewidth_from_q",
]

#: speed of light in vacuum, m/s (exact)
C_LIGHT = 299_792_458.0

TWO_PI = 2.0 * math.pi


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ValidationError(ValueError):
    """Inputs that are well-formed numbers but violate a usage contract."""


def _require_positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")


def freq_from_wavelength(wavelength):
    """Vacuum frequency ``c / wavelength`` in Hz for a wavelength in metres."""
    _require_positive("wavelength", wavelength)
    return C_LIGHT / wavelength


def gamma_from_lifetime(tau):
    """Ordinary-frequency decay rate ``1/(2*pi*tau)`` in Hz.

    >>> round(gamma_from_lifetime(430e-6), 1)
    370.1
    """
    _require_positive("lifetime", tau)
    return 1.0 / (TWO_PI * tau)


def lifetime_from_gamma(gamma):
    """Inverse of :func:`gamma_from_lifetime`."""
    _require_positive("decay rate", gamma)
    return 1.0 / (TWO_PI * gamma)


def linewidth_from_q(f0, q):
    """Cavity FWHM linewidth ``f0 / q`` in Hz."""
    _require_positive("f0", f0)
    _require_positive("q", q)
    return f0 / q


@dataclass(frozen=True)
class CavityParams:
    """Optical whispering-gallery mode of a microdisk.

    Parameters
    ----------
    f0 : float
        Zero-bias resonance frequency, Hz.
    q_factor : float
        Loaded quality factor.
    mode_volume : float
        Mode volume in units of ``(lambda/n)**3``.
    """

    f0: float
    q_factor: float
    mode_volume: float = 50.0

    def __post_init__(self):
        _require_positive("f0", self.f0)
        _require_positive("q_factor", self.q_factor)
        _require_positive("mode_volume", self.mode_volume)

    @property
    def kappa(self):
        """Cavity linewidth (FWHM), Hz."""
        return linewidth_from_q(self.f0, self.q_factor)


@dataclass(frozen=True)
class EmitterParams:
    """Two-level emitter with a zero-phonon-line branching ratio.

    Parameters
    ----------
    tau0 : float
        Natural (bulk) excited-state lifetime, s.
    b0 : float
        Bare branching ratio into the zero-phonon line.
    lambda0 : float
        Transition wavelength, m.
    gamma_h : float
        Homogeneous linewidth FWHM, Hz.
    inhom_fwhm : float
        Inhomogeneous linewidth FWHM, Hz.
    diffusion_fwhm : float
        Additional broadening from spectral diffusion, Hz.
    """

    tau0: float
    b0: float = 0.25
    lambda0: float = 980e-9
    gamma_h: float = 41e6
    inhom_fwhm: float = 64e9
    diffusion_fwhm: float = 0.0

    def __post_init__(self):
        _require_positive("tau0", self.tau0)
        _require_positive("lambda0", self.lambda0)
        if not 0.0 <= self.b0 <= 1.0:
            raise DomainError(f"b0 must lie in [0, 1], got {self.b0!r}")
        for name in ("gamma_h", "inhom_fwhm", "diffusion_fwhm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise DomainError(f"{name} must be finite and >= 0, got {value!r}")

    @property
    def gamma0(self):
        return gamma_from_lifetime(self.tau0)

    @property
    def single_ion_fwhm(self):
        """Effective Lorentzian width of one ion including spectral diffusion."""
        return self.gamma_h + self.diffusion_fwhm


@dataclass(frozen=True)
class CqedParams:
    """Coupling ``g``, cavity linewidth ``kappa`` and emitter decay ``gamma0``, all Hz.

    The model assumes the bad-cavity ordering ``kappa >> g >> gamma0``; a
    :class:`RuntimeWarning` is issued when it is violated.
    """

    g: float
    kappa: float
    gamma0: float

    def __post_init__(self):
        if not (math.isfinite(self.g) and self.g >= 0):
            raise DomainError(f"g must be finite and >= 0, got {self.g!r}")
        _require_positive("kappa", self.kappa)
        _require_positive("gamma0", self.gamma0)
        if self.g > 0 and not (self.kappa > self.g > self.gamma0):
            warnings.warn(
                "parameters leave the bad-cavity regime (kappa >> g >> gamma0); "
                "rate-equation results may be inaccurate",
                RuntimeWarning,
                stacklevel=3,
            )
