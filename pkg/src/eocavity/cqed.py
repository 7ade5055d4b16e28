"""Steady-state cavity QED in the bad-cavity limit.

The cavity is adiabatically eliminated, so the emitter sees an enhanced
decay rate ``gamma0 * (1 + C)`` with cooperativity ``C = 4 g^2 / (kappa gamma0)``.
"""
from __future__ import annotations

import math

import numpy as np

from .units import CqedParams, DomainError, gamma_from_lifetime

__all__ = [
    "cooperativity",
    "coupling_from_lifetimes",
    "detuned_cooperativity",
    "total_decay_rate",
    "beta_factor",
    "enhanced_branching",
    "theoretical_purcell",
]


def cooperativity(p: CqedParams) -> float:
    """On-resonance cooperativity ``4 g^2 / (kappa * gamma0)``."""
    return 4.0 * p.g**2 / (p.kappa * p.gamma0)


def coupling_from_lifetimes(tau0: float, tau_c: float, kappa: float) -> float:
    """Coupling rate ``g`` (Hz) that explains a measured lifetime shortening.

    Inverts ``C = tau0/tau_c - 1`` through ``g = sqrt(C * kappa * gamma0) / 2``.
    """
    if not (tau0 > 0 and tau_c > 0 and kappa > 0):
        raise DomainError("lifetimes and kappa must be > 0")
    if tau_c >= tau0:
        raise DomainError(f"tau_c ({tau_c}) must be shorter than tau0 ({tau0})")
    c = tau0 / tau_c - 1.0
    return math.sqrt(c * kappa * gamma_from_lifetime(tau0)) / 2.0


def detuned_cooperativity(c0, delta, kappa):
    """Cooperativity at cavity-emitter detuning ``delta`` (Lorentzian filter of FWHM ``kappa``).

    Works elementwise on arrays.
    """
    if np.any(np.asarray(kappa) <= 0):
        raise DomainError("kappa must be > 0")
    x = 2.0 * np.asarray(delta, dtype=float) / kappa
    out = np.asarray(c0, dtype=float) / (1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def total_decay_rate(gamma0, c_delta):
    """Enhanced decay rate ``gamma0 * (1 + C)`` (ordinary frequency, Hz)."""
    out = np.asarray(gamma0, dtype=float) * (1.0 + np.asarray(c_delta, dtype=float))
    return float(out) if out.ndim == 0 else out


def beta_factor(c):
    """Fraction ``C / (1 + C)`` of emission funnelled into the cavity mode."""
    c = np.asarray(c, dtype=float)
    if np.any(c < 0):
        raise DomainError("cooperativity must be >= 0")
    out = c / (1.0 + c)
    return float(out) if out.ndim == 0 else out


def enhanced_branching(b0, c):
    """Zero-phonon-line branching ratio with the cavity, ``(b0 + C) / (1 + C)``."""
    if not 0.0 <= b0 <= 1.0:
        raise DomainError(f"b0 must lie in [0, 1], got {b0!r}")
    if c < 0:
        raise DomainError("cooperativity must be >= 0")
    return (b0 + c) / (1.0 + c)


def theoretical_purcell(q: float, v_mode: float, orientation: float = 1.0) -> float:
    """Textbook Purcell factor ``3 Q / (4 pi^2 V)`` for ``V`` in ``(lambda/n)^3``.

    ``orientation`` is a dipole-alignment factor in [0, 1] multiplying the
    ideal value; 1 means the dipole is parallel to the cavity field.
    """
    if q <= 0 or v_mode <= 0:
        raise DomainError("q and v_mode must be > 0")
    if not 0.0 <= orientation <= 1.0:
        raise DomainError(f"orientation must lie in [0, 1], got {orientation!r}")
    return orientation * 3.0 * q / (4.0 * math.pi**2 * v_mode)
