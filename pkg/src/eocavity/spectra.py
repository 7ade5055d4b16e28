"""Monte Carlo synthesis of PLE and spectral-hole-burning spectra.

Ions are scattered over the inhomogeneous line and through the cavity mode;
each contributes a Lorentzian excitation line whose height is set by its
(detuning-attenuated) Purcell-enhanced emission into the cavity channel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .budget import REFERENCE_CHAIN, DetectionChain, saturated_emission_rate
from .cqed import detuned_cooperativity
from .dynamics import TuningActuator
from .fitting import detect_peaks
from .series import Spectrum
from .units import CavityParams, EmitterParams, ValidationError

__all__ = [
    "IonEnsemble",
    "SweepPlan",
    "inhomogeneous_profile",
    "sample_ensemble",
    "synth_ple",
    "stitch_sweep",
    "synth_hole_burning",
    "ensemble_histogram",
    "count_resolved_peaks_expectation",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def inhomogeneous_profile(offset, e: EmitterParams, shape="gaussian"):
    """Normalized density (1/Hz) of transition frequencies at ``offset`` from line centre."""
    fwhm = e.inhom_fwhm
    if not fwhm > 0:
        raise ValidationError("inhomogeneous FWHM must be > 0")
    offset = np.asarray(offset, dtype=float)
    if shape == "gaussian":
        out = stats.norm.pdf(offset, scale=fwhm * FWHM_TO_SIGMA)
    elif shape == "lorentzian":
        out = stats.cauchy.pdf(offset, scale=fwhm / 2.0)
    else:
        raise ValidationError(f"unknown profile shape {shape!r}")
    return float(out) if out.ndim == 0 else out


@dataclass
class IonEnsemble:
    """Sampled ions: transition offset from the inhomogeneous centre (Hz),
    on-resonance cooperativity and single-ion FWHM (Hz)."""

    offsets: np.ndarray
    c0: np.ndarray
    gamma: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=float)
        self.c0 = np.asarray(self.c0, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if not (self.offsets.shape == self.c0.shape == self.gamma.shape):
            raise ValidationError("ion arrays must have equal length")
        if np.any(self.gamma <= 0):
            raise ValidationError("single-ion linewidths must be > 0")
        if np.any(self.c0 < 0):
            raise ValidationError("cooperativities must be >= 0")

    def __len__(self):
        return self.offsets.size

    def union(self, other: IonEnsemble):
        return IonEnsemble(
            np.concatenate([self.offsets, other.offsets]),
            np.concatenate([self.c0, other.c0]),
            np.concatenate([self.gamma, other.gamma]),
        )

    @classmethod
    def planted(cls, offsets, c0, gamma):
        offsets = np.asarray(offsets, dtype=float)
        return cls(offsets, np.broadcast_to(c0, offsets.shape).copy(), np.broadcast_to(gamma, offsets.shape).copy())


def sample_ensemble(
    n_total,
    window,
    e: EmitterParams,
    c_max,
    seed,
    coupling="position",
    shape="gaussian",
):
    """Draw ``n_total`` ions with transition offsets inside ``window = (lo, hi)`` Hz.

    Offsets follow the inhomogeneous profile truncated to the window.
    ``coupling="position"`` draws a uniform mode-position factor ``u`` and
    sets ``c0 = u**2 * c_max``; ``coupling="fixed"`` gives every ion
    ``c_max``. Offsets and couplings use independent child streams of
    ``seed``, so the result is bit-reproducible.
    """
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValidationError("window must be non-empty")
    if n_total < 0:
        raise ValidationError("n_total must be >= 0")
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    ss_off, ss_cpl = root.spawn(2)
    rng_off = np.random.default_rng(ss_off)
    rng_cpl = np.random.default_rng(ss_cpl)
    if shape == "gaussian":
        sigma = e.inhom_fwhm * FWHM_TO_SIGMA
        dist = stats.truncnorm(lo / sigma, hi / sigma, scale=sigma)
        offsets = dist.rvs(size=n_total, random_state=rng_off) if n_total else np.empty(0)
    elif shape == "lorentzian":
        half = e.inhom_fwhm / 2.0
        a, b = np.arctan(lo / half), np.arctan(hi / half)
        offsets = half * np.tan(rng_off.uniform(a, b, size=n_total))
    else:
        raise ValidationError(f"unknown profile shape {shape!r}")
    if coupling == "position":
        c0 = rng_cpl.uniform(0.0, 1.0, size=n_total) ** 2 * c_max
    elif coupling == "fixed":
        c0 = np.full(n_total, float(c_max))
    else:
        raise ValidationError(f"unknown coupling model {coupling!r}")
    gamma = np.full(n_total, e.single_ion_fwhm)
    return IonEnsemble(np.asarray(offsets, dtype=float), c0, gamma, seed)


@dataclass(frozen=True)
class SweepPlan:
    """Cavity set-points and the laser scan performed at each.

    ``setpoints`` are cavity resonance offsets from the inhomogeneous centre
    (Hz); around each one the laser covers ``scan`` Hz in steps of ``step``
    with ``dwell`` seconds per point. Laser frequencies sit on the lattice
    ``k * step`` so neighbouring set-points can be stitched. ``zero_bias_offset``
    is where the unbiased cavity sits relative to the inhomogeneous centre.
    """

    setpoints: tuple
    scan: float
    step: float
    dwell: float = 1.0
    power: float = 22e-9
    p_sat: float = 22e-9
    zero_bias_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "setpoints", tuple(float(s) for s in self.setpoints))
        if not self.setpoints:
            raise ValidationError("plan needs at least one cavity set-point")
        if not (self.step > 0 and self.dwell > 0 and self.scan > 0):
            raise ValidationError("scan, step and dwell must be > 0")
        if self.power < 0 or not self.p_sat > 0:
            raise ValidationError("power must be >= 0 and p_sat > 0")

    @property
    def saturation(self):
        """Saturation parameter ``s = power / p_sat``."""
        return self.power / self.p_sat

    def laser_grid(self, setpoint):
        k0 = math.floor((setpoint - self.scan / 2) / self.step + 1e-9)
        k1 = math.ceil((setpoint + self.scan / 2) / self.step - 1e-9)
        return np.arange(k0, k1 + 1) * self.step

    def validate(self, actuator: TuningActuator):
        for sp in self.setpoints:
            if abs(sp - self.zero_bias_offset) > actuator.tuning_range * (1 + 1e-12):
                raise ValidationError(
                    f"set-point {sp / 1e9:g} GHz is out of the actuator's reach "
                    f"({actuator.tuning_range / 1e9:g} GHz around {self.zero_bias_offset / 1e9:g} GHz)"
                )


def _ple_rate(freqs, ens, setpoint, kappa, e, chain, saturation, chunk=2048):
    rate = np.zeros_like(freqs)
    if len(ens) == 0:
        return rate
    c_eff = detuned_cooperativity(ens.c0, ens.offsets - setpoint, kappa)
    height = np.atleast_1d(saturated_emission_rate(c_eff, e.tau0))
    height = height * (saturation / (1.0 + saturation)) * chain.total
    for s in range(0, len(ens), chunk):
        sl = slice(s, s + chunk)
        u = 2.0 * (freqs[None, :] - ens.offsets[sl, None]) / ens.gamma[sl, None]
        rate += (height[sl, None] / (1.0 + u * u)).sum(axis=0)
    return rate


def synth_ple(
    ens: IonEnsemble,
    cav: CavityParams,
    e: EmitterParams,
    plan: SweepPlan,
    chain: DetectionChain = REFERENCE_CHAIN,
    noise=False,
    seed=None,
    dark_rate=0.0,
    actuator: TuningActuator | None = None,
):
    """PLE spectra, one per cavity set-point of ``plan``.

    Each ion adds a Lorentzian of its own FWHM whose peak is the saturated
    cavity-channel emission ``beta/(2 tau_c)`` (cooperativity attenuated by
    the ion-cavity detuning), scaled by ``s/(1+s)`` and the detection chain.
    With ``noise`` the counts per point are Poisson draws with mean
    ``rate * dwell``; set-point ``k`` uses child stream ``k`` of ``seed``
    (defaulting to the ensemble seed), so results do not depend on the order
    or parallelism with which set-points are evaluated.
    """
    plan.validate(actuator or TuningActuator())
    if dark_rate < 0:
        raise ValidationError("dark_rate must be >= 0")
    if noise:
        seed = ens.seed if seed is None else seed
        if seed is None:
            raise ValidationError("noisy synthesis needs a seed")
        streams = np.random.SeedSequence(seed).spawn(len(plan.setpoints))
    out = []
    for k, sp in enumerate(plan.setpoints):
        freqs = plan.laser_grid(sp)
        rate = _ple_rate(freqs, ens, sp, cav.kappa, e, chain, plan.saturation) + dark_rate
        meta = {"setpoint_hz": sp}
        if noise:
            counts = np.random.default_rng(streams[k]).poisson(rate * plan.dwell)
            out.append(Spectrum(freqs, counts, kind="counts", dwell=plan.dwell, meta=meta))
        else:
            out.append(Spectrum(freqs, rate, kind="rate", dwell=plan.dwell, meta=meta))
    return out


def stitch_sweep(spectra):
    """Merge set-point spectra on a shared lattice; each frequency is taken
    from the spectrum whose set-point is nearest."""
    step = spectra[0].step
    for s in spectra:
        if not math.isclose(s.step, step, rel_tol=1e-9):
            raise ValidationError("spectra use different steps")
    keys = np.unique(np.concatenate([np.rint(s.f / step).astype(np.int64) for s in spectra]))
    f = keys * step
    values = np.zeros(f.size)
    best = np.full(f.size, np.inf)
    for s in spectra:
        k = np.rint(s.f / step).astype(np.int64)
        pos = np.searchsorted(keys, k)
        dist = np.abs(s.f - s.meta.get("setpoint_hz", 0.0))
        take = dist < best[pos]
        values[pos[take]] = s.counts[take]
        best[pos[take]] = dist[take]
    return Spectrum(f, values, kind=spectra[0].kind, dwell=spectra[0].dwell)


def synth_hole_burning(e: EmitterParams, burn_offset, s_b, freqs):
    """Absorption after burning a spectral hole, normalized to the unburned line.

    The hole is Lorentzian with FWHM ``2 * gamma_h * sqrt(1 + s_b)`` and
    fractional depth ``s_b / (1 + s_b)``, so the returned values are
    ``1 - depth * L(f - burn_offset)``.
    """
    if not e.gamma_h > 0:
        raise ValidationError("gamma_h must be > 0")
    if s_b < 0:
        raise ValidationError("burn saturation must be >= 0")
    freqs = np.asarray(freqs, dtype=float)
    width = 2.0 * e.gamma_h * math.sqrt(1.0 + s_b)
    depth = s_b / (1.0 + s_b)
    u = 2.0 * (freqs - burn_offset) / width
    return Spectrum(
        freqs,
        1.0 - depth / (1.0 + u * u),
        kind="absorption",
        meta={"burn_offset_hz": burn_offset, "hole_fwhm_hz": width, "depth": depth},
    )


def ensemble_histogram(ens: IonEnsemble, edges):
    """Ion counts per frequency bin, as a :class:`Spectrum` on the bin centres."""
    counts, edges = np.histogram(ens.offsets, bins=edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    return Spectrum(centres, counts.astype(float), kind="histogram")


def count_resolved_peaks_expectation(
    mean_ions,
    window,
    e: EmitterParams,
    cav: CavityParams,
    c_max,
    threshold,
    step=None,
    n_seeds=100,
    seed=0,
    chain: DetectionChain = REFERENCE_CHAIN,
    saturation=1.0,
    coupling="position",
):
    """Monte Carlo estimate of how many PLE lines a single sweep resolves.

    Each realization draws a Poisson number (mean ``mean_ions``) of ions
    inside ``window``, synthesizes a noise-free spectrum with the cavity
    centred on the window and counts local maxima above ``threshold``
    (counts/s) that lie more than one single-ion FWHM apart.

    Returns
    -------
    mean, standard error of the mean
    """
    lo, hi = map(float, window)
    fwhm = e.single_ion_fwhm
    step = step or fwhm / 10.0
    centre = 0.5 * (lo + hi)
    freqs = np.arange(math.floor(lo / step), math.ceil(hi / step) + 1) * step
    children = np.random.SeedSequence(seed).spawn(n_seeds)
    counts = np.empty(n_seeds)
    for i, child in enumerate(children):
        n_seq, ens_seq = child.spawn(2)
        n = int(np.random.default_rng(n_seq).poisson(mean_ions)) if mean_ions > 0 else 0
        ens = sample_ensemble(n, (lo, hi), e, c_max, ens_seq, coupling=coupling)
        rate = _ple_rate(freqs, ens, centre, cav.kappa, e, chain, saturation)
        spec = Spectrum(freqs, rate)
        peaks = detect_peaks(spec, min_prominence=1e-6, min_separation=fwhm, min_height=threshold)
        counts[i] = len(peaks)
    return float(counts.mean()), float(counts.std(ddof=1) / math.sqrt(n_seeds)) if n_seeds > 1 else 0.0
