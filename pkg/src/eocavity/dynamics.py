"""Time-domain emitter dynamics under electro-optic cavity tuning.

A piecewise-constant drive voltage passes through a single-pole low-pass
(the high-voltage amplifier) and shifts the cavity by ``coeff`` Hz per volt.
Each emitter sub-population then decays with the instantaneous rate
``2*pi*gamma0*(1 + C(Delta(t)))`` which is integrated with classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cqed import detuned_cooperativity
from .series import Spectrum, Trace, check_uniform
from .units import TWO_PI, CavityParams, EmitterParams, ValidationError

__all__ = [
    "DEFAULT_TAU_SW",
    "TuningActuator",
    "VoltageWaveform",
    "DetuningTrajectory",
    "Subpopulation",
    "StorageProtocol",
    "filtered_voltage",
    "detuning_trajectory",
    "simulate_decay",
    "simulate_storage_protocol",
    "resumed_amplitude",
    "transmission_spectrum",
]

#: first-order time constant giving a 10-90 % switching time of exactly 5 us
DEFAULT_TAU_SW = 5e-6 / math.log(9.0)


@dataclass(frozen=True)
class TuningActuator:
    """Electro-optic tuning stage.

    ``tau_sw = 0`` denotes an ideal (instantaneous) actuator.
    """

    coeff: float = 270e6
    v_max: float = 300.0
    tau_sw: float = DEFAULT_TAU_SW

    def __post_init__(self):
        if not (self.coeff > 0 and self.v_max > 0):
            raise ValidationError("coeff and v_max must be > 0")
        if not (self.tau_sw >= 0 and math.isfinite(self.tau_sw)):
            raise ValidationError("tau_sw must be >= 0")

    @property
    def ten_ninety(self):
        """10-90 % step-response time, s."""
        return self.tau_sw * math.log(9.0)

    @property
    def tuning_range(self):
        """Largest reachable detuning magnitude, Hz."""
        return self.coeff * self.v_max


@dataclass(frozen=True)
class VoltageWaveform:
    """Piecewise-constant voltage: ``segments`` holds ``(start_time, volts)`` pairs.

    The first segment starts at t = 0 and each one lasts until the next
    start (the last one until ``duration``).
    """

    segments: tuple
    duration: float

    def __post_init__(self):
        segs = tuple((float(t), float(v)) for t, v in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValidationError("waveform needs at least one segment")
        starts = [t for t, _ in segs]
        if starts[0] != 0.0:
            raise ValidationError("first segment must start at t = 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("segment start times must be strictly increasing")
        if not self.duration > starts[-1]:
            raise ValidationError("duration must extend past the last segment start")

    @classmethod
    def constant(cls, volts, duration):
        return cls(((0.0, volts),), duration)

    @classmethod
    def step(cls, v0, v1, t_step, duration):
        return cls(((0.0, v0), (t_step, v1)), duration)

    @property
    def starts(self):
        return np.array([t for t, _ in self.segments])

    @property
    def volts(self):
        return np.array([v for _, v in self.segments])

    def validate(self, actuator: TuningActuator):
        vmax = np.max(np.abs(self.volts))
        if vmax > actuator.v_max * (1 + 1e-12):
            raise ValidationError(
                f"waveform reaches {vmax:g} V, beyond actuator limit {actuator.v_max:g} V"
            )

    def scaled(self, s):
        return VoltageWaveform(tuple((t, s * v) for t, v in self.segments), self.duration)


def filtered_voltage(waveform: VoltageWaveform, tau, times, side="right"):
    """Exact low-pass response of the actuator to ``waveform`` at ``times``.

    The filter state starts settled at the first segment voltage. With
    ``side="left"`` a time equal to a segment boundary belongs to the
    preceding segment (left limit), which only matters for ``tau = 0``.
    Times within a tiny fraction of the duration of a boundary count as on
    it, so grid points built as ``k * dt`` land on the intended segment.
    """
    starts, volts = waveform.starts, waveform.volts
    v_start = np.empty_like(volts)
    v_start[0] = volts[0]
    for k in range(1, len(volts)):
        span = starts[k] - starts[k - 1]
        decay = math.exp(-span / tau) if tau > 0 else 0.0
        v_start[k] = volts[k - 1] + (v_start[k - 1] - volts[k - 1]) * decay
    times = np.asarray(times, dtype=float)
    tol = 1e-9 * waveform.duration
    probe = times - tol if side == "left" else times + tol
    idx = np.clip(np.searchsorted(starts, probe, side=side) - 1, 0, len(starts) - 1)
    if tau > 0:
        elapsed = np.maximum(times - starts[idx], 0.0)
        return volts[idx] + (v_start[idx] - volts[idx]) * np.exp(-elapsed / tau)
    return volts[idx].astype(float)


@dataclass
class DetuningTrajectory:
    """Cavity-emitter detuning sampled on a uniform grid.

    When built by :func:`detuning_trajectory` it can also be evaluated
    exactly between samples (needed for the RK4 stages); a bare sampled
    trajectory falls back to linear interpolation.
    """

    t: np.ndarray
    delta: np.ndarray
    waveform: VoltageWaveform | None = None
    actuator: TuningActuator | None = None
    offset: float = 0.0

    def at(self, times, side="right"):
        if self.waveform is None:
            return np.interp(times, self.t, self.delta)
        v = filtered_voltage(self.waveform, self.actuator.tau_sw, times, side=side)
        return self.actuator.coeff * v + self.offset


def detuning_trajectory(w: VoltageWaveform, a: TuningActuator, dt, offset=0.0):
    """Sample the actuator-limited detuning ``offset + coeff * v_filtered(t)``.

    ``offset`` is the static cavity-emitter detuning at zero bias.
    """
    if not dt > 0:
        raise ValidationError("dt must be > 0")
    if a.tau_sw > 0 and dt > a.tau_sw / 10 * (1 + 1e-9):
        raise ValidationError(
            f"dt = {dt:g} s does not resolve the actuator (needs <= tau_sw/10 = {a.tau_sw / 10:g} s)"
        )
    w.validate(a)
    n = int(math.ceil(w.duration / dt - 1e-9))
    t = np.arange(n + 1) * dt
    traj = DetuningTrajectory(t, np.empty(0), w, a, offset)
    traj.delta = traj.at(t)
    return traj


@dataclass(frozen=True)
class Subpopulation:
    """Fraction ``weight`` of the emitters sharing on-resonance cooperativity ``c0``."""

    weight: float
    c0: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValidationError("weight must lie in [0, 1]")
        if self.c0 < 0:
            raise ValidationError("c0 must be >= 0")


def _rk4_linear_factors(a, b, c, h):
    """RK4 one-step amplification for ``y' = -k(t) y``.

    ``a``, ``b``, ``c`` are the rates at the start, middle and end of the step.
    """
    y2 = 1.0 - 0.5 * h * a
    y3 = 1.0 - 0.5 * h * b * y2
    y4 = 1.0 - h * b * y3
    return 1.0 - h / 6.0 * (a + 2.0 * b * y2 + 2.0 * b * y3 + c * y4)


def _substep_factors(rate, t0, h, n, n_pop):
    """One-interval amplification built from ``n`` RK4 substeps."""
    hs = h / n
    starts = (t0[:, None] + hs * np.arange(n)[None, :]).ravel()
    a = rate(starts, "right")
    b = rate(starts + 0.5 * hs, "right")
    c = rate(starts + hs, "left")
    f = _rk4_linear_factors(a, b, c, hs).reshape(n_pop, t0.size, n)
    return f.prod(axis=2)


def _refine_factors(rate, t0, h, factors, n_pop, tol=1e-13, max_level=12):
    """Halve the RK4 substep on intervals whose factor is not yet converged.

    A fast actuator can sweep the detuning across the whole cavity line
    within one output step; those intervals are subdivided until two
    successive estimates agree to ``tol``.
    """
    active = np.arange(t0.size)
    n = 1
    for _ in range(max_level):
        if active.size == 0:
            break
        n *= 2
        finer = _substep_factors(rate, t0[active], h, n, n_pop)
        err = np.abs(finer - factors[:, active]).max(axis=0)
        factors[:, active] = finer
        active = active[err > tol]
    return factors


def simulate_decay(
    pops,
    delta,
    e: EmitterParams,
    kappa,
    pump=1.0,
    pump_times=None,
):
    """Integrate the excited-state population of each sub-population.

    Parameters
    ----------
    pops : sequence of Subpopulation
        Weights must sum to one.
    delta : DetuningTrajectory
        Cavity-emitter detuning; its grid is the integration grid.
    e : EmitterParams
    kappa : float
        Cavity linewidth, Hz.
    pump : float or sequence
        Excited fraction prepared (per sub-population or common).
    pump_times : sequence of float, optional
        Instants at which the population is (re)set to ``pump``. By default
        the population is prepared once at the first sample; otherwise it is
        zero until the first pump time. Each time is snapped to the grid.

    Returns
    -------
    Trace
    """
    pops = list(pops)
    if not pops:
        raise ValidationError("need at least one sub-population")
    weights = np.array([p.weight for p in pops])
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValidationError(f"sub-population weights sum to {weights.sum():g}, not 1")
    c0 = np.array([p.c0 for p in pops])[:, None]
    pump = np.broadcast_to(np.asarray(pump, dtype=float), (len(pops),)).copy()
    if np.any(pump < 0) or np.any(pump > 1):
        raise ValidationError("pump fraction must lie in [0, 1]")

    t = np.asarray(delta.t, dtype=float)
    h = check_uniform(t, "time grid")
    act = getattr(delta, "actuator", None)
    if act is not None and act.tau_sw > 0 and h > act.tau_sw / 10 * (1 + 1e-9):
        raise ValidationError("time grid coarser than tau_sw/10")

    w0 = TWO_PI * e.gamma0

    def rate(times, side):
        return w0 * (1.0 + detuned_cooperativity(c0, delta.at(times, side=side)[None, :], kappa))

    t0 = t[:-1]
    k_start, k_mid, k_end = rate(t0, "right"), rate(t0 + 0.5 * h, "right"), rate(t[1:], "left")
    kmax = max(k_start.max(), k_mid.max(), k_end.max())
    if h * kmax > 0.01 * (1 + 1e-9):
        raise ValidationError(
            f"time step {h:g} s too coarse for decay rate {kmax:g} 1/s (needs <= 1/(100 rate))"
        )
    factors = _rk4_linear_factors(k_start, k_mid, k_end, h)
    factors = _refine_factors(rate, t0, h, factors, len(pops))

    populations = np.zeros((len(pops), t.size))
    if pump_times is None:
        resets = [0]
    else:
        resets = sorted({int(round((tp - t[0]) / h)) for tp in pump_times})
        if resets and (resets[0] < 0 or resets[-1] >= t.size):
            raise ValidationError("pump time outside the simulated window")
    for j, start in enumerate(resets):
        stop = resets[j + 1] if j + 1 < len(resets) else t.size
        populations[:, start] = pump
        if stop - start > 1:
            populations[:, start + 1 : stop] = pump[:, None] * np.cumprod(
                factors[:, start : stop - 1], axis=1
            )

    c_now = detuned_cooperativity(c0, delta.at(t, side="right")[None, :], kappa)
    weighted = weights[:, None] * populations * w0
    flux_free = weighted.sum(axis=0)
    flux_cavity = (weighted * c_now).sum(axis=0)
    return Trace(
        t=t,
        delta=delta.at(t, side="right"),
        populations=populations,
        weights=weights,
        flux_cavity=flux_cavity,
        flux_free=flux_free,
    )


@dataclass(frozen=True)
class StorageProtocol:
    """Detune-and-return sequence used to park excitation off resonance.

    The emitters are prepared at ``t_pump`` with the cavity on resonance
    (bias ``v_on``), the cavity is pulled to ``v_off`` at ``t_detune`` and
    returned to ``v_on`` after ``t_wait``. Times in s, voltages in V.
    """

    t_detune: float
    t_wait: float
    v_off: float
    duration: float
    t_pump: float = 0.0
    v_on: float = 0.0
    pump: float = 1.0

    def __post_init__(self):
        if self.t_pump < 0:
            raise ValidationError("t_pump must be >= 0")
        if self.t_detune < self.t_pump:
            raise ValidationError("t_detune must not precede the pump")
        if self.t_wait < 0:
            raise ValidationError("t_wait must be >= 0")
        if self.t_detune + self.t_wait >= self.duration:
            raise ValidationError("protocol must end after the cavity is re-tuned")

    def waveform(self):
        segs = [(0.0, self.v_on)]
        if self.t_wait > 0:
            segs.append((self.t_detune, self.v_off))
            segs.append((self.t_detune + self.t_wait, self.v_on))
        # drop the leading segment when detuning starts at t = 0
        if len(segs) > 1 and segs[1][0] == 0.0:
            segs = segs[1:]
        return VoltageWaveform(tuple(segs), self.duration)


def simulate_storage_protocol(
    protocol: StorageProtocol,
    e: EmitterParams,
    kappa,
    actuator: TuningActuator,
    pops,
    dt,
    offset=0.0,
):
    """Run the detune-wait-retune sequence and return the resulting :class:`Trace`."""
    traj = detuning_trajectory(protocol.waveform(), actuator, dt, offset=offset)
    return simulate_decay(pops, traj, e, kappa, pump=protocol.pump, pump_times=[protocol.t_pump])


def resumed_amplitude(p_detune, c0, delta_off, kappa, gamma0, t_wait):
    """Closed-form population after an ideal (instantaneous) detuned wait."""
    c_off = detuned_cooperativity(c0, delta_off, kappa)
    return p_detune * math.exp(-TWO_PI * gamma0 * (1.0 + c_off) * t_wait)


def transmission_spectrum(cav: CavityParams, bias, a: TuningActuator, freqs, depth=1.0):
    """Waveguide transmission through the biased cavity.

    ``freqs`` are probe offsets from the zero-bias resonance ``cav.f0`` (Hz).
    The dip is Lorentzian with FWHM ``f0/Q``, centred at ``coeff * bias`` and
    of fractional depth ``depth`` in (0, 1].
    """
    if not 0.0 < depth <= 1.0:
        raise ValidationError("coupling depth must lie in (0, 1]")
    if abs(bias) > a.v_max * (1 + 1e-12):
        raise ValidationError(f"bias {bias:g} V beyond actuator limit {a.v_max:g} V")
    freqs = np.asarray(freqs, dtype=float)
    kappa = cav.kappa
    limit = a.tuning_range + 10.0 * kappa
    if np.any(np.abs(freqs) > limit):
        raise ValidationError("scan extends beyond tuning range + 10 linewidths")
    center = a.coeff * bias
    x = 2.0 * (freqs - center) / kappa
    return Spectrum(
        freqs,
        1.0 - depth / (1.0 + x * x),
        kind="transmission",
        meta={"bias_v": bias, "center_hz": center},
    )
