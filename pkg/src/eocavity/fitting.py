"""Lineshape, decay and step-response fitting.

All models are fitted with a small Levenberg-Marquardt solver that uses
analytic Jacobians. Abscissae and ordinates are rescaled to O(1) before
optimization and the estimates mapped back afterwards, so the same damping
schedule works for GHz-wide lines and microsecond decays alike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .series import Spectrum, Trace, check_uniform
from .units import ValidationError

__all__ = [
    "FitResult",
    "levenberg_marquardt",
    "lorentzian",
    "gaussian",
    "exp_decay",
    "MODELS",
    "fit_lorentzian",
    "fit_gaussian",
    "fit_exponential",
    "detect_peaks",
    "estimate_switching_time",
]

FOUR_LN2 = 4.0 * math.log(2.0)


@dataclass
class FitResult:
    params: dict
    stderr: dict
    residual_norm: float
    converged: bool
    iterations: int
    flags: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.params[key]

    def format(self):
        lines = [f"{k} = {v:.10g} +/- {self.stderr.get(k, float('nan')):.3g}" for k, v in self.params.items()]
        lines += [
            f"residual_rms = {self.residual_norm:.6g}",
            f"converged = {str(self.converged).lower()}",
            f"iterations = {self.iterations}",
        ]
        lines += [f"flag = {f}" for f in self.flags]
        return "\n".join(lines)

    def as_dict(self):
        return {
            "params": dict(self.params),
            "stderr": dict(self.stderr),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
        }


# --------------------------------------------------------------------------
# models: each returns (value, jacobian) with jacobian shape (n, n_params)
# --------------------------------------------------------------------------

def lorentzian(x, p, jac=False):
    """``offset + amplitude / (1 + (2 (x - center) / fwhm)^2)``; ``p = (center, fwhm, amplitude, offset)``."""
    c, w, a, o = p
    u = 2.0 * (x - c) / w
    d = 1.0 / (1.0 + u * u)
    y = o + a * d
    if not jac:
        return y
    dd_du = -2.0 * u * d * d
    J = np.empty((x.size, 4))
    J[:, 0] = a * dd_du * (-2.0 / w)
    J[:, 1] = a * dd_du * (-u / w)
    J[:, 2] = d
    J[:, 3] = 1.0
    return y, J


def gaussian(x, p, jac=False):
    """``offset + amplitude * exp(-4 ln2 (x - center)^2 / fwhm^2)``; ``p = (center, fwhm, amplitude, offset)``."""
    c, w, a, o = p
    s = (x - c) / w
    g = np.exp(-FOUR_LN2 * s * s)
    y = o + a * g
    if not jac:
        return y
    J = np.empty((x.size, 4))
    J[:, 0] = a * g * (2.0 * FOUR_LN2 * s / w)
    J[:, 1] = a * g * (2.0 * FOUR_LN2 * s * s / w)
    J[:, 2] = g
    J[:, 3] = 1.0
    return y, J


def exp_decay(x, p, jac=False):
    """Sum of exponentials plus offset; ``p = (tau_1, amp_1, ..., tau_n, amp_n, offset)``."""
    n = (len(p) - 1) // 2
    y = np.full(x.shape, float(p[-1]))
    J = np.empty((x.size, len(p))) if jac else None
    for i in range(n):
        tau, amp = p[2 * i], p[2 * i + 1]
        e = np.exp(-x / tau)
        y += amp * e
        if jac:
            J[:, 2 * i] = amp * e * x / (tau * tau)
            J[:, 2 * i + 1] = e
    if not jac:
        return y
    J[:, -1] = 1.0
    return y, J


MODELS = {"lorentzian": lorentzian, "gaussian": gaussian, "exp": exp_decay}


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------

def levenberg_marquardt(model, x, y, p0, weights=None, max_iter=200, xtol=1e-8, gtol=1e-12):
    """Minimize ``sum(w * (model(x, p) - y)^2)``.

    Damping follows the Marquardt scheme (``lambda * diag(J^T W J)``) with a
    fixed x10 / /10 schedule, so results are reproducible bit for bit.

    Returns
    -------
    p : ndarray
    cov_unscaled : ndarray or None
        ``(J^T W J)^-1`` at the solution, None when singular.
    cost : float
    converged : bool
    iterations : int
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return _lm(model, x, y, p0, weights, max_iter, xtol, gtol)


def _lm(model, x, y, p0, weights, max_iter, xtol, gtol):
    p = np.array(p0, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    lam = 1e-3
    f, J = model(x, p, jac=True)
    r = f - y
    cost = float(np.sum(w * r * r))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        JW = J * w[:, None]
        A = J.T @ JW
        g = JW.T @ r
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(g)):
            break
        scale = np.maximum(np.diag(A), 1e-300)
        if np.max(np.abs(g) / np.sqrt(scale)) <= gtol * max(math.sqrt(cost), 1e-300):
            converged = True
            break
        accepted = False
        while lam < 1e16:
            try:
                dp = np.linalg.solve(A + lam * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            p_new = p + dp
            f_new, J_new = model(x, p_new, jac=True)
            r_new = f_new - y
            cost_new = float(np.sum(w * r_new * r_new))
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            # no descent direction left at any damping: at a (numerical) minimum
            converged = cost == 0.0 or np.max(np.abs(g) / np.sqrt(scale)) <= 1e-6 * max(math.sqrt(cost), 1e-300)
            break
        small_step = np.all(np.abs(dp) <= xtol * (np.abs(p) + xtol))
        p, f, J, r, cost = p_new, f_new, J_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-12)
        if small_step:
            converged = True
            break
    JW = J * w[:, None]
    try:
        cov = np.linalg.inv(J.T @ JW)
    except np.linalg.LinAlgError:
        cov = None
    return p, cov, cost, converged, it


def _poisson_fit(model, xs, ys, p0, y_scale, max_iter, passes=20):
    """Poisson maximum likelihood by iteratively reweighted least squares.

    Weights ``1/mu`` taken from the previous pass; at the fixed point the
    weighted normal equations coincide with the Poisson score equations.
    The first pass uses the counts themselves as variance estimate.
    """
    w = y_scale**2 / np.maximum(ys * y_scale, 1.0)
    total = 0
    p = np.asarray(p0, dtype=float)
    for _ in range(passes):
        p_new, cov, cost, converged, it = levenberg_marquardt(model, xs, ys, p, w, max_iter)
        total += it
        done = np.all(np.abs(p_new - p) <= 1e-10 * (np.abs(p_new) + 1e-10))
        p = p_new
        mu = model(xs, p) * y_scale
        w = y_scale**2 / np.maximum(mu, 1e-2)
        if done:
            break
    return p, cov, cost, converged, total


def _stderr(cov, cost, n, k, poisson):
    if cov is None:
        return np.full(k, np.nan)
    s2 = 1.0 if poisson else (cost / (n - k) if n > k else np.nan)
    return np.sqrt(np.clip(np.diag(cov) * s2, 0.0, None))


# --------------------------------------------------------------------------
# lineshapes
# --------------------------------------------------------------------------

def _lineshape_init(x, y):
    """Centre, FWHM, amplitude and offset guesses from the data itself."""
    n = y.size
    edge = max(1, n // 10)
    baseline = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    dev = y - baseline
    sign = 1.0 if dev.max() >= -dev.min() else -1.0
    dev = sign * dev
    i = int(np.argmax(dev))
    amp = dev[i]
    if amp <= 0:
        return float(x[n // 2]), float((x[-1] - x[0]) / 4), 0.0, baseline
    half = dev >= amp / 2
    lo = i
    while lo > 0 and half[lo - 1]:
        lo -= 1
    hi = i
    while hi < n - 1 and half[hi + 1]:
        hi += 1
    width = max(x[hi] - x[lo], x[1] - x[0])
    return float(x[i]), float(width), sign * float(amp), baseline


def _fit_lineshape(model, spec, init, poisson, max_iter):
    x = np.asarray(spec.f, dtype=float)
    y = np.asarray(spec.counts, dtype=float)
    if x.size < 8:
        raise ValidationError("need at least 8 points to fit a lineshape")
    check_uniform(x, "frequency grid")
    x_ref = x[0]
    x_scale = x[-1] - x[0]
    y_scale = float(np.max(np.abs(y))) or 1.0
    xs = (x - x_ref) / x_scale
    ys = y / y_scale
    if init is None:
        c, w, a, o = _lineshape_init(xs, ys)
    else:
        c = (init["center"] - x_ref) / x_scale
        w = init["fwhm"] / x_scale
        a = init["amplitude"] / y_scale
        o = init.get("offset", 0.0) / y_scale
    if poisson:
        p, cov, cost, converged, it = _poisson_fit(model, xs, ys, [c, w, a, o], y_scale, max_iter)
    else:
        p, cov, cost, converged, it = levenberg_marquardt(model, xs, ys, [c, w, a, o], None, max_iter)
    err = _stderr(cov, cost, xs.size, 4, poisson)
    p[1] = abs(p[1])
    scales = np.array([x_scale, x_scale, y_scale, y_scale])
    est = p * scales
    est[0] += x_ref
    sd = err * scales
    names = ("center", "fwhm", "amplitude", "offset")
    resid = model(xs, p) * y_scale - y
    flags = []
    if abs(est[2]) <= 1e-9 * y_scale:
        flags.append("zero_amplitude")
    if not (x[0] <= est[0] <= x[-1]):
        flags.append("center_outside_data")
    return FitResult(
        dict(zip(names, map(float, est))),
        dict(zip(names, map(float, sd))),
        float(np.sqrt(np.mean(resid**2))),
        bool(converged),
        it,
        flags,
    )


def fit_lorentzian(spec: Spectrum, init=None, poisson=False, max_iter=200):
    """Fit a Lorentzian peak or dip: ``center``, ``fwhm``, ``amplitude``, ``offset``.

    ``init`` may supply a dict of starting values; ``poisson=True`` switches
    to the Poisson maximum-likelihood estimate and absolute standard errors.
    Non-convergence is reported through ``converged``; it never raises.
    """
    return _fit_lineshape(lorentzian, spec, init, poisson, max_iter)


def fit_gaussian(spec: Spectrum, init=None, poisson=False, max_iter=200):
    """Gaussian counterpart of :func:`fit_lorentzian`."""
    return _fit_lineshape(gaussian, spec, init, poisson, max_iter)


# --------------------------------------------------------------------------
# decays
# --------------------------------------------------------------------------

def _loglinear(t, y):
    """Least-squares ``log y = log A - t / tau`` on the positive samples."""
    m = y > 0
    if m.sum() < 2:
        return None
    slope, icpt = np.polyfit(t[m], np.log(y[m]), 1)
    if slope >= 0:
        return None
    return -1.0 / slope, math.exp(icpt)


def _exp_init(t, y, n):
    span = t[-1]
    tail = max(2, t.size // 20)
    offset = float(np.mean(y[-tail:]))
    z = y - offset
    est = _loglinear(t[: t.size // 3], z[: t.size // 3]) or (span / 5, float(z[0]))
    if n == 1:
        return [est[0], est[1], offset]
    # peel: slow component from the later part, fast one from the early residue
    late = slice(t.size // 5, t.size // 2)
    slow = _loglinear(t[late], z[late]) or (est[0] * 2, float(z[0]) / 2)
    resid = z - slow[1] * np.exp(-t / slow[0])
    early = slice(0, max(3, t.size // 10))
    fast = _loglinear(t[early], resid[early])
    if fast is None or fast[0] >= slow[0]:
        fast = (slow[0] / 4, max(float(z[0]) - slow[1], slow[1]))
    return [fast[0], fast[1], slow[0], slow[1], offset]


def fit_exponential(t, y, n_components=1, poisson=False, max_iter=200):
    """Fit ``sum_i A_i exp(-t/tau_i) + offset`` with one or two components.

    Result params: ``tau_1``.. (ascending), ``amp_i``, ``weight_i``
    (amplitudes normalized to sum one) and ``offset``. Two lifetimes within
    5 % of each other are flagged ``degenerate``.
    """
    if n_components not in (1, 2):
        raise ValidationError("n_components must be 1 or 2")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 4 * n_components + 2:
        raise ValidationError("too few samples for the requested model")
    t_ref = t[0]
    t_scale = t[-1] - t[0]
    y_scale = float(np.max(np.abs(y))) or 1.0
    ts = (t - t_ref) / t_scale
    ys = y / y_scale
    p0 = _exp_init(ts, ys, n_components)
    if poisson:
        p, cov, cost, converged, it = _poisson_fit(exp_decay, ts, ys, p0, y_scale, max_iter)
    else:
        p, cov, cost, converged, it = levenberg_marquardt(exp_decay, ts, ys, p0, None, max_iter)
    err = _stderr(cov, cost, ts.size, len(p), poisson)

    comps = []
    for i in range(n_components):
        tau, amp = p[2 * i] * t_scale, p[2 * i + 1] * y_scale
        # shift the time origin back to t = 0 of the input
        amp_origin = amp * math.exp(t_ref / tau) if tau > 0 else amp
        comps.append((tau, amp_origin, err[2 * i] * t_scale, err[2 * i + 1] * y_scale * abs(amp_origin / amp) if amp else np.nan))
    comps.sort(key=lambda c: c[0])
    total_amp = sum(c[1] for c in comps)
    params, stderr = {}, {}
    for i, (tau, amp, dtau, damp) in enumerate(comps, start=1):
        params[f"tau_{i}"] = float(tau)
        stderr[f"tau_{i}"] = float(dtau)
        params[f"amp_{i}"] = float(amp)
        stderr[f"amp_{i}"] = float(damp)
        params[f"weight_{i}"] = float(amp / total_amp) if total_amp else float("nan")
    params["offset"] = float(p[-1] * y_scale)
    stderr["offset"] = float(err[-1] * y_scale)
    flags = []
    if any(c[0] <= 0 for c in comps):
        flags.append("nonpositive_lifetime")
    if n_components == 2 and comps[0][0] > 0 and comps[1][0] / comps[0][0] < 1.05:
        flags.append("degenerate")
    if t_scale < 3.0 * max(c[0] for c in comps):
        flags.append("window_shorter_than_3_lifetimes")
    resid = exp_decay(ts, p) * y_scale - y
    return FitResult(params, stderr, float(np.sqrt(np.mean(resid**2))), bool(converged), it, flags)


# --------------------------------------------------------------------------
# peaks and steps
# --------------------------------------------------------------------------

def detect_peaks(spec: Spectrum, min_prominence=0.05, min_separation=0.0, min_height=None):
    """Local maxima of ``spec`` ordered by frequency.

    ``min_prominence`` is relative to the full range (max - min) of the
    spectrum, so the result does not change under positive affine rescaling
    of the counts. Peaks closer than ``min_separation`` (Hz) are merged,
    keeping the taller one. ``min_height`` is an optional absolute floor in
    the units of the counts.

    Returns
    -------
    list of dict with ``center`` and ``height``
    """
    f = np.asarray(spec.f, dtype=float)
    y = np.asarray(spec.counts, dtype=float)
    if f.size < 3:
        return []
    check_uniform(f, "frequency grid")
    span = float(y.max() - y.min())
    if span <= 0:
        return []
    idx, _ = find_peaks(y, prominence=min_prominence * span, height=min_height)
    kept = []
    for i in sorted(idx, key=lambda i: (-y[i], f[i])):
        if all(abs(f[i] - f[j]) >= min_separation for j in kept):
            kept.append(i)
    return [{"center": float(f[i]), "height": float(y[i])} for i in sorted(kept)]


def estimate_switching_time(t, y=None, channel="delta"):
    """10-90 % duration of a single monotone transition.

    ``t`` may be a :class:`Trace`, in which case ``channel`` selects the
    signal. Crossing times are linearly interpolated between samples.
    """
    if isinstance(t, Trace):
        y = t.channel(channel)
        t = t.t
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y0, y1 = y[0], y[-1]
    span = y1 - y0
    if span == 0:
        raise ValidationError("no transition in window")
    s = (y - y0) / span
    d = np.diff(s)
    if np.any(d < -1e-9):
        raise ValidationError("transition is not monotone within the window")

    def crossing(level):
        k = int(np.argmax(s >= level))
        if k == 0:
            return t[0]
        return t[k - 1] + (level - s[k - 1]) / (s[k] - s[k - 1]) * (t[k] - t[k - 1])

    return float(crossing(0.9) - crossing(0.1))
