"""CSV output, protocol files and sweep-plan files.

Every CSV starts with one ``#`` metadata line, then a header row, then data
rows formatted with ``%.12g`` so identical inputs give identical bytes.
"""
from __future__ import annotations

import configparser
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_list
from .dynamics import VoltageWaveform
from .series import Spectrum, Trace
from .spectra import SweepPlan
from .units import ValidationError

__all__ = [
    "TRACE_COLUMNS",
    "metadata_line",
    "write_csv",
    "read_csv",
    "trace_table",
    "spectrum_table",
    "Protocol",
    "parse_protocol",
    "parse_plan",
]

TRACE_COLUMNS = ("t_us", "delta_ghz", "population", "flux_cavity_per_s", "flux_free_per_s")


def metadata_line(**items):
    parts = [f"eocavity {__version__}"]
    parts += [f"{k}={v}" for k, v in items.items() if v is not None]
    return "# " + " | ".join(parts)


def _format_rows(columns, data):
    lines = [",".join(columns)]
    for row in np.column_stack(data):
        lines.append(",".join("%.12g" % v for v in row))
    return "\n".join(lines) + "\n"


def csv_text(columns, data, **meta):
    return metadata_line(**meta) + "\n" + _format_rows(columns, data)


def write_csv(path, text):
    """Write ``text`` atomically: the file either appears complete or not at all."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def read_csv(path):
    """Return ``(columns, data dict, metadata lines)`` of a CSV written by this package."""
    meta, header, rows = [], None, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.append(line[1:].strip())
            elif header is None:
                header = [c.strip() for c in line.split(",")]
            else:
                try:
                    rows.append([float(v) for v in line.split(",")])
                except ValueError:
                    raise ValidationError(f"{path}: non-numeric row {line[:40]!r}") from None
    if header is None or not rows:
        raise ValidationError(f"{path}: no data")
    if any(len(r) != len(header) for r in rows):
        raise ValidationError(f"{path}: rows do not match header")
    arr = np.array(rows, dtype=float)
    return header, {name: arr[:, i] for i, name in enumerate(header)}, meta


def trace_table(tr: Trace):
    return TRACE_COLUMNS, [tr.t * 1e6, tr.delta / 1e9, tr.population, tr.flux_cavity, tr.flux_free]


def spectrum_table(sp: Spectrum, value_name=None):
    if value_name is None:
        value_name = {"rate": "rate_per_s", "counts": "counts"}.get(sp.kind, sp.kind)
    return ("f_ghz", value_name), [sp.f / 1e9, np.asarray(sp.counts, dtype=float)]


class Protocol:
    """Parsed ``[protocol]`` file: waveform, pump instants and grid."""

    def __init__(self, waveform, pump_times, dt, offset, pump):
        self.waveform = waveform
        self.pump_times = pump_times
        self.dt = dt
        self.offset = offset
        self.pump = pump


def _parser(text):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"cannot parse file: {exc}") from None
    return cp


def parse_protocol(text):
    """Parse a voltage protocol file.

    Format::

        [protocol]
        duration_us = 1000
        dt_us = 0.1
        offset_ghz = 0        # cavity-emitter detuning at zero bias
        pump = 1.0            # excited fraction prepared at each pump flag
        segments =
            0,   0,   1       # time_us, voltage_v, pump flag
            200, 200, 0
            300, 0,   0
    """
    cp = _parser(text)
    if not cp.has_section("protocol"):
        raise ValidationError("protocol file needs a [protocol] section")
    sec = cp["protocol"]
    try:
        duration = float(sec["duration_us"]) * 1e-6
        dt = float(sec.get("dt_us", "0.1")) * 1e-6
        offset = float(sec.get("offset_ghz", "0")) * 1e9
        pump = float(sec.get("pump", "1"))
        raw = sec["segments"]
    except KeyError as exc:
        raise ValidationError(f"protocol file misses key {exc}") from None
    except ValueError as exc:
        raise ValidationError(f"protocol file: {exc}") from None
    segs, pumps = [], []
    for line in raw.strip().splitlines():
        vals = parse_list(line)
        if len(vals) not in (2, 3):
            raise ValidationError(f"bad segment line {line!r}: expected time_us, voltage_v[, pump]")
        t = vals[0] * 1e-6
        segs.append((t, vals[1]))
        if len(vals) == 3 and vals[2]:
            pumps.append(t)
    return Protocol(VoltageWaveform(tuple(segs), duration), pumps or None, dt, offset, pump)


def parse_plan(text):
    """Parse a PLE sweep-plan file.

    Format (frequencies relative to the inhomogeneous line centre)::

        [plan]
        setpoints_ghz = 140, 142.7, 145.4, 148.1
        scan_ghz = 4
        step_mhz = 10
        dwell_s = 1
        power_nw = 22
        p_sat_nw = 22
        zero_bias_offset_ghz = 140
        dark_rate_per_s = 0
        noise = true

        [ensemble]
        n_ions = 40
        window_ghz = 136, 152
        c_max = 5.9          # default: device cooperativity
        coupling = position  # or fixed

    Returns
    -------
    plan : SweepPlan
    options : dict with ``dark_rate``, ``noise`` and the ensemble settings
    """
    cp = _parser(text)
    if not cp.has_section("plan"):
        raise ValidationError("plan file needs a [plan] section")
    p = cp["plan"]
    try:
        plan = SweepPlan(
            setpoints=[v * 1e9 for v in parse_list(p["setpoints_ghz"])],
            scan=float(p["scan_ghz"]) * 1e9,
            step=float(p["step_mhz"]) * 1e6,
            dwell=float(p.get("dwell_s", "1")),
            power=float(p.get("power_nw", "22")) * 1e-9,
            p_sat=float(p.get("p_sat_nw", "22")) * 1e-9,
            zero_bias_offset=float(p.get("zero_bias_offset_ghz", "0")) * 1e9,
        )
        options = {
            "dark_rate": float(p.get("dark_rate_per_s", "0")),
            "noise": cp.getboolean("plan", "noise", fallback=False),
        }
        if cp.has_section("ensemble"):
            e = cp["ensemble"]
            window = [v * 1e9 for v in parse_list(e["window_ghz"])]
            if len(window) != 2:
                raise ValidationError("ensemble.window_ghz needs two values")
            options["n_ions"] = int(e["n_ions"])
            options["window"] = tuple(window)
            options["c_max"] = float(e["c_max"]) if "c_max" in e else None
            options["coupling"] = e.get("coupling", "position")
    except KeyError as exc:
        raise ValidationError(f"plan file misses key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"plan file: {exc}") from None
    return plan, options
