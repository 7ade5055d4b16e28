"""Command-line interface.

Exit codes: 0 success, 2 invalid input (bad flags, configs or parameters),
1 unexpected internal error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .budget import chain_report
from .config import CONFIG_DIR_ENV, PRESETS, load_config
from .cqed import beta_factor, enhanced_branching, theoretical_purcell
from .dynamics import (
    StorageProtocol,
    detuning_trajectory,
    simulate_decay,
    simulate_storage_protocol,
    transmission_spectrum,
)
from .fitting import detect_peaks, estimate_switching_time, fit_exponential, fit_gaussian, fit_lorentzian
from .io import csv_text, parse_plan, parse_protocol, read_csv, spectrum_table, trace_table, write_csv
from .series import Spectrum
from .spectra import sample_ensemble, synth_hole_burning, synth_ple
from .units import DomainError, ValidationError, lifetime_from_gamma

#: reported branching ratio of the cavity-A device, kept for comparison
REPORTED_BRANCHING_A = 0.915


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _echo_config(cfg, seed=None):
    print(f"# config = {cfg.name} (sha256:{cfg.digest})")
    for line in cfg.canonical_text().splitlines():
        print(f"#   {line}")
    if seed is not None:
        print(f"# seed = {seed}")


def cmd_cqed(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    p = cfg.cqed_params()
    c = cfg.cooperativity
    tau_c = lifetime_from_gamma(p.gamma0 * (1.0 + c))
    branch = enhanced_branching(cfg.emitter.b0, c)
    purcell = theoretical_purcell(cfg.cavity.q_factor, cfg.cavity.mode_volume, args.orientation)
    rows = [
        ("g_mhz", p.g / 1e6),
        ("kappa_ghz", p.kappa / 1e9),
        ("gamma0_hz", p.gamma0),
        ("cooperativity", c),
        ("beta", beta_factor(c)),
        ("tau0_us", cfg.emitter.tau0 * 1e6),
        ("tau_c_us", tau_c * 1e6),
        ("branching_b0", cfg.emitter.b0),
        ("branching_enhanced", branch),
        ("purcell_theory", purcell),
        ("purcell_theory_over_measured", purcell / c if c else math.inf),
    ]
    for k, v in rows:
        print(f"{k} = {v:.{args.digits}g}")
    if cfg.tau_c is not None:
        print(f"cooperativity_from_lifetimes = {cfg.emitter.tau0 / cfg.tau_c - 1.0:.{args.digits}g}")
    c_a = 430.0 / 50.0 - 1.0
    print(
        f"note: the reported cavity-A branching ratio is {REPORTED_BRANCHING_A:.1%}, while "
        f"(b0 + C)/(1 + C) with b0 = 0.25, C = {c_a:.1f} gives {enhanced_branching(0.25, c_a):.1%}"
    )
    return 0


def cmd_budget(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    rep = chain_report(cfg.cooperativity, cfg.emitter.tau0, cfg.chain, emission=args.emission)
    print(rep.format())
    return 0


def _write_trace(tr, out, cfg, extra=None):
    cols, data = trace_table(tr)
    text = csv_text(cols, data, config=f"{cfg.name}:{cfg.digest}", **(extra or {}))
    if out is None:
        sys.stdout.write(text)
    else:
        write_csv(out, text)
        print(f"wrote {out}")


def cmd_simulate(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    proto = parse_protocol(Path(args.protocol).read_text())
    traj = detuning_trajectory(proto.waveform, cfg.actuator, proto.dt, offset=proto.offset)
    tr = simulate_decay(cfg.subpopulations(), traj, cfg.emitter, cfg.cavity.kappa, proto.pump, proto.pump_times)
    _write_trace(tr, args.out, cfg, {"protocol": Path(args.protocol).name})
    return 0


def cmd_protocol(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    if args.detune_ghz is not None:
        v_off = args.detune_ghz * 1e9 / cfg.actuator.coeff
    else:
        v_off = args.v_off
    proto = StorageProtocol(
        t_detune=args.t_detune_us * 1e-6,
        t_wait=args.t_wait_us * 1e-6,
        v_off=v_off,
        duration=args.duration_us * 1e-6,
        t_pump=args.t_pump_us * 1e-6,
    )
    tr = simulate_storage_protocol(proto, cfg.emitter, cfg.cavity.kappa, cfg.actuator, cfg.subpopulations(), args.dt_us * 1e-6)
    _write_trace(tr, args.out, cfg, {"t_wait_us": f"{args.t_wait_us:g}", "v_off": f"{v_off:.6g}"})
    return 0


def cmd_transmission(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    half = args.scan_ghz * 1e9 / 2
    center = cfg.actuator.coeff * args.bias_v
    step = args.step_mhz * 1e6
    k = np.arange(math.floor((center - half) / step), math.ceil((center + half) / step) + 1)
    sp = transmission_spectrum(cfg.cavity, args.bias_v, cfg.actuator, k * step, depth=args.depth)
    cols, data = spectrum_table(sp)
    text = csv_text(cols, data, config=f"{cfg.name}:{cfg.digest}", bias_v=f"{args.bias_v:g}")
    write_csv(args.out, text)
    print(f"wrote {args.out}")
    return 0


def cmd_synth_ple(args):
    cfg = load_config(args.config)
    _echo_config(cfg, args.seed)
    plan, opts = parse_plan(Path(args.plan).read_text())
    if "n_ions" not in opts:
        raise ValidationError("plan file needs an [ensemble] section")
    c_max = opts["c_max"] if opts["c_max"] is not None else cfg.cooperativity
    ens = sample_ensemble(opts["n_ions"], opts["window"], cfg.emitter, c_max, args.seed, coupling=opts["coupling"])
    noise = opts["noise"] if args.noise is None else args.noise
    spectra = synth_ple(
        ens, cfg.cavity, cfg.emitter, plan, cfg.chain, noise=noise, seed=args.seed,
        dark_rate=opts["dark_rate"], actuator=cfg.actuator,
    )
    texts = []
    for k, sp in enumerate(spectra):
        cols, data = spectrum_table(sp)
        meta = dict(
            config=f"{cfg.name}:{cfg.digest}", seed=args.seed,
            setpoint_ghz=f"{sp.meta['setpoint_hz'] / 1e9:.6g}", dwell_s=f"{plan.dwell:g}",
        )
        texts.append((f"ple_{k:03d}.csv", csv_text(cols, data, **meta)))
    out = Path(args.out)
    for name, text in texts:
        write_csv(out / name, text)
    print(f"ions = {len(ens)}")
    print(f"wrote {len(texts)} spectra to {out}")
    return 0


def cmd_synth_hole(args):
    cfg = load_config(args.config)
    _echo_config(cfg)
    e = cfg.emitter
    if args.gamma_h_mhz is not None:
        e = replace(e, gamma_h=args.gamma_h_mhz * 1e6)
    step = args.step_mhz * 1e6
    half = args.scan_mhz * 1e6 / 2
    centre = args.burn_offset_mhz * 1e6
    k = np.arange(math.floor((centre - half) / step), math.ceil((centre + half) / step) + 1)
    sp = synth_hole_burning(e, centre, args.saturation, k * step)
    cols, data = spectrum_table(sp)
    text = csv_text(
        cols, data, config=f"{cfg.name}:{cfg.digest}",
        gamma_h_mhz=f"{e.gamma_h / 1e6:g}", saturation=f"{args.saturation:g}",
    )
    write_csv(args.out, text)
    print(f"hole_fwhm_mhz = {sp.meta['hole_fwhm_hz'] / 1e6:.6g}")
    print(f"wrote {args.out}")
    return 0


_DEFAULT_COLUMNS = {
    "exp1": "flux_cavity_per_s",
    "exp2": "flux_cavity_per_s",
    "switch": "delta_ghz",
}


def cmd_fit(args):
    header, data, meta = read_csv(args.input)
    xname = header[0]
    ycol = args.column or _DEFAULT_COLUMNS.get(args.model, header[1])
    if ycol not in data:
        raise ValidationError(f"column {ycol!r} not in {header}")
    x, y = data[xname], data[ycol]
    keep = np.ones(x.size, dtype=bool)
    if args.x_min is not None:
        keep &= x >= args.x_min
    if args.x_max is not None:
        keep &= x <= args.x_max
    x, y = x[keep], y[keep]
    if x.size == 0:
        raise ValidationError("no samples inside --x-min/--x-max")
    if xname == "t_us":
        x = x * 1e-6
    elif xname == "f_ghz":
        x = x * 1e9
    else:
        raise ValidationError(f"unrecognized abscissa column {xname!r}")

    report = {"model": args.model, "input": str(args.input), "column": ycol}
    lines = []
    if args.model in ("lorentzian", "gaussian"):
        fitter = fit_lorentzian if args.model == "lorentzian" else fit_gaussian
        res = fitter(Spectrum(x, np.clip(y, 0, None)), poisson=args.poisson)
        lines.append(res.format())
        lines.append(f"center_ghz = {res['center'] / 1e9:.9g}")
        lines.append(f"fwhm_mhz = {res['fwhm'] / 1e6:.6g} +/- {res.stderr['fwhm'] / 1e6:.3g}")
        report.update(res.as_dict())
    elif args.model in ("exp1", "exp2"):
        res = fit_exponential(x, y, 1 if args.model == "exp1" else 2, poisson=args.poisson)
        lines.append(res.format())
        n = 1 if args.model == "exp1" else 2
        for i in range(1, n + 1):
            lines.append(f"tau_{i}_us = {res[f'tau_{i}'] * 1e6:.6g} +/- {res.stderr[f'tau_{i}'] * 1e6:.3g}")
        report.update(res.as_dict())
    elif args.model == "peaks":
        peaks = detect_peaks(Spectrum(x, np.clip(y, 0, None)), args.min_prominence, args.min_separation_mhz * 1e6)
        lines.append(f"n_peaks = {len(peaks)}")
        lines += [f"peak = {p['center'] / 1e9:.9g} GHz, height {p['height']:.6g}" for p in peaks]
        report["peaks"] = peaks
    elif args.model == "switch":
        ts = estimate_switching_time(x, y)
        lines.append(f"switching_time_us = {ts * 1e6:.6g}")
        report["switching_time_s"] = ts
    print("\n".join(lines))
    if args.report:
        write_csv(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser():
    p = _Parser(prog="eocavity", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"eocavity {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cfg_help = f"config file or preset ({', '.join(PRESETS)}); relative names are also searched in ${CONFIG_DIR_ENV}"

    s = sub.add_parser("cqed", help="steady-state cavity-QED report")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--orientation", type=float, default=1.0, help="dipole orientation factor for the Purcell estimate")
    s.add_argument("--digits", type=int, default=4)
    s.set_defaults(func=cmd_cqed)

    s = sub.add_parser("budget", help="single-ion photon budget")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--emission", type=float, default=None, help="override emission rate, photons/s")
    s.set_defaults(func=cmd_budget)

    s = sub.add_parser("simulate", help="decay under a voltage protocol file")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--protocol", required=True)
    s.add_argument("--out", default=None, help="CSV path (stdout if omitted)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("protocol", help="detune-wait-retune storage protocol")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--t-pump-us", type=float, default=0.0)
    s.add_argument("--t-detune-us", type=float, required=True)
    s.add_argument("--t-wait-us", type=float, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--detune-ghz", type=float)
    g.add_argument("--v-off", type=float)
    s.add_argument("--duration-us", type=float, default=1000.0)
    s.add_argument("--dt-us", type=float, default=0.1)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_protocol)

    s = sub.add_parser("transmission", help="biased cavity transmission spectrum")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--bias-v", type=float, default=0.0)
    s.add_argument("--scan-ghz", type=float, default=10.0)
    s.add_argument("--step-mhz", type=float, default=10.0)
    s.add_argument("--depth", type=float, default=0.8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_transmission)

    s = sub.add_parser("synth-ple", help="Monte Carlo PLE spectra, one CSV per set-point")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--plan", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--noise", dest="noise", action="store_true", default=None)
    s.add_argument("--no-noise", dest="noise", action="store_false")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth_ple)

    s = sub.add_parser("synth-hole", help="spectral hole-burning spectrum")
    s.add_argument("--config", required=True, help=cfg_help)
    s.add_argument("--gamma-h-mhz", type=float, default=None)
    s.add_argument("--burn-offset-mhz", type=float, default=0.0)
    s.add_argument("--saturation", type=float, default=1e-3)
    s.add_argument("--scan-mhz", type=float, default=1000.0)
    s.add_argument("--step-mhz", type=float, default=1.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth_hole)

    s = sub.add_parser("fit", help="fit a CSV written by this tool")
    s.add_argument("--model", required=True, choices=["lorentzian", "gaussian", "exp1", "exp2", "peaks", "switch"])
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--column", default=None, help="value column (default depends on model)")
    s.add_argument("--poisson", action="store_true", help="Poisson-weighted residuals")
    s.add_argument("--min-prominence", type=float, default=0.05)
    s.add_argument("--min-separation-mhz", type=float, default=0.0)
    s.add_argument("--x-min", type=float, default=None, help="fit window start, in the file's abscissa units")
    s.add_argument("--x-max", type=float, default=None, help="fit window end, in the file's abscissa units")
    s.add_argument("--report", default=None, help="write a JSON report here")
    s.set_defaults(func=cmd_fit)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ValidationError, DomainError, OSError) as exc:
        print(f"eocavity: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"eocavity: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
