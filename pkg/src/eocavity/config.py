"""Device configuration files and the two shipped cavity presets.

Configs are INI files; every key below may be given, most have defaults::

    [cavity]     f0_thz, q, mode_volume
    [emitter]    tau0_us, b0, lambda_nm, gamma_h_mhz, inhom_fwhm_ghz, diffusion_fwhm_mhz
    [actuator]   coeff_mhz_per_v, vmax_v, tau_sw_us
    [chain]      eta_c, eta_o, eta_e, eta_m, eta_chopper, eta_d
    [cqed]       g_mhz (explicit coupling), tau_c_us (measured cavity lifetime)
    [populations] weights, c0 (comma separated, same length)

If ``cavity.f0_thz`` is missing it is computed from ``emitter.lambda_nm``.
The coupling ``g`` is taken from ``cqed.g_mhz`` when present, otherwise it
is inferred from ``cqed.tau_c_us``. Without a ``[populations]`` section the
device has a single sub-population at the device cooperativity.
"""
from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .budget import DetectionChain
from .cqed import cooperativity, coupling_from_lifetimes
from .dynamics import DEFAULT_TAU_SW, Subpopulation, TuningActuator
from .units import CavityParams, CqedParams, EmitterParams, ValidationError, freq_from_wavelength

__all__ = ["DeviceConfig", "PRESETS", "CONFIG_DIR_ENV", "load_config", "parse_config", "parse_list"]

CONFIG_DIR_ENV = "EOCAVITY_CONFIG_DIR"
PRESETS = ("cavity-A", "cavity-B")


def parse_list(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


@dataclass(frozen=True)
class DeviceConfig:
    cavity: CavityParams
    emitter: EmitterParams
    actuator: TuningActuator = field(default_factory=TuningActuator)
    chain: DetectionChain = field(default_factory=DetectionChain)
    g: float | None = None
    tau_c: float | None = None
    populations: tuple = ()
    name: str = "custom"
    source_text: str = ""

    def __post_init__(self):
        if self.g is None and self.tau_c is None:
            raise ValidationError("config needs cqed.g_mhz or cqed.tau_c_us")

    @property
    def coupling(self):
        if self.g is not None:
            return self.g
        return coupling_from_lifetimes(self.emitter.tau0, self.tau_c, self.cavity.kappa)

    def cqed_params(self):
        return CqedParams(self.coupling, self.cavity.kappa, self.emitter.gamma0)

    @property
    def cooperativity(self):
        return cooperativity(self.cqed_params())

    def subpopulations(self):
        if self.populations:
            return list(self.populations)
        return [Subpopulation(1.0, self.cooperativity)]

    def canonical_text(self):
        """Resolved parameters, one ``section.key = value`` per line, in fixed order."""
        c, e, a, ch = self.cavity, self.emitter, self.actuator, self.chain
        rows = [
            ("cavity.f0_thz", c.f0 / 1e12),
            ("cavity.q", c.q_factor),
            ("cavity.mode_volume", c.mode_volume),
            ("emitter.tau0_us", e.tau0 * 1e6),
            ("emitter.b0", e.b0),
            ("emitter.lambda_nm", e.lambda0 * 1e9),
            ("emitter.gamma_h_mhz", e.gamma_h / 1e6),
            ("emitter.inhom_fwhm_ghz", e.inhom_fwhm / 1e9),
            ("emitter.diffusion_fwhm_mhz", e.diffusion_fwhm / 1e6),
            ("actuator.coeff_mhz_per_v", a.coeff / 1e6),
            ("actuator.vmax_v", a.v_max),
            ("actuator.tau_sw_us", a.tau_sw * 1e6),
        ]
        rows += [(f"chain.{k}", v) for k, v in ch.stages()]
        rows.append(("cqed.g_mhz", self.coupling / 1e6))
        if self.tau_c is not None:
            rows.append(("cqed.tau_c_us", self.tau_c * 1e6))
        for i, p in enumerate(self.subpopulations()):
            rows.append((f"populations.{i}", f"{p.weight!r}:{p.c0!r}"))
        return "\n".join(f"{k} = {v!r}" if not isinstance(v, str) else f"{k} = {v}" for k, v in rows)

    @property
    def digest(self):
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def _get(cp, section, key, default=None, scale=1.0):
    if cp.has_option(section, key):
        try:
            return float(cp.get(section, key)) * scale
        except ValueError as exc:
            raise ValidationError(f"{section}.{key}: {exc}") from None
    if default is None:
        return None
    return default


def parse_config(text, name="custom"):
    """Build a :class:`DeviceConfig` from INI text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"cannot parse config: {exc}") from None
    known = {"cavity", "emitter", "actuator", "chain", "cqed", "populations"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")

    lambda0 = _get(cp, "emitter", "lambda_nm", 980e-9, 1e-9)
    emitter = EmitterParams(
        tau0=_get(cp, "emitter", "tau0_us", 430e-6, 1e-6),
        b0=_get(cp, "emitter", "b0", 0.25),
        lambda0=lambda0,
        gamma_h=_get(cp, "emitter", "gamma_h_mhz", 41e6, 1e6),
        inhom_fwhm=_get(cp, "emitter", "inhom_fwhm_ghz", 64e9, 1e9),
        diffusion_fwhm=_get(cp, "emitter", "diffusion_fwhm_mhz", 0.0, 1e6),
    )
    f0 = _get(cp, "cavity", "f0_thz", scale=1e12)
    q = _get(cp, "cavity", "q")
    if q is None:
        raise ValidationError("cavity.q is required")
    cavity = CavityParams(
        f0=f0 if f0 is not None else freq_from_wavelength(lambda0),
        q_factor=q,
        mode_volume=_get(cp, "cavity", "mode_volume", 50.0),
    )
    actuator = TuningActuator(
        coeff=_get(cp, "actuator", "coeff_mhz_per_v", 270e6, 1e6),
        v_max=_get(cp, "actuator", "vmax_v", 300.0),
        tau_sw=_get(cp, "actuator", "tau_sw_us", DEFAULT_TAU_SW, 1e-6),
    )
    defaults = DetectionChain()
    chain = DetectionChain(**{k: _get(cp, "chain", k, v) for k, v in defaults.stages()})

    pops = ()
    if cp.has_section("populations"):
        weights = parse_list(cp.get("populations", "weights", fallback=""))
        c0 = parse_list(cp.get("populations", "c0", fallback=""))
        if not weights or len(weights) != len(c0):
            raise ValidationError("populations.weights and populations.c0 must have equal, non-zero length")
        pops = tuple(Subpopulation(w, c) for w, c in zip(weights, c0))

    return DeviceConfig(
        cavity=cavity,
        emitter=emitter,
        actuator=actuator,
        chain=chain,
        g=_get(cp, "cqed", "g_mhz", scale=1e6),
        tau_c=_get(cp, "cqed", "tau_c_us", scale=1e-6),
        populations=pops,
        name=name,
        source_text=text,
    )


def _preset_text(name):
    stem = name[:-4] if name.endswith(".cfg") else name
    if stem not in PRESETS:
        return None
    return resources.files("eocavity.presets").joinpath(f"{stem}.cfg").read_text(), stem


def load_config(ref):
    """Load a config from a path, from ``$EOCAVITY_CONFIG_DIR`` or by preset name."""
    ref = str(ref)
    candidates = [Path(ref)]
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if env_dir:
        candidates.append(Path(env_dir) / ref)
    for path in candidates:
        if path.is_file():
            return parse_config(path.read_text(), name=path.stem)
    preset = _preset_text(Path(ref).name)
    if preset is not None:
        text, stem = preset
        return parse_config(text, name=stem)
    raise ValidationError(f"config {ref!r} not found (not a file, nor one of {', '.join(PRESETS)})")
