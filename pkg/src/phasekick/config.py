"""Experiment configuration: TOML round-trip, canonical hashing, presets.

Config files are TOML (read with tomli); writing goes through a small
emitter restricted to this schema so the canonical form is byte-stable:
fixed section and key order, floats rendered with repr (lossless round
trip). The config hash is sha256 over that canonical form, so it is
independent of where the bundle is written.
"""

import hashlib
import math
from dataclasses import dataclass, field, replace

import tomli

from .errors import ConfigError, UnknownPresetError
from .lattice import pi_pulse_duration

__all__ = [
    "GridConfig",
    "InitialConfig",
    "PulseConfig",
    "IntegratorConfig",
    "SemiclassicalConfig",
    "SmoothingConfig",
    "ExperimentConfig",
    "canonical_toml",
    "config_hash",
    "parse_config",
    "load_config",
    "preset",
    "preset_names",
]


@dataclass(frozen=True)
class GridConfig:
    subdivision: int = 10
    extent_recoils: int = 8


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "gaussian"  # or "delocalized"
    sigma_r: float = 1.0  # ignored when delocalized
    sigma_p: float = 1.0


@dataclass(frozen=True)
class PulseConfig:
    direction: int
    rabi: float
    detuning: float
    phase: float
    t_start: float
    t_stop: float


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    sample_times: tuple = ()
    field_times: tuple = ()


@dataclass(frozen=True)
class SemiclassicalConfig:
    particles: int = 0  # 0 disables the ensemble half of a run
    seed: int = 1
    cell_r: float = 0.2
    cell_p: float = 0.1


@dataclass(frozen=True)
class SmoothingConfig:
    sigma_r: float = 2**-0.5
    sigma_p: float = 2**-0.5


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    pulses: tuple = ()
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    semiclassical: SemiclassicalConfig = field(default_factory=SemiclassicalConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)

    def override(self, dt=None, particles=None, seed=None):
        cfg = self
        if dt is not None:
            cfg = replace(cfg, integrator=replace(cfg.integrator, dt=float(dt)))
        if particles is not None:
            cfg = replace(
                cfg,
                semiclassical=replace(cfg.semiclassical, particles=int(particles)),
            )
        if seed is not None:
            cfg = replace(
                cfg, semiclassical=replace(cfg.semiclassical, seed=int(seed))
            )
        return cfg


# --- canonical TOML ----------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return repr(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError(f"non-finite float {value!r} cannot be serialized")
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {type(value).__name__} to TOML")


def canonical_toml(cfg):
    lines = ["[grid]"]
    lines.append(f"subdivision = {_fmt(cfg.grid.subdivision)}")
    lines.append(f"extent_recoils = {_fmt(cfg.grid.extent_recoils)}")
    lines.append("")
    lines.append("[initial]")
    lines.append(f"kind = {_fmt(cfg.initial.kind)}")
    if cfg.initial.kind == "gaussian":
        lines.append(f"sigma_r = {_fmt(float(cfg.initial.sigma_r))}")
    lines.append(f"sigma_p = {_fmt(float(cfg.initial.sigma_p))}")
    lines.append("")
    for p in cfg.pulses:
        lines.append("[[pulse]]")
        lines.append(f"direction = {_fmt(p.direction)}")
        lines.append(f"rabi = {_fmt(float(p.rabi))}")
        lines.append(f"detuning = {_fmt(float(p.detuning))}")
        lines.append(f"phase = {_fmt(float(p.phase))}")
        lines.append(f"t_start = {_fmt(float(p.t_start))}")
        lines.append(f"t_stop = {_fmt(float(p.t_stop))}")
        lines.append("")
    lines.append("[integrator]")
    lines.append(f"dt = {_fmt(float(cfg.integrator.dt))}")
    lines.append(
        "sample_times = " + _fmt([float(t) for t in cfg.integrator.sample_times])
    )
    lines.append(
        "field_times = " + _fmt([float(t) for t in cfg.integrator.field_times])
    )
    lines.append("")
    lines.append("[semiclassical]")
    lines.append(f"particles = {_fmt(cfg.semiclassical.particles)}")
    lines.append(f"seed = {_fmt(cfg.semiclassical.seed)}")
    lines.append(f"cell_r = {_fmt(float(cfg.semiclassical.cell_r))}")
    lines.append(f"cell_p = {_fmt(float(cfg.semiclassical.cell_p))}")
    lines.append("")
    lines.append("[smoothing]")
    lines.append(f"sigma_r = {_fmt(float(cfg.smoothing.sigma_r))}")
    lines.append(f"sigma_p = {_fmt(float(cfg.smoothing.sigma_p))}")
    lines.append("")
    return "\n".join(lines)


def config_hash(cfg):
    return hashlib.sha256(canonical_toml(cfg).encode()).hexdigest()


# --- parsing ------------------------------------------------------------------------

def _section(data, name):
    got = data.get(name, {})
    if not isinstance(got, dict):
        raise ConfigError(f"[{name}] must be a table")
    return got


def _get(table, key, types, default=None, required=False, where=""):
    if key not in table:
        if required:
            raise ConfigError(f"missing key {key!r} in {where}")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, types):
        raise ConfigError(f"{where}.{key} has wrong type {type(val).__name__}")
    return val


def parse_config(text):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    g = _section(data, "grid")
    grid = GridConfig(
        subdivision=_get(g, "subdivision", int, 10, where="grid"),
        extent_recoils=_get(g, "extent_recoils", int, 8, where="grid"),
    )

    ini = _section(data, "initial")
    kind = _get(ini, "kind", str, "gaussian", where="initial")
    if kind not in ("gaussian", "delocalized"):
        raise ConfigError(f"initial.kind must be gaussian or delocalized, got {kind!r}")
    initial = InitialConfig(
        kind=kind,
        sigma_r=float(_get(ini, "sigma_r", (int, float), math.inf, where="initial")),
        sigma_p=float(
            _get(ini, "sigma_p", (int, float), required=True, where="initial")
        ),
    )
    if kind == "delocalized":
        initial = replace(initial, sigma_r=math.inf)

    pulses = []
    for idx, tbl in enumerate(data.get("pulse", [])):
        where = f"pulse[{idx}]"
        if not isinstance(tbl, dict):
            raise ConfigError(f"{where} must be a table")
        pulses.append(
            PulseConfig(
                direction=_get(tbl, "direction", int, required=True, where=where),
                rabi=float(_get(tbl, "rabi", (int, float), required=True, where=where)),
                detuning=float(
                    _get(tbl, "detuning", (int, float), required=True, where=where)
                ),
                phase=float(_get(tbl, "phase", (int, float), 0.0, where=where)),
                t_start=float(
                    _get(tbl, "t_start", (int, float), required=True, where=where)
                ),
                t_stop=float(
                    _get(tbl, "t_stop", (int, float), required=True, where=where)
                ),
            )
        )

    itg = _section(data, "integrator")
    integrator = IntegratorConfig(
        dt=float(_get(itg, "dt", (int, float), 1e-3, where="integrator")),
        sample_times=tuple(
            float(t) for t in _get(itg, "sample_times", list, [], where="integrator")
        ),
        field_times=tuple(
            float(t) for t in _get(itg, "field_times", list, [], where="integrator")
        ),
    )

    sc = _section(data, "semiclassical")
    semiclassical = SemiclassicalConfig(
        particles=_get(sc, "particles", int, 0, where="semiclassical"),
        seed=_get(sc, "seed", int, 1, where="semiclassical"),
        cell_r=float(_get(sc, "cell_r", (int, float), 0.2, where="semiclassical")),
        cell_p=float(_get(sc, "cell_p", (int, float), 0.1, where="semiclassical")),
    )

    sm = _section(data, "smoothing")
    smoothing = SmoothingConfig(
        sigma_r=float(_get(sm, "sigma_r", (int, float), 2**-0.5, where="smoothing")),
        sigma_p=float(_get(sm, "sigma_p", (int, float), 2**-0.5, where="smoothing")),
    )

    return ExperimentConfig(
        grid=grid,
        initial=initial,
        pulses=tuple(pulses),
        integrator=integrator,
        semiclassical=semiclassical,
        smoothing=smoothing,
    )


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --- presets ------------------------------------------------------------------------

def _pulse_pair(rabi=2.0, detuning=-2.0):
    """Two back-to-back counter-propagating pi-pulses, first from the right."""
    half = pi_pulse_duration(rabi)
    return (
        PulseConfig(direction=-1, rabi=rabi, detuning=detuning, phase=0.0,
                    t_start=0.0, t_stop=half),
        PulseConfig(direction=+1, rabi=rabi, detuning=detuning, phase=0.0,
                    t_start=half, t_stop=2 * half),
    )


def _dense_times(t_end, n=65):
    return tuple(k * t_end / (n - 1) for k in range(n))


def _preset_pair_localized():
    pulses = _pulse_pair()
    t_end = pulses[-1].t_stop
    return ExperimentConfig(
        grid=GridConfig(10, 8),
        initial=InitialConfig(kind="gaussian", sigma_r=1.0, sigma_p=1.0),
        pulses=pulses,
        integrator=IntegratorConfig(
            dt=1e-3,
            sample_times=_dense_times(t_end),
            field_times=(0.0, t_end),
        ),
        semiclassical=SemiclassicalConfig(
            particles=1_000_000, seed=20260817, cell_r=0.2, cell_p=0.1
        ),
        smoothing=SmoothingConfig(2**-0.5, 2**-0.5),
    )


def _preset_pair_delocalized():
    pulses = _pulse_pair()
    t_end = pulses[-1].t_stop
    return ExperimentConfig(
        grid=GridConfig(10, 8),
        initial=InitialConfig(kind="delocalized", sigma_r=math.inf, sigma_p=1.0),
        pulses=pulses,
        integrator=IntegratorConfig(
            dt=1e-3,
            sample_times=_dense_times(t_end),
            field_times=(0.0, t_end),
        ),
        semiclassical=SemiclassicalConfig(
            particles=0, seed=20260817, cell_r=0.2, cell_p=0.1
        ),
        smoothing=SmoothingConfig(2**-0.5, 2**-0.5),
    )


def _preset_weak_pulse():
    # wide thermal cloud, one weak pulse: the quantum and test-particle
    # marginals must agree once the photon kick is small against the spread
    rabi = 0.2
    t_end = pi_pulse_duration(rabi) / 2.0
    pulses = (
        PulseConfig(direction=+1, rabi=rabi, detuning=0.0, phase=0.0,
                    t_start=0.0, t_stop=t_end),
    )
    return ExperimentConfig(
        grid=GridConfig(2, 48),
        initial=InitialConfig(kind="delocalized", sigma_r=math.inf, sigma_p=8.0),
        pulses=pulses,
        integrator=IntegratorConfig(
            dt=1e-3,
            sample_times=(0.0, t_end),
            field_times=(0.0, t_end),
        ),
        semiclassical=SemiclassicalConfig(
            particles=500_000, seed=20260817, cell_r=0.5, cell_p=1.0
        ),
        smoothing=SmoothingConfig(sigma_r=0.5, sigma_p=1.0),
    )


_PRESETS = {
    "pair-localized": (
        _preset_pair_localized,
        "gaussian cloud, two opposing pi-pulses; quantum vs 1e6 test particles",
    ),
    "pair-delocalized": (
        _preset_pair_delocalized,
        "spatially uniform thermal cloud, same pulse pair; entropy bookkeeping",
    ),
    "weak-pulse": (
        _preset_weak_pulse,
        "wide thermal cloud, one weak pulse; quantum/semiclassical marginal match",
    ),
}


def preset_names():
    return {name: desc for name, (_, desc) in _PRESETS.items()}


def preset(name):
    try:
        build, _ = _PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(_PRESETS))
        raise UnknownPresetError(f"unknown preset {name!r} (known: {known})") from None
    return build()
