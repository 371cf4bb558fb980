"""Flat ``section.key = value`` experiment configuration.

Example::

    mesh.nodes = 255
    model.q = 5
    init.family = sine-mode
    init.amplitude = 1e-3
    time.dt = 1e-4
    time.t_end = 1.6
    analysis.verify_decay = true
    output.dir = runs/decay

Blank lines and ``#`` comments are ignored. Every key has a default (see
``DEFAULTS``); all problems are collected and raised together in one
:class:`~kirchhoff_well.errors.ConfigError`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .discretization import Mesh
from .errors import ConfigError, DomainError
from .evolution import Scheme, TimeStepConfig, timestep_problems
from .functionals import ModelParams, params_problems

INIT_FAMILIES = ("sine-mode", "gaussian-bump", "fourier-random", "file")

# key -> (type, default)
DEFAULTS: dict[str, tuple[type, object]] = {
    "mesh.dimension": (int, 1),
    "mesh.extent": (tuple, (1.0,)),
    "mesh.nodes": (tuple, (255,)),
    "model.a": (float, 1.0),
    "model.b": (float, 1.0),
    "model.q": (float, 5.0),
    "init.family": (str, "sine-mode"),
    "init.amplitude": (float, 1e-3),
    "init.mode": (int, 1),
    "init.seed": (int, None),
    "init.center": (float, 0.5),
    "init.width": (float, 0.1),
    "init.file": (str, ""),
    "time.dt": (float, 1e-4),
    "time.t_end": (float, 1.0),
    "time.scheme": (str, "semi-implicit"),
    "time.blowup_cap": (float, 1e6),
    "time.dt_min": (float, 1e-12),
    "time.adaptive": (bool, False),
    "time.snapshot_stride": (int, 100),
    "analysis.verify_decay": (bool, True),
    "analysis.omega_limit": (bool, False),
    "analysis.well_depth": (bool, False),
    "analysis.bounds": (bool, False),
    "analysis.bounds_s_factor": (float, 2.0),
    "analysis.bounds_samples": (int, 500),
    "analysis.gn_samples": (int, 1000),
    "analysis.gn_safety": (float, 1.1),
    "analysis.starts": (int, 8),
    "analysis.decay_slack": (float, 0.02),
    "analysis.energy_tol": (float, 1e-3),
    "output.dir": (str, "runs/default"),
    "seed": (int, 0),
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


@dataclass(frozen=True)
class InitialData:
    family: str = "sine-mode"
    amplitude: float = 1e-3
    mode: int = 1
    seed: int = 0
    center: float = 0.5
    width: float = 0.1
    file: str = ""


@dataclass(frozen=True)
class Analysis:
    verify_decay: bool = True
    omega_limit: bool = False
    well_depth: bool = False
    bounds: bool = False
    bounds_s_factor: float = 2.0
    bounds_samples: int = 500
    gn_samples: int = 1000
    gn_safety: float = 1.1
    starts: int = 8
    decay_slack: float = 0.02
    energy_tol: float = 1e-3


@dataclass(frozen=True)
class ExperimentConfig:
    mesh: Mesh
    params: ModelParams
    init: InitialData
    time: TimeStepConfig
    analysis: Analysis
    output_dir: Path
    seed: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def echo(self) -> dict:
        """Resolved key/value pairs, defaults included."""
        return dict(self.raw)


def _convert(kind: type, text: str):
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected boolean, got {text!r}")
    if kind is tuple:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    if kind is int:
        f = float(text)
        if f != int(f):
            raise ValueError(f"expected integer, got {text!r}")
        return int(f)
    return kind(text)


def read_pairs(text: str) -> tuple[dict[str, str], dict[str, int], list[str]]:
    pairs, lines, errors = {}, {}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in pairs:
            errors.append(f"line {lineno}: duplicate key {key!r} (first on line {lines[key]})")
            continue
        pairs[key] = value
        lines[key] = lineno
    return pairs, lines, errors


def parse_config(text: str, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    """Parse and validate configuration text; raise ConfigError listing every problem."""
    pairs, lines, errors = read_pairs(text)
    for k, v in (overrides or {}).items():
        pairs[k] = str(v)
        lines[k] = 0

    def where(key):
        n = lines.get(key)
        if n == 0:
            return "override: "
        return f"line {n}: " if n else ""

    values = {k: d for k, (_, d) in DEFAULTS.items()}
    for key, text_value in pairs.items():
        if key not in DEFAULTS:
            errors.append(f"{where(key)}unknown key {key!r}")
            continue
        kind = DEFAULTS[key][0]
        try:
            values[key] = _convert(kind, text_value)
        except ValueError as exc:
            errors.append(f"{where(key)}key {key!r}: {exc}")

    dim = values["mesh.dimension"]
    if dim not in (1, 2):
        errors.append(f"{where('mesh.dimension')}mesh.dimension must be 1 or 2, got {dim}")
        dim = 1
    extent = tuple(values["mesh.extent"])
    nodes = tuple(values["mesh.nodes"])
    if len(extent) == 1:
        extent = extent * dim
    if len(nodes) == 1:
        nodes = nodes * dim
    mesh = None
    if len(extent) != dim or len(nodes) != dim:
        errors.append(f"mesh.extent and mesh.nodes need {dim} entries")
    elif any(n != int(n) or n < 3 for n in nodes):
        errors.append(f"{where('mesh.nodes')}mesh.nodes must be integers >= 3, got {nodes}")
    else:
        try:
            mesh = Mesh(extent, tuple(int(n) for n in nodes))
        except DomainError as exc:
            errors.append(f"{where('mesh.extent')}{exc}")

    a, b, q = values["model.a"], values["model.b"], values["model.q"]
    for msg in params_problems(a, b, q, dim):
        key = msg.split()[0]
        errors.append(f"{where(key)}{msg}")

    if values["init.family"] not in INIT_FAMILIES:
        errors.append(f"{where('init.family')}init.family must be one of {INIT_FAMILIES}, got {values['init.family']!r}")
    if values["init.family"] == "file" and not values["init.file"]:
        errors.append("init.family = file requires init.file")
    if values["init.mode"] < 1:
        errors.append(f"{where('init.mode')}init.mode must be >= 1")
    if not values["init.width"] > 0:
        errors.append(f"{where('init.width')}init.width must be > 0")

    try:
        scheme = Scheme(values["time.scheme"])
    except ValueError:
        errors.append(f"{where('time.scheme')}time.scheme must be one of {[s.value for s in Scheme]}")
        scheme = Scheme.SEMI_IMPLICIT
    tcfg_kwargs = dict(
        dt=values["time.dt"],
        t_end=values["time.t_end"],
        scheme=scheme,
        blowup_cap=values["time.blowup_cap"],
        dt_min=values["time.dt_min"],
        adaptive=values["time.adaptive"],
        snapshot_stride=values["time.snapshot_stride"],
    )
    for msg in timestep_problems(
        *(tcfg_kwargs[k] for k in ("dt", "t_end", "blowup_cap", "dt_min", "snapshot_stride"))
    ):
        errors.append(f"{where(msg.split()[0])}{msg}")

    an = Analysis(
        **{k.split(".", 1)[1]: values[k] for k in DEFAULTS if k.startswith("analysis.")}
    )
    if an.bounds_s_factor <= 1:
        errors.append("analysis.bounds_s_factor must be > 1")
    if an.starts < 1 or an.bounds_samples < 1 or an.gn_samples < 1:
        errors.append("analysis.starts, bounds_samples and gn_samples must be >= 1")

    if errors:
        raise ConfigError(errors)

    seed = values["seed"]
    init = InitialData(
        family=values["init.family"],
        amplitude=values["init.amplitude"],
        mode=values["init.mode"],
        seed=seed if values["init.seed"] is None else values["init.seed"],
        center=values["init.center"],
        width=values["init.width"],
        file=values["init.file"],
    )
    resolved = {k: values[k] for k in DEFAULTS}
    resolved["init.seed"] = init.seed
    return ExperimentConfig(
        mesh=mesh,
        params=ModelParams(a, b, q, dim),
        init=init,
        time=TimeStepConfig(**tcfg_kwargs),
        analysis=an,
        output_dir=Path(values["output.dir"]),
        seed=seed,
        raw=resolved,
    )


def load_config(path, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), overrides)
