"""Run configuration: TOML parsing, validation, serialization and presets.

Numeric lists may be written either as explicit arrays or as
``{start = .., stop = .., step = ..}`` tables (stop inclusive). Parsed
configs always hold explicit tuples, so serialize -> parse is idempotent.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

COMMANDS = ("transport", "fisher", "estimate", "scaling", "transition")
DECOHERENCE_MODES = ("none", "uniform", "per_qubit", "custom")
LIKELIHOOD_SOURCES = ("closed", "open", "rebuilt")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def _range(value, name: str) -> tuple[float, ...]:
    if isinstance(value, dict):
        try:
            start, stop, step = float(value["start"]), float(value["stop"]), float(value["step"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{name}: range tables need numeric start, stop and step") from None
        if step == 0 or (stop - start) / step < 0:
            raise ConfigError(f"{name}: step must move start toward stop")
        n = int(round((stop - start) / step))
        return tuple(round(start + i * step, 10) for i in range(n + 1))
    if isinstance(value, (list, tuple)):
        try:
            return tuple(float(x) for x in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{name}: expected a list of numbers") from None
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return (float(value),)
    raise ConfigError(f"{name}: expected a number, a list or a range table")


def _ints(value, name: str) -> tuple[int, ...]:
    if isinstance(value, int) and not isinstance(value, bool):
        return (value,)
    if isinstance(value, (list, tuple)) and all(isinstance(x, int) and not isinstance(x, bool) for x in value):
        return tuple(value)
    raise ConfigError(f"{name}: expected an integer or a list of integers")


@dataclass(frozen=True)
class ModelSection:
    L: int = 9
    k: int = 1
    J: float = -8.0
    h: tuple[float, ...] = (-3.0,)
    initial: tuple[int, ...] = ()


@dataclass(frozen=True)
class DecoherenceSection:
    mode: str = "per_qubit"
    T1: tuple[float, ...] = ()
    T2star: tuple[float, ...] = ()
    dt: float = 0.1


@dataclass(frozen=True)
class ReadoutSection:
    apply: bool = False
    F0: tuple[float, ...] = ()
    F1: tuple[float, ...] = ()


@dataclass(frozen=True)
class FisherSection:
    eps: float = 0.1
    shots: int = 250_000
    repetitions: int = 25
    open: bool = False


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    times: tuple[float, ...]


@dataclass(frozen=True)
class EstimateSection:
    true_h: tuple[float, ...] = tuple(float(h) for h in range(-30, 1))
    grid: tuple[float, float, float] = (-30.0, 0.0, 0.1)
    M: int = 60
    repetitions: int = 50
    likelihood: str = "closed"
    calibration_shots: int = 45_000
    protocols: tuple[ProtocolSpec, ...] = (
        ProtocolSpec("three-time", (80.0, 100.0, 140.0)),
        ProtocolSpec("single-80", (80.0,)),
        ProtocolSpec("single-100", (100.0,)),
        ProtocolSpec("single-140", (140.0,)),
    )


@dataclass(frozen=True)
class ScalingSection:
    h: float = -30.0
    K: tuple[int, ...] = (5,)
    spacing: float = 5.0
    first_center: float = 100.0
    center_step: float = 5.0
    horizon: float = 350.0
    shots_per_time: int = 100
    groups: int = 200
    grid: tuple[float, float, float] = (-32.0, -28.0, 0.002)
    open: bool = False
    rolling_window: float = 200.0
    rolling_step: float = 100.0


@dataclass(frozen=True)
class TransitionSection:
    L: tuple[int, ...] = (5, 7, 9, 11)
    h: tuple[float, ...] = tuple(float(h) for h in range(-30, 1))
    horizon: float = 2000.0
    dt: float = 5.0
    tail_fraction: float = 0.25
    tolerance: float = 0.05


@dataclass(frozen=True)
class RunConfig:
    command: str = "transport"
    seed: int = 20240501
    threads: int = 1
    out: str = "out"
    preset: str = ""
    model: ModelSection = field(default_factory=ModelSection)
    times: tuple[float, ...] = tuple(float(t) for t in range(0, 351, 5))
    decoherence: DecoherenceSection = field(default_factory=DecoherenceSection)
    readout: ReadoutSection = field(default_factory=ReadoutSection)
    fisher: FisherSection = field(default_factory=FisherSection)
    estimate: EstimateSection = field(default_factory=EstimateSection)
    scaling: ScalingSection = field(default_factory=ScalingSection)
    transition: TransitionSection = field(default_factory=TransitionSection)


_SECTIONS = {
    "model": ModelSection, "decoherence": DecoherenceSection, "readout": ReadoutSection,
    "fisher": FisherSection, "estimate": EstimateSection, "scaling": ScalingSection,
    "transition": TransitionSection,
}
_RUNTIME_ONLY = ("threads", "out")


def _coerce(cls, name: str, table: dict) -> Any:
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, value in table.items():
        label = f"{name}.{key}"
        default = getattr(cls(), key)
        if key == "protocols":
            out[key] = _protocols(value, label)
        elif key in ("initial",) or (key in ("L", "K") and isinstance(default, tuple)):
            out[key] = _ints(value, label)
        elif key == "grid":
            out[key] = _grid(value, label)
        elif isinstance(default, tuple):
            out[key] = _range(value, label)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{label}: expected true/false")
            out[key] = value
        elif isinstance(default, int):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{label}: expected an integer")
            out[key] = value
        elif isinstance(default, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(f"{label}: expected a number")
            out[key] = float(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{label}: expected a string")
            out[key] = value
    return cls(**out)


def _grid(value, label: str) -> tuple[float, float, float]:
    try:
        if isinstance(value, dict):
            return float(value["start"]), float(value["stop"]), float(value["step"])
        if isinstance(value, list) and len(value) == 3:
            return tuple(float(v) for v in value)
    except (KeyError, TypeError, ValueError):
        pass
    raise ConfigError(f"{label}: expected [start, stop, step] or a range table")


def _protocols(value, label: str) -> tuple[ProtocolSpec, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{label}: expected a non-empty array of tables")
    out = []
    for entry in value:
        if not isinstance(entry, dict) or set(entry) != {"name", "times"} or not isinstance(entry["name"], str):
            raise ConfigError(f"{label}: each protocol needs exactly 'name' and 'times'")
        out.append(ProtocolSpec(entry["name"], _range(entry["times"], f"{label}.times")))
    return tuple(out)


def from_dict(data: dict) -> RunConfig:
    data = copy.deepcopy(data)
    base: dict[str, Any] = {}
    preset = data.pop("preset", "")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}")
        base = copy.deepcopy(PRESETS[preset])
    merged = _merge(base, data)
    merged["preset"] = preset
    top = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - top
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for key, value in merged.items():
        if key in _SECTIONS:
            kwargs[key] = _coerce(_SECTIONS[key], key, value)
        elif key == "times":
            kwargs[key] = _range(value, "times")
        elif key in ("seed", "threads"):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{key} must be an integer")
            kwargs[key] = value
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string")
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def validate(cfg: RunConfig) -> None:
    m = cfg.model
    if cfg.command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")
    if not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if m.L < 1 or not 0 <= m.k <= m.L:
        raise ConfigError("model needs L >= 1 and 0 <= k <= L")
    if m.initial and (len(m.initial) != m.k or len(set(m.initial)) != m.k
                      or any(not 1 <= j <= m.L for j in m.initial)):
        raise ConfigError(f"model.initial must list {m.k} distinct sites in 1..{m.L}")
    if not m.initial and m.k not in (1, 2):
        raise ConfigError("model.initial is required unless k is 1 or 2")
    if not m.h:
        raise ConfigError("model.h must hold at least one value")
    if any(t < 0 for t in cfg.times) or list(cfg.times) != sorted(cfg.times):
        raise ConfigError("times must be nonnegative and sorted")
    d = cfg.decoherence
    if d.mode not in DECOHERENCE_MODES:
        raise ConfigError(f"decoherence.mode must be one of {', '.join(DECOHERENCE_MODES)}")
    if d.mode == "per_qubit" and m.L != 9 and not d.T1:
        raise ConfigError("per-qubit device coherence times exist for L = 9 only; use mode='uniform' or 'custom'")
    if d.mode == "custom" and (len(d.T1) != m.L or len(d.T2star) != m.L):
        raise ConfigError("custom decoherence needs T1 and T2star lists of length L")
    if d.dt <= 0:
        raise ConfigError("decoherence.dt must be positive")
    r = cfg.readout
    if (r.F0 or r.F1) and (len(r.F0) != m.L or len(r.F1) != m.L):
        raise ConfigError("readout F0 and F1 need one entry per qubit")
    if r.apply and not r.F0 and m.L != 9:
        raise ConfigError("device readout fidelities exist for L = 9 only; give F0 and F1")
    f = cfg.fisher
    if f.eps <= 0 or f.shots < 1 or f.repetitions < 2:
        raise ConfigError("fisher needs eps > 0, shots >= 1 and repetitions >= 2")
    e = cfg.estimate
    lo, hi, step = e.grid
    if step <= 0 or hi <= lo:
        raise ConfigError("estimate.grid must be [lo, hi, step] with lo < hi and step > 0")
    if e.M < 0 or e.repetitions < 2:
        raise ConfigError("estimate needs M >= 0 and repetitions >= 2")
    if e.likelihood not in LIKELIHOOD_SOURCES:
        raise ConfigError(f"estimate.likelihood must be one of {', '.join(LIKELIHOOD_SOURCES)}")
    if e.likelihood == "rebuilt" and e.calibration_shots < 1:
        raise ConfigError("estimate.calibration_shots must be positive")
    if len({p.name for p in e.protocols}) != len(e.protocols):
        raise ConfigError("protocol names must be unique")
    for p in e.protocols:
        if not p.times or any(t < 0 for t in p.times):
            raise ConfigError(f"protocol {p.name!r} needs nonnegative times")
    s = cfg.scaling
    if any(K < 3 for K in s.K) or s.spacing <= 0 or s.center_step <= 0:
        raise ConfigError("scaling needs K >= 3 and positive spacing/center_step")
    if s.groups in (1, 2, 3) or s.groups < 0 or s.shots_per_time < 1:
        raise ConfigError("scaling.groups must be 0 (skip the Bayes battery) or >= 4")
    if s.grid[2] <= 0 or s.grid[1] <= s.grid[0]:
        raise ConfigError("scaling.grid must be [lo, hi, step] with lo < hi and step > 0")
    t = cfg.transition
    if not t.L or any(L < 2 for L in t.L) or t.horizon <= 0 or t.dt <= 0 or not 0 < t.tail_fraction <= 0.5:
        raise ConfigError("transition needs L >= 2, positive horizon/dt and 0 < tail_fraction <= 0.5")


def to_dict(cfg: RunConfig) -> dict:
    raw = asdict(cfg)

    def clean(x):
        if isinstance(x, dict):
            return {k: clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        return x

    return clean(raw)


def dumps(cfg: RunConfig) -> str:
    data = to_dict(cfg)
    if not data["preset"]:
        data.pop("preset")
    return tomli_w.dumps(data)


def loads(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return from_dict(data)


def load(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 over everything that affects results (not threads or output dir)."""
    data = to_dict(cfg)
    for key in _RUNTIME_ONLY + ("preset",):
        data.pop(key)
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    new = replace(cfg, **{k: v for k, v in changes.items() if v is not None})
    validate(new)
    return new


PRESETS: dict[str, dict] = {
    "fig2a": {
        "command": "transport",
        "model": {"L": 9, "k": 1, "h": [-3.0], "initial": [5]},
        "times": {"start": 0, "stop": 350, "step": 5},
        "decoherence": {"mode": "per_qubit"},
        "readout": {"apply": True},
    },
    "fig2g": {
        "command": "fisher",
        "model": {"L": 9, "k": 1, "h": [-3.0, -6.0, -20.0], "initial": [5]},
        "times": {"start": 0, "stop": 350, "step": 5},
        "decoherence": {"mode": "per_qubit"},
        "fisher": {"open": True},
    },
    "fig3e": {
        "command": "estimate",
        "model": {"L": 9, "k": 1, "initial": [5]},
        "estimate": {"M": 60, "repetitions": 50},
    },
    "fig4_k5": {
        "command": "scaling",
        "model": {"L": 9, "k": 1, "initial": [5]},
        "scaling": {"h": -30.0, "K": [5]},
    },
    "fig4_k7": {
        "command": "scaling",
        "model": {"L": 9, "k": 1, "initial": [5]},
        "scaling": {"h": -30.0, "K": [7]},
    },
    "fig5d": {
        "command": "estimate",
        "model": {"L": 9, "k": 2, "initial": [3, 7]},
        "estimate": {"M": 75, "repetitions": 30,
                     "protocols": [{"name": "three-time", "times": [80.0, 100.0, 140.0]}]},
    },
    "sm_s6": {
        "command": "transition",
        "model": {"k": 1},
        "transition": {"L": [5, 7, 9, 11]},
    },
    "sm_s6_double": {
        "command": "transition",
        "model": {"k": 2},
        "transition": {"L": [5, 7, 9, 11]},
    },
    "sm_s7": {
        "command": "scaling",
        "model": {"L": 9, "k": 1, "initial": [5]},
        "decoherence": {"mode": "uniform"},
        "scaling": {"h": -30.0, "K": [5, 7], "groups": 0, "open": True, "horizon": 2000.0},
    },
}


def preset(name: str) -> RunConfig:
    return from_dict({"preset": name})
