"""JSON run configuration: parsing, defaults and validation."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Any

from .material import MaterialError, MaterialParams, default_params, load_params
from .solver import SolverOptions
from .structure import BeamParams

SCHEMA_VERSION = 1
VARIANTS = ("hybrid", "mas", "coupled-hybrid", "coupled-mas")

DEFAULTS: dict[str, Any] = {
    "schema_version": SCHEMA_VERSION,
    "model": "coupled-hybrid",
    "material": None,
    "beam": {},
    "T_E": 298.0,
    "seed": 1,
    "input": {"type": "random-steps", "J_max": 2.0, "dwell": [2.0, 20.0]},
    "horizon": {"t_end": 100.0, "j_max": 1000000},
    "solver": {"method": "Radau", "rtol": 1e-8, "guard_tol": 1e-12, "event_tol": 1e-10},
    "output": {"format": "csv", "dt": 0.05},
    "benchmark": {"scenarios": 30, "repetitions": 3, "variants": ["hybrid", "mas"], "workers": 1},
    "isotherm": {"T_E": 315.0, "rate": 1e-4, "eps_max": 0.12, "n_samples": 1001},
    "calibration": {"curves": [], "guess": None, "free": None, "bounds": {}, "synthetic": None},
    "wire": {"eps0": None, "x_M0": 0.0, "v": 0.0},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key path."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


# sections replaced as a whole instead of merged key by key
_OPAQUE = {"input", "beam", "material", "bounds"}
SOLVER_KEYS = {"method", "rtol", "guard_tol", "event_tol", "max_step", "zeno_jumps", "zeno_window", "warm_start", "interior_checks"}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base and not (path == "solver" and key in SOLVER_KEYS):
            raise ConfigError("unknown key", where)
        if key in base and isinstance(base[key], dict) and key not in _OPAQUE and isinstance(value, dict):
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def _positive(cfg: dict, path: str):
    node = cfg
    for part in path.split("."):
        node = node[part]
    if not (isinstance(node, (int, float)) and math.isfinite(node) and node > 0):
        raise ConfigError(f"must be a positive number, got {node!r}", path)


def parse(text: str, source: str = "<config>") -> dict:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be an object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {version!r} (expected {SCHEMA_VERSION})", "schema_version")
    cfg = _merge(DEFAULTS, raw)
    validate(cfg)
    return cfg


def load(path: str | Path | None) -> dict:
    if path is None:
        cfg = copy.deepcopy(DEFAULTS)
        validate(cfg)
        return cfg
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse(text, str(path))


def validate(cfg: dict) -> None:
    if cfg["model"] not in VARIANTS:
        raise ConfigError(f"must be one of {VARIANTS}", "model")
    _positive(cfg, "T_E")
    _positive(cfg, "horizon.t_end")
    if not isinstance(cfg["horizon"]["j_max"], int) or cfg["horizon"]["j_max"] < 0:
        raise ConfigError("must be a non-negative integer", "horizon.j_max")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("must be a non-negative integer", "seed")
    inp = cfg["input"]
    kind = inp.get("type")
    if kind == "random-steps":
        dwell = inp.get("dwell", [2.0, 20.0])
        if len(dwell) != 2 or not 0 < dwell[0] <= dwell[1]:
            raise ConfigError("needs 0 < min <= max", "input.dwell")
        if inp.get("J_max", 2.0) < 0:
            raise ConfigError("must be non-negative", "input.J_max")
    elif kind == "steps":
        durations, amplitudes = inp.get("durations"), inp.get("amplitudes")
        if not durations or amplitudes is None or len(durations) != len(amplitudes):
            raise ConfigError("needs equally long non-empty 'durations' and 'amplitudes'", "input")
        if any(not d > 0 for d in durations):
            raise ConfigError("durations must be positive", "input.durations")
    elif kind == "sinusoid":
        if not inp.get("frequency", 0) > 0:
            raise ConfigError("frequency must be positive", "input.frequency")
    elif kind == "constant":
        if "value" not in inp:
            raise ConfigError("needs 'value'", "input")
    else:
        raise ConfigError("type must be random-steps, steps, sinusoid or constant", "input.type")
    out = cfg["output"]
    if out["format"] not in ("csv", "jsonl"):
        raise ConfigError("must be csv or jsonl", "output.format")
    _positive(cfg, "output.dt")
    bench = cfg["benchmark"]
    for key in ("scenarios", "repetitions", "workers"):
        if not isinstance(bench[key], int) or bench[key] < 1:
            raise ConfigError("must be an integer >= 1", f"benchmark.{key}")
    if len(bench["variants"]) != 2 or any(v not in ("hybrid", "mas") for v in bench["variants"]):
        raise ConfigError("must name two of hybrid/mas", "benchmark.variants")
    for key in ("T_E", "rate", "eps_max"):
        _positive(cfg, f"isotherm.{key}")
    _positive(cfg, "solver.rtol")


def solver_options(cfg: dict, atol) -> SolverOptions:
    try:
        return SolverOptions(atol=atol, **cfg["solver"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "solver") from None


def material(cfg: dict, base_dir: Path | None = None) -> MaterialParams:
    spec = cfg["material"]
    try:
        if spec is None:
            return default_params()
        if isinstance(spec, str):
            path = Path(spec)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_params(path)
        if isinstance(spec, dict):
            return default_params().with_values(**{("lam" if k == "lambda" else k): float(v)
                                                    for k, v in spec.items()})
    except (MaterialError, OSError, TypeError) as exc:
        raise ConfigError(str(exc), "material") from None
    raise ConfigError("must be null, a file path or an object of overrides", "material")


def beam(cfg: dict) -> BeamParams:
    try:
        return BeamParams(**cfg["beam"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "beam") from None
