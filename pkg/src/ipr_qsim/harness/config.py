"""Experiment configuration: YAML file < CLI overrides, validated before any work."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..errors import ConfigError

EXPERIMENTS = ("oat_sweep", "pxp_sweep", "aklt_sweep", "m_convergence", "bound_study")
MODES = ("exact", "sampled")


def default_t_grid() -> list[float]:
    return [k * math.pi / 100 for k in range(51)]


def default_pxp_h_grid() -> list[float]:
    return [round(0.05 * k, 10) for k in range(21)]


def default_aklt_h_grid() -> list[float]:
    return [0.0] + [float(x) for x in np.logspace(-2, math.log10(50.0), 24)]


@dataclass
class ExperimentConfig:
    experiment: str
    L: int | None = None
    q: int = 2
    d: int | None = None
    h: float = 0.655
    h_grid: list[float] | None = None
    t_grid: list[float] | None = None
    m_list: list[int] | None = None
    t: float | None = None
    n_T: int = 10
    periodic: bool = True
    evolution: str = "trotter"
    mode: str = "exact"
    n_shots: int | None = None
    seed: int = 0
    n_trials: int = 500
    n_qubits: int = 4
    n_T_list: list[int] = field(default_factory=lambda: [2, 4, 8, 16, 32, 64])
    output: str = "results"

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_DEFAULTS = {
    "oat_sweep": {"L": 4, "t_grid": default_t_grid},
    "pxp_sweep": {"L": 8, "t": 1.0, "h_grid": default_pxp_h_grid, "m_list": [3, 4, 5]},
    "aklt_sweep": {"L": 4, "d": 3, "h_grid": default_aklt_h_grid},
    "m_convergence": {"L": 6, "m_list": [1, 2, 3, 4, 5, 6, 7, 8], "evolution": "exact"},
    "bound_study": {"m_list": [2, 3, 4, 5, 6]},
}


def _grid(value, name: str) -> list[float]:
    """Accept a list or ``{start, stop, step}`` / ``{start, stop, num[, spacing: log]}``."""
    if isinstance(value, dict):
        try:
            start, stop = float(value["start"]), float(value["stop"])
        except KeyError as exc:
            raise ConfigError(f"{name}: grid mapping needs start and stop") from exc
        if "step" in value:
            step = float(value["step"])
            if not step > 0:
                raise ConfigError(f"{name}: step must be positive")
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(n)]
        num = int(value.get("num", 0))
        if value.get("spacing", "linear") == "log":
            return [float(x) for x in np.logspace(math.log10(start), math.log10(stop), num)]
        return [float(x) for x in np.linspace(start, stop, num)]
    if isinstance(value, (int, float)):
        return [float(value)]
    return [float(v) for v in value]


def build_config(raw: dict[str, Any], overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    merged = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            merged[k] = v
    name = merged.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, default in _DEFAULTS[name].items():
        if merged.get(key) is None:
            merged[key] = default() if callable(default) else default
    for key in ("h_grid", "t_grid"):
        if merged.get(key) is not None:
            merged[key] = _grid(merged[key], key)
    if merged.get("m_list") is not None:
        merged["m_list"] = [int(m) for m in merged["m_list"]]
    cfg = ExperimentConfig(**merged)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    for key in ("h_grid", "t_grid"):
        grid = getattr(cfg, key)
        if grid is not None:
            if not grid:
                raise ConfigError(f"{key} is empty")
            if not all(math.isfinite(x) for x in grid):
                raise ConfigError(f"{key} contains NaN or inf")
    if cfg.m_list is not None:
        if not cfg.m_list:
            raise ConfigError("m_list is empty")
        if min(cfg.m_list) < 1:
            raise ConfigError("every m must be >= 1")
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if cfg.mode == "sampled":
        if cfg.n_shots is None:
            raise ConfigError("sampled mode needs n_shots")
        if cfg.seed is None:
            raise ConfigError("sampled mode needs a seed")
    if cfg.n_shots is not None and cfg.n_shots < 1:
        raise ConfigError("n_shots must be positive")
    if cfg.evolution not in ("exact", "trotter"):
        raise ConfigError("evolution must be 'exact' or 'trotter'")
    if cfg.q < 2:
        raise ConfigError("q must be >= 2")
    if cfg.n_T < 1 or any(n < 1 for n in cfg.n_T_list):
        raise ConfigError("Trotter step counts must be >= 1")
    if cfg.t is not None and not (math.isfinite(cfg.t) and cfg.t > 0):
        raise ConfigError("t must be a positive finite number")
    if cfg.L is not None and cfg.L < 2:
        raise ConfigError("L must be >= 2")
    if cfg.n_trials < 0:
        raise ConfigError("n_trials must be >= 0")


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a key-value mapping")
    return build_config(raw, overrides)
