"""CSV results and YAML run manifests."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy
import yaml

from .. import __version__
from .config import ExperimentConfig
from .experiments import ResultRow

BASE_COLUMNS = ("experiment", "variable_name", "variable", "estimator", "oracle",
                "error_bound", "std_error")


def fmt(value) -> str:
    """12 significant digits for floats, empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def columns_for(rows: Sequence[ResultRow]) -> list[str]:
    extra: list[str] = []
    for r in rows:
        for k in r.extra:
            if k not in extra:
                extra.append(k)
    return list(BASE_COLUMNS) + extra


def emit_csv(rows: Sequence[ResultRow], path: str | Path, columns: Sequence[str] | None = None) -> Path:
    """Write one line per row. Wall times are left out so reruns are byte-identical."""
    path = Path(path)
    columns = list(columns) if columns is not None else columns_for(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                record = {**{c: getattr(r, c) for c in BASE_COLUMNS}, **r.extra}
                w.writerow([fmt(record.get(c)) for c in columns])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return path


def emit_timings(rows: Sequence[ResultRow], path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "m", "wall_ms"])
            for r in rows:
                w.writerow([fmt(r.variable), fmt(r.extra.get("m")), f"{r.wall_ms:.3f}"])
    except OSError as exc:
        raise OSError(f"cannot write timings to {path}: {exc}") from exc
    return path


def run_id(cfg: ExperimentConfig) -> str:
    """Content hash of the canonical config (output location excluded), short git style."""
    content = {k: v for k, v in cfg.to_dict().items() if k != "output"}
    blob = json.dumps(content, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def write_manifest(cfg: ExperimentConfig, rid: str, path: str | Path,
                   summary: dict | None = None) -> Path:
    path = Path(path)
    doc = {
        "run_id": rid,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "versions": {
            "ipr_qsim": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if summary:
        doc["summary"] = summary
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(doc, sort_keys=False))
    except OSError as exc:
        raise OSError(f"cannot write manifest to {path}: {exc}") from exc
    return path
