"""Configuration files, CSV/JSON persistence and run manifests.

Config files are line-oriented ``key=value`` text; ``#`` starts a comment.
Physical keys map onto :class:`SystemConfig`, the rest are run parameters.
Floats are written with 17 significant digits so every CSV round-trips
exactly and files can be compared byte-wise.
"""
from __future__ import annotations

import csv
import enum
import hashlib
import io as _io
import json
import math
import os
import platform
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import Driver, Potential, SystemConfig

__all__ = [
    "ParseError", "ValidationError", "RUN_DEFAULTS", "parse_config", "load_config",
    "serialize_config", "config_to_dict", "fmt", "write_csv", "read_csv",
    "write_json", "sha256_of", "RunManifest",
]

PathLike = Union[str, os.PathLike]


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ValueError):
    pass


CONFIG_KEYS = {
    "potential": str, "driver": str, "omega": float, "e0": float, "nu": float,
    "envelope_n": int, "dt": float, "escape_x": float, "t_noreturn": float,
    "max_steps": int,
}

# run parameters shared by the subcommands
RUN_DEFAULTS: Dict[str, Any] = {
    "x0": 0.0,
    "v0": 0.0,
    "k_max": 500,
    "cutoff_periods": 500,
    "seed": 0,
}
RUN_TYPES = {"x0": float, "v0": float, "k_max": int, "cutoff_periods": int, "seed": int}


def _convert(kind, text: str):
    if kind is int:
        v = float(text)
        if not v.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(v)
    if kind is float:
        if text.lower() in ("none", ""):
            return None
        return float(text)
    return text.strip().lower()


def parse_config(text: str) -> Tuple[SystemConfig, Dict[str, Any]]:
    """Parse config text into a SystemConfig and the run parameters.

    Unknown or repeated keys raise :class:`ParseError`; values that violate
    a config invariant raise :class:`ValidationError`.
    """
    values: Dict[str, Any] = {}
    run = dict(RUN_DEFAULTS)
    seen = set()
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(no, f"expected key=value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key in seen:
            raise ParseError(no, f"duplicate key {key!r}")
        seen.add(key)
        kind = CONFIG_KEYS.get(key) or RUN_TYPES.get(key)
        if kind is None:
            raise ParseError(no, f"unknown key {key!r}")
        try:
            conv = _convert(kind, val)
        except ValueError as exc:
            raise ParseError(no, f"{key}: {exc}") from None
        if key in CONFIG_KEYS:
            values[key] = conv
        else:
            run[key] = conv
    try:
        if "potential" in values:
            values["potential"] = Potential(values["potential"])
        if "driver" in values:
            values["driver"] = Driver(values["driver"])
        cfg = SystemConfig(**values)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if run["k_max"] < 1:
        raise ValidationError("k_max >= 1")
    if run["cutoff_periods"] < 1:
        raise ValidationError("cutoff_periods >= 1")
    return cfg, run


def load_config(path: Optional[PathLike]) -> Tuple[SystemConfig, Dict[str, Any]]:
    if path is None:
        return parse_config("")
    return parse_config(Path(path).read_text())


def config_to_dict(config: SystemConfig) -> Dict[str, Any]:
    out = {}
    for f in fields(config):
        v = getattr(config, f.name)
        out[f.name] = v.value if isinstance(v, enum.Enum) else v
    return out


def serialize_config(config: SystemConfig, run: Optional[Dict[str, Any]] = None) -> str:
    lines = []
    for key, v in config_to_dict(config).items():
        lines.append(f"{key}={'none' if v is None else fmt(v)}")
    for key, v in (run or {}).items():
        if key in RUN_TYPES:
            lines.append(f"{key}={fmt(v)}")
    return "\n".join(lines) + "\n"


def fmt(v) -> str:
    """Lossless text form: 17 significant digits for floats."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: PathLike) -> Tuple[List[str], Dict[str, np.ndarray]]:
    """Header and float columns (non-numeric cells become nan)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return [], {}
    header = rows[0]
    cols: Dict[str, List[float]] = {h: [] for h in header}
    for row in rows[1:]:
        for h, cell in zip(header, row):
            try:
                cols[h].append(float(cell))
            except ValueError:
                cols[h].append(math.nan)
    return header, {h: np.array(v, dtype=float) for h, v in cols.items()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: PathLike, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def sha256_of(path: PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    run: Dict[str, Any] = field(default_factory=dict)
    code_version: str = ""
    wall_time: float = 0.0
    workers: int = 1
    outputs: Dict[str, str] = field(default_factory=dict)
    complete: bool = True

    def add_output(self, path: PathLike) -> None:
        self.outputs[Path(path).name] = sha256_of(path)

    def to_dict(self) -> dict:
        return {"command": self.command, "config": self.config, "run": self.run,
                "code_version": self.code_version, "python": platform.python_version(),
                "wall_time_s": self.wall_time, "workers": self.workers,
                "outputs": dict(sorted(self.outputs.items())), "complete": self.complete}

    def write(self, path: PathLike) -> Path:
        return write_json(path, self.to_dict())

    def verify(self, directory: PathLike) -> List[str]:
        """Names of listed outputs whose digest no longer matches."""
        d = Path(directory)
        return [n for n, h in self.outputs.items() if sha256_of(d / n) != h]
