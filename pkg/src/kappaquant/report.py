"""JSON run reports."""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA_VERSION = 1
WALL_CLOCK_KEY = "wall_clock_seconds"


def jsonable(obj):
    """Convert report payloads to plain JSON types.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``
    so that the output stays strict JSON.
    """
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def build_report(command: str, body: dict, wall_clock: float) -> dict:
    report = {"schema_version": SCHEMA_VERSION, "tool": "kappaquant", "tool_version": __version__, "command": command}
    report.update(body)
    report[WALL_CLOCK_KEY] = wall_clock
    return jsonable(report)


def dumps(report: dict) -> str:
    # float repr is the shortest string that round-trips exactly.
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_text(dumps(report), encoding="utf-8")
