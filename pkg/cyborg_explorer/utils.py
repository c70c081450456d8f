"""Utility functions for angles, formatting and deterministic artifact output."""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

# Decimal places kept for floats written to JSON; keeps reruns byte-identical
# across platforms whose last-ulp formatting may differ.
JSON_FLOAT_DIGITS = 9


def normalize_angle(deg: float) -> float:
    """Wrap an angle in degrees into (-180, 180].

    Examples:
        270 -> -90
        -181 -> 179
        180 -> 180
    """
    if not math.isfinite(deg):
        raise ValueError(f"angle must be finite, got {deg!r}")
    wrapped = math.fmod(deg, 360.0)
    if wrapped <= -180.0:
        wrapped += 360.0
    elif wrapped > 180.0:
        wrapped -= 360.0
    return wrapped + 0.0  # -0.0 -> 0.0


def angle_difference(target_deg: float, current_deg: float) -> float:
    """Signed smallest rotation taking ``current_deg`` onto ``target_deg``."""
    return normalize_angle(target_deg - current_deg)


def bearing_deg(dx: float, dy: float) -> float:
    """World bearing of a displacement, counter-clockwise from +x."""
    return math.degrees(math.atan2(dy, dx))


def unit_vector(deg: float) -> tuple[float, float]:
    rad = math.radians(deg)
    return math.cos(rad), math.sin(rad)


def format_duration(seconds: float) -> str:
    if seconds < 60:
        return f"{int(seconds)}s"
    if seconds < 3600:
        return f"{int(seconds // 60)}m {int(seconds % 60)}s"
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    return f"{hours}h {minutes}m"


def to_jsonable(value: Any) -> Any:
    """Convert dataclass-ish trees (enums, numpy scalars, tuples) to JSON types."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if not math.isfinite(f):
            return None
        return round(f, JSON_FLOAT_DIGITS) + 0.0
    if isinstance(value, Path):
        return str(value)
    return value


def dumps_json(obj: Any) -> str:
    """Serialize with sorted keys and rounded floats."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def mean_sd(values: list[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for fewer than two values)."""
    if not values:
        return math.nan, math.nan
    arr = np.asarray(values, dtype=float)
    sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd
