"""Synthetic 32x32 IR frames, thermal-information metrics and frame codecs."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import CameraModel
from .errors import FrameFormatError
from .models import Pose
from .world import World

logger = logging.getLogger(__name__)

__all__ = [
    "CameraModel",
    "IrImage",
    "band_count",
    "center_window_count",
    "column_azimuths",
    "load_frame",
    "read_frame_csv",
    "read_frame_pgm",
    "render_ir",
    "row_elevations",
    "thermal_fraction",
    "write_frame_csv",
    "write_frame_pgm",
]

# Default linear range for PGM export (degC mapped to 0..255)
PGM_RANGE = (20.0, 40.0)


@dataclass
class IrImage:
    """Per-pixel temperatures; ``temps[v - 1, u - 1]`` is display column u, row v."""

    temps: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        self.temps = np.asarray(self.temps, dtype=float)
        if self.temps.ndim != 2 or self.temps.shape[0] != self.temps.shape[1]:
            raise FrameFormatError(f"frame must be square, got shape {self.temps.shape}")
        if not np.all(np.isfinite(self.temps)):
            raise FrameFormatError("frame contains non-finite temperatures")

    @property
    def size(self) -> int:
        return self.temps.shape[0]

    def pixel(self, u: int, v: int) -> float:
        return float(self.temps[v - 1, u - 1])

    def to_rows(self) -> list[list[float]]:
        return [[round(float(t), 4) for t in row] for row in self.temps]


def column_azimuths(cam: CameraModel) -> np.ndarray:
    """Bearing of each display column relative to the heading; column 1 is the left edge."""
    u = np.arange(cam.pixels)
    return cam.h_fov / 2.0 - u * cam.h_fov / (cam.pixels - 1)


def row_elevations(cam: CameraModel) -> np.ndarray:
    v = np.arange(cam.pixels)
    return cam.v_fov / 2.0 - v * cam.v_fov / (cam.pixels - 1)


def render_ir(
    world: World,
    pose: Pose,
    cam: CameraModel,
    rng: np.random.Generator,
    t: float = 0.0,
) -> IrImage:
    """Ray-cast every pixel against the active cylindrical sources.

    A pixel takes the attenuated surface temperature of the nearest source
    it hits, ambient otherwise. Rays that meet the floor, leave the arena or
    exceed ``max_range`` first see ambient. Noise is clipped to +/-3 sd.
    """
    n = cam.pixels
    temps = np.full((n, n), world.ambient, dtype=float)
    sources = world.active_sources(t)

    if sources:
        bearings = np.radians(pose.yaw + column_azimuths(cam))
        dx, dy = np.cos(bearings), np.sin(bearings)
        limits = np.array([
            min(cam.max_range, world.arena.ray_exit_distance(pose.x, pose.y, math.degrees(b)))
            for b in bearings
        ])
        tan_el = np.tan(np.radians(row_elevations(cam)))

        best_t = np.full((n, n), np.inf)
        best_temp = temps.copy()
        for src in sources:
            fx, fy = src.center[0] - pose.x, src.center[1] - pose.y
            b = fx * dx + fy * dy
            disc = b * b - (fx * fx + fy * fy - src.radius ** 2)
            root = np.sqrt(np.maximum(disc, 0.0))
            t_near = np.maximum(b - root, 0.0)
            hit = (disc >= 0) & (b + root >= 0) & (t_near <= limits)
            z = cam.height + t_near[None, :] * tan_el[:, None]
            valid = hit[None, :] & (z >= 0.0) & (z <= src.height)
            t_hit = np.where(valid, np.broadcast_to(t_near[None, :], (n, n)), np.inf)
            closer = t_hit < best_t
            if not closer.any():
                continue
            with np.errstate(divide="ignore"):
                gain = np.minimum(1.0, (cam.attenuation_d0 / t_hit) ** 2)
            apparent = world.ambient + (src.surface_temp - world.ambient) * gain
            best_t = np.where(closer, t_hit, best_t)
            best_temp = np.where(closer, apparent, best_temp)
        temps = best_temp

    noise = rng.normal(0.0, 1.0, (n, n)) if cam.noise_sd > 0 else np.zeros((n, n))
    temps = temps + cam.noise_sd * np.clip(noise, -3.0, 3.0)
    return IrImage(temps, timestamp=t)


def band_count(img: IrImage, lo: float, hi: float) -> int:
    if not lo < hi:
        raise ValueError(f"band must satisfy lo < hi, got [{lo}, {hi}]")
    return int(np.count_nonzero((img.temps >= lo) & (img.temps <= hi)))


def thermal_fraction(img: IrImage, lo: float, hi: float) -> float:
    """Share of pixels whose temperature lies in [lo, hi]."""
    return band_count(img, lo, hi) / img.temps.size


def center_window_count(
    img: IrImage,
    center: tuple[int, int],
    lo: float,
    hi: float,
    size: int = 5,
) -> int:
    """In-band pixels in the size x size window around (u, v), clipped at the borders."""
    u, v = center
    n = img.size
    if not (1 <= u <= n and 1 <= v <= n):
        raise ValueError(f"window center {center} outside [1, {n}]^2")
    half = size // 2
    rows = slice(max(0, v - 1 - half), min(n, v + half))
    cols = slice(max(0, u - 1 - half), min(n, u + half))
    window = img.temps[rows, cols]
    return int(np.count_nonzero((window >= lo) & (window <= hi)))


# ── Codecs ───────────────────────────────────────────────────


def write_frame_csv(img: IrImage, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        for row in img.temps:
            writer.writerow([f"{t:.4f}" for t in row])
    return path


def read_frame_csv(path: Path, pixels: int = 32) -> IrImage:
    rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != pixels:
                raise FrameFormatError(f"line {line_no}: expected {pixels} values, got {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise FrameFormatError(f"line {line_no}: {e}") from e
    if len(rows) != pixels:
        raise FrameFormatError(f"expected {pixels} rows, got {len(rows)}")
    return IrImage(np.array(rows))


def write_frame_pgm(img: IrImage, path: Path, t_range: tuple[float, float] = PGM_RANGE) -> Path:
    """Binary PGM with ``t_range`` mapped linearly onto 0..255."""
    lo, hi = t_range
    if not lo < hi:
        raise ValueError(f"PGM range must satisfy lo < hi, got {t_range}")
    scaled = np.clip(np.rint((img.temps - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(scaled).save(path, format="PPM")
    return path


def read_frame_pgm(path: Path, t_range: tuple[float, float] = PGM_RANGE, pixels: int = 32) -> IrImage:
    lo, hi = t_range
    try:
        with Image.open(path) as im:
            data = np.asarray(im.convert("L"), dtype=float)
    except (OSError, ValueError) as e:
        raise FrameFormatError(f"{path}: {e}") from e
    if data.shape != (pixels, pixels):
        raise FrameFormatError(f"expected a {pixels}x{pixels} image, got {data.shape[1]}x{data.shape[0]}")
    return IrImage(lo + data / 255.0 * (hi - lo))


def load_frame(path: Path, t_range: tuple[float, float] = PGM_RANGE, pixels: int = 32) -> IrImage:
    """Read a frame from CSV or PGM, chosen by file extension."""
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return read_frame_csv(path, pixels)
    if suffix in (".pgm", ".pnm"):
        return read_frame_pgm(path, t_range, pixels)
    raise FrameFormatError(f"unsupported frame format {suffix!r} (use .csv or .pgm)")
