"""Bounded arena, thermal sources, coverage accounting and seeded randomness."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import WorldSettings
from .errors import OutOfBoundsError
from .models import Pose, ThermalSource, Wall
from .utils import normalize_angle

logger = logging.getLogger(__name__)

__all__ = [
    "Arena",
    "CoverageGrid",
    "World",
    "coverage_fraction",
    "distance_to_nearest_wall",
    "make_rng",
    "mark_coverage",
    "normalize_angle",
    "spawn_rngs",
    "trial_seed",
]

# Inward unit normals of the four boundary walls
WALL_NORMALS: dict[Wall, tuple[float, float]] = {
    Wall.LEFT: (1.0, 0.0),
    Wall.RIGHT: (-1.0, 0.0),
    Wall.BOTTOM: (0.0, 1.0),
    Wall.TOP: (0.0, -1.0),
}


def make_rng(seed: int) -> np.random.Generator:
    """The simulator's generator: numpy PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF))


def spawn_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent child generators, so one consumer's draws never shift another's."""
    children = np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def trial_seed(base_seed: int, index: int) -> int:
    return int(base_seed) + int(index)


@dataclass
class Arena:
    width: float
    height: float
    origin: tuple[float, float] = (0.0, 0.0)
    slope: float = 0.0

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"arena size must be positive, got {self.width} x {self.height}")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    @property
    def x0(self) -> float:
        return self.origin[0]

    @property
    def y0(self) -> float:
        return self.origin[1]

    @property
    def x1(self) -> float:
        return self.origin[0] + self.width

    @property
    def y1(self) -> float:
        return self.origin[1] + self.height

    @property
    def longest(self) -> float:
        return math.hypot(self.width, self.height)

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.y0 - tol <= y <= self.y1 + tol)

    def clamp(self, x: float, y: float, inset: float = 0.0) -> tuple[float, float]:
        inset = min(inset, self.width / 2, self.height / 2)
        return (
            min(max(x, self.x0 + inset), self.x1 - inset),
            min(max(y, self.y0 + inset), self.y1 - inset),
        )

    def wall_distances(self, x: float, y: float) -> dict[Wall, float]:
        return {
            Wall.LEFT: x - self.x0,
            Wall.RIGHT: self.x1 - x,
            Wall.BOTTOM: y - self.y0,
            Wall.TOP: self.y1 - y,
        }

    def nearest_wall(self, x: float, y: float) -> tuple[Wall, float]:
        dists = self.wall_distances(x, y)
        wall = min(dists, key=dists.__getitem__)
        return wall, max(0.0, dists[wall])

    def ray_exit_distance(self, x: float, y: float, heading_deg: float, inset: float = 0.0) -> float:
        """Distance along a ray until it leaves the arena shrunk by ``inset``."""
        hx, hy = math.cos(math.radians(heading_deg)), math.sin(math.radians(heading_deg))
        t = math.inf
        if hx > 1e-12:
            t = min(t, (self.x1 - inset - x) / hx)
        elif hx < -1e-12:
            t = min(t, (self.x0 + inset - x) / hx)
        if hy > 1e-12:
            t = min(t, (self.y1 - inset - y) / hy)
        elif hy < -1e-12:
            t = min(t, (self.y0 + inset - y) / hy)
        return max(0.0, t)

    @classmethod
    def from_settings(cls, settings: WorldSettings) -> Arena:
        return cls(settings.width, settings.height, tuple(settings.origin), settings.slope)


def distance_to_nearest_wall(arena: Arena, pose: Pose) -> float:
    """Minimum distance from the pose to the four boundary segments."""
    return arena.nearest_wall(pose.x, pose.y)[1]


@dataclass
class CoverageGrid:
    arena: Arena
    cell_size: float = 0.1
    visited: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.cell_size <= 0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size}")
        # Round before ceil so 2.0 / 0.1 gives 20 cells, not 21
        self.nx = max(1, math.ceil(round(self.arena.width / self.cell_size, 6)))
        self.ny = max(1, math.ceil(round(self.arena.height / self.cell_size, 6)))
        self.visited = np.zeros((self.ny, self.nx), dtype=bool)

    @property
    def total_cells(self) -> int:
        return self.nx * self.ny

    @property
    def visited_count(self) -> int:
        return int(self.visited.sum())

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """Row/column of the cell containing (x, y); the far edges belong to the last cell."""
        if not self.arena.contains(x, y):
            raise OutOfBoundsError(
                f"position ({x:.4f}, {y:.4f}) outside arena "
                f"[{self.arena.x0}, {self.arena.x1}] x [{self.arena.y0}, {self.arena.y1}]"
            )
        col = min(self.nx - 1, max(0, int((x - self.arena.x0) / self.cell_size)))
        row = min(self.ny - 1, max(0, int((y - self.arena.y0) / self.cell_size)))
        return row, col

    def mark_points(self, xs: np.ndarray, ys: np.ndarray) -> None:
        """Vectorized marking of positions already known to lie inside the arena."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.size == 0:
            return
        cols = np.clip(((xs - self.arena.x0) / self.cell_size).astype(np.int64), 0, self.nx - 1)
        rows = np.clip(((ys - self.arena.y0) / self.cell_size).astype(np.int64), 0, self.ny - 1)
        self.visited[rows, cols] = True

    def mark_segment(self, p0: tuple[float, float], p1: tuple[float, float]) -> None:
        """Mark every cell the straight segment p0 -> p1 crosses."""
        length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
        n = max(2, int(math.ceil(length / (self.cell_size / 4))) + 1)
        s = np.linspace(0.0, 1.0, n)
        self.mark_points(p0[0] + s * (p1[0] - p0[0]), p0[1] + s * (p1[1] - p0[1]))

    def fraction(self) -> float:
        return self.visited_count / self.total_cells


def mark_coverage(grid: CoverageGrid, pose: Pose) -> CoverageGrid:
    row, col = grid.cell_of(pose.x, pose.y)
    grid.visited[row, col] = True
    return grid


def coverage_fraction(grid: CoverageGrid) -> float:
    return grid.fraction()


@dataclass
class World:
    """The arena plus its thermal sources and ambient temperature."""

    arena: Arena
    sources: list[ThermalSource] = field(default_factory=list)
    ambient: float = 25.0
    cell_size: float = 0.1

    def __post_init__(self) -> None:
        for src in self.sources:
            if src.surface_temp < self.ambient:
                raise ValueError(f"source {src.name!r} is colder than ambient ({src.surface_temp} < {self.ambient})")

    def active_sources(self, t: float) -> list[ThermalSource]:
        return [s for s in self.sources if s.is_active(t)]

    def nearest_source(self, x: float, y: float, kind=None) -> ThermalSource | None:
        candidates = [s for s in self.sources if kind is None or s.kind == kind]
        if not candidates:
            return None
        return min(candidates, key=lambda s: s.surface_distance(x, y))

    def new_grid(self) -> CoverageGrid:
        return CoverageGrid(self.arena, self.cell_size)

    def check_inside(self, pose: Pose) -> None:
        if not self.arena.contains(pose.x, pose.y):
            raise OutOfBoundsError(f"pose ({pose.x:.4f}, {pose.y:.4f}) outside arena")

    @classmethod
    def from_settings(cls, settings: WorldSettings) -> World:
        return cls(
            arena=Arena.from_settings(settings),
            sources=[s.to_source() for s in settings.sources],
            ambient=settings.ambient,
            cell_size=settings.cell_size,
        )
