"""Phase I destination generation for the stochastic exploration strategies."""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from .config import StrategyParams
from .models import Destination, Pose, Strategy
from .world import WALL_NORMALS, Arena

logger = logging.getLogger(__name__)


def levy_step(
    rng: np.random.Generator,
    min_step: float = 0.5,
    mu: float = 2.0,
    max_step: float = 30.0,
) -> float:
    """Bounded Pareto step, p(l) ~ l^-mu on [min_step, max_step], by inverse CDF."""
    if mu <= 1.0:
        raise ValueError(f"mu must be > 1, got {mu}")
    a = mu - 1.0
    lo = min_step ** -a
    hi = 0.0 if math.isinf(max_step) else max_step ** -a
    u = rng.random()
    return (lo - u * (lo - hi)) ** (-1.0 / a)


def _params_for(strategy: Strategy | StrategyParams) -> StrategyParams:
    if isinstance(strategy, StrategyParams):
        return strategy
    return StrategyParams(name=Strategy(strategy))


def step_length(strategy: Strategy | StrategyParams, rng: np.random.Generator) -> float:
    params = _params_for(strategy)
    match params.name:
        case Strategy.FIXED_LENGTH:
            return params.fixed_step
        case Strategy.LEVY_WALK:
            return levy_step(rng, params.min_step, params.levy_mu, params.levy_max)
        case Strategy.UNIFORM:
            return float(rng.uniform(params.min_step, params.uniform_max))
        case Strategy.BROWNIAN:
            return params.brownian_step
    raise ValueError(f"strategy {params.name.value!r} does not generate destinations")


def clip_target(
    arena: Arena,
    x: float,
    y: float,
    direction: float,
    distance: float,
    inset: float = 0.10,
) -> tuple[float, float]:
    """Cut the ray at the arena shrunk by ``inset`` and clamp the end point into it."""
    t = min(distance, arena.ray_exit_distance(x, y, direction, inset=inset))
    rad = math.radians(direction)
    return arena.clamp(x + t * math.cos(rad), y + t * math.sin(rad), inset=inset)


def next_destination(
    strategy: Strategy | StrategyParams,
    pose: Pose,
    arena: Arena,
    rng: np.random.Generator,
) -> Destination:
    """Uniform direction in [0, 360), strategy-dependent distance, clipped target."""
    params = _params_for(strategy)
    direction = float(rng.uniform(0.0, 360.0))
    distance = step_length(params, rng)
    target = clip_target(arena, pose.x, pose.y, direction, distance, inset=params.wall_margin)
    return Destination(target=target, origin_pose=replace(pose), direction=direction, distance=distance)


def wall_redirect(
    pose: Pose,
    arena: Arena,
    margin: float = 0.10,
    length: float = 0.5,
) -> Destination | None:
    """Interim destination along the inward normal when closer than ``margin`` to a wall."""
    nx = ny = 0.0
    for wall, dist in arena.wall_distances(pose.x, pose.y).items():
        if dist < margin:
            wx, wy = WALL_NORMALS[wall]
            nx += wx
            ny += wy
    norm = math.hypot(nx, ny)
    if norm == 0.0:
        return None
    direction = math.degrees(math.atan2(ny, nx))
    target = arena.clamp(pose.x + length * nx / norm, pose.y + length * ny / norm, inset=margin)
    logger.debug("wall redirect at (%.3f, %.3f) toward %.0f deg", pose.x, pose.y, direction)
    return Destination(target=target, origin_pose=replace(pose), direction=direction,
                       distance=length, interim=True)
