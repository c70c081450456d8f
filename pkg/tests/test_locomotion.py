import math

import numpy as np
import pytest

from cyborg_explorer.config import MotionParams
from cyborg_explorer.locomotion import (
    WalkState,
    apply_stimulus,
    goto_point,
    sample_segment_length,
    sample_turn,
    sample_turn_with_direction,
    sample_wall_departure,
    step_natural,
)
from cyborg_explorer.models import Pose, StimCommand, TurnDirection, Wall, WalkMode
from cyborg_explorer.world import Arena, make_rng


def test_turn_direction_persists_at_configured_rate(rng):
    params = MotionParams()
    n = 20_000
    repeats = sum(
        sample_turn_with_direction(rng, TurnDirection.LEFT, params)[1] is TurnDirection.LEFT
        for _ in range(n)
    )
    assert repeats / n == pytest.approx(0.71, abs=0.02)


def test_turn_magnitude_is_folded_and_signed(rng):
    for _ in range(500):
        turn = sample_turn(rng, TurnDirection.RIGHT)
        assert -180.0 <= turn <= 180.0
    angle, direction = sample_turn_with_direction(rng, None)
    assert (angle >= 0) == (direction is TurnDirection.LEFT) or angle == 0.0


def test_mean_segment_length(rng):
    params = MotionParams()
    lengths = [sample_segment_length(rng, params) for _ in range(10_000)]
    assert np.mean(lengths) == pytest.approx(0.175, abs=0.005)


def test_wall_departure_median(rng):
    draws = [sample_wall_departure(rng) for _ in range(10_000)]
    assert all(0.0 < d < 180.0 for d in draws)
    assert float(np.median(draws)) == pytest.approx(36.6, rel=0.05)


def test_stop_probability_after_open_segments(rng):
    params = MotionParams()
    state = WalkState()
    pose = Pose()
    while state.stats.open_completed < 10_000:
        state, pose = step_natural(state, pose, params, rng, 1000.0)
    ratio = state.stats.open_stops / state.stats.open_completed
    assert ratio == pytest.approx(0.21, abs=0.02)


def test_agent_near_a_wall_starts_wall_following(rng):
    arena = Arena(2.0, 2.0)
    state = WalkState()
    state, pose = step_natural(state, Pose(0.01, 1.0, yaw=30.0), MotionParams(), rng, 0.1, arena=arena)
    assert state.mode is WalkMode.WALL_FOLLOW
    assert state.stats.captures == 1
    assert abs(abs(pose.yaw) - 90.0) < 1e-9


def test_natural_walk_stays_inside_the_arena():
    arena = Arena(2.0, 3.0)
    rng = make_rng(3)
    points = []
    state, pose = WalkState(), Pose(1.0, 1.5)
    for _ in range(60):
        state, pose = step_natural(state, pose, MotionParams(), rng, 60.0, arena=arena,
                                   on_segment=lambda p0, p1: points.append(p1))
    assert points
    assert all(arena.contains(x, y) for x, y in points)


def test_natural_walk_rejects_non_positive_dt(rng):
    with pytest.raises(ValueError):
        step_natural(WalkState(), Pose(), MotionParams(), rng, 0.0)


def test_resumed_open_segment_samples_a_speed():
    state = WalkState(remaining_len=0.1)
    state, pose = step_natural(state, Pose(1.0, 1.0), MotionParams(), make_rng(1), 0.1, arena=Arena(2.0, 2.0))
    assert state.speed > 0.0
    assert pose.x > 1.0
    assert state.remaining_len == pytest.approx(0.1 - (pose.x - 1.0))


def test_resumed_wall_segment_samples_a_speed():
    state = WalkState(mode=WalkMode.WALL_FOLLOW, wall=Wall.BOTTOM, remaining_len=0.1)
    state, pose = step_natural(state, Pose(1.0, 0.02), MotionParams(), make_rng(1), 0.1, arena=Arena(2.0, 2.0))
    assert state.speed > 0.0
    assert state.mode is WalkMode.WALL_FOLLOW
    assert pose.x > 1.0
    assert pose.y == pytest.approx(0.02)


def test_turn_left_at_mean_rate(rng):
    params = MotionParams(omega_stim_sd=0.0)
    pose = apply_stimulus(Pose(yaw=0.0), StimCommand.TURN_LEFT, params, rng, 1.0)
    assert pose.yaw == pytest.approx(86.5)
    assert pose.xy == (0.0, 0.0)


def test_turn_right_is_capped(rng):
    params = MotionParams(omega_stim_sd=0.0)
    pose = apply_stimulus(Pose(yaw=10.0), StimCommand.TURN_RIGHT, params, rng, 1.0, max_turn=30.0)
    assert pose.yaw == pytest.approx(-20.0)


def test_accelerate_at_mean_speed(rng):
    params = MotionParams(v_stim_sd=0.0)
    pose = apply_stimulus(Pose(yaw=90.0), StimCommand.ACCELERATE, params, rng, 1.0)
    assert pose.x == pytest.approx(0.0, abs=1e-12)
    assert pose.y == pytest.approx(0.084)


def test_arrived_is_not_a_stimulus(rng):
    with pytest.raises(ValueError):
        apply_stimulus(Pose(), StimCommand.ARRIVED, MotionParams(), rng, 0.1)


@pytest.mark.parametrize("target, expected", [
    ((0.05, 0.0), StimCommand.ARRIVED),
    ((1.0, 0.0), StimCommand.ACCELERATE),
    ((1.0, math.tan(math.radians(19.0))), StimCommand.ACCELERATE),
    ((0.0, 1.0), StimCommand.TURN_LEFT),
    ((0.0, -1.0), StimCommand.TURN_RIGHT),
    ((-1.0, 0.01), StimCommand.TURN_LEFT),
])
def test_goto_point(target, expected):
    assert goto_point(Pose(0.0, 0.0, yaw=0.0), target) is expected


def test_goto_point_ignores_where_the_arena_is(rng):
    for _ in range(200):
        x, y, yaw = rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-180, 180)
        tx, ty = rng.uniform(-5, 5), rng.uniform(-5, 5)
        dx, dy = float(rng.integers(-20, 20)), float(rng.integers(-20, 20))
        here = goto_point(Pose(x, y, yaw=yaw), (tx, ty))
        shifted = goto_point(Pose(x + dx, y + dy, yaw=yaw), (tx + dx, ty + dy))
        assert here is shifted
