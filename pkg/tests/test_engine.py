import math

import pytest

from cyborg_explorer.engine import (
    ExplorationTrial,
    draw_stim_speeds,
    run_exploration_trial,
    segment_hit_distance,
    straight_event_distance,
)
from cyborg_explorer.config import MotionParams
from cyborg_explorer.models import Pose, Strategy


@pytest.mark.parametrize("p0, heading, length, expected", [
    ((0.0, 0.0), (1.0, 0.0), 5.0, 1.7),
    ((0.0, 0.0), (1.0, 0.0), 1.0, None),
    ((0.0, 0.0), (-1.0, 0.0), 5.0, None),
    ((0.0, 1.0), (1.0, 0.0), 5.0, None),
    ((1.9, 0.0), (1.0, 0.0), 5.0, 0.0),
])
def test_segment_hit_distance(p0, heading, length, expected):
    hit = segment_hit_distance(p0, heading, length, (2.0, 0.0), 0.3)
    if expected is None:
        assert hit is None
    else:
        assert hit == pytest.approx(expected)


def test_straight_phase_ends_at_the_arrival_radius():
    assert straight_event_distance(Pose(0.0, 0.0, 0.0, 0.0), (1.0, 0.0), 20.0, 0.10) == pytest.approx(0.9)


def test_straight_phase_ends_when_the_bearing_error_grows():
    pose = Pose(0.0, 0.0, 0.0, 0.0)
    expected = 3.0 - 0.5 / math.tan(math.radians(20.0))
    assert straight_event_distance(pose, (3.0, 0.5), 20.0, 0.10) == pytest.approx(expected)
    assert straight_event_distance(pose, (1.0, 0.5), 20.0, 0.10) == 0.0


def test_stimulated_speeds_have_a_floor(rng):
    params = MotionParams()
    speeds = draw_stim_speeds(rng, params, 5000)
    assert speeds.min() >= params.min_speed
    assert speeds.mean() == pytest.approx(params.v_stim_mean, rel=0.05)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_coverage_grows_monotonically(small_exploration, strategy):
    result = run_exploration_trial(small_exploration, strategy, seed=7)
    assert result.checkpoint_times[0] == 0.0
    assert result.checkpoint_times[-1] == pytest.approx(600.0)
    assert len(result.coverage) == 11
    assert all(b >= a for a, b in zip(result.coverage, result.coverage[1:]))
    assert 0.0 < result.final_coverage <= 1.0
    assert result.distance > 0.0


def test_trials_are_reproducible(small_exploration):
    first = run_exploration_trial(small_exploration, Strategy.LEVY_WALK, seed=3)
    second = run_exploration_trial(small_exploration, Strategy.LEVY_WALK, seed=3)
    assert first.metrics() == second.metrics()
    assert first.coverage == second.coverage
    assert first.final_pose == second.final_pose


def test_target_at_the_start_is_found_immediately(small_exploration):
    small_exploration.world.target = [0.6, 0.5]
    result = ExplorationTrial(small_exploration, Strategy.FIXED_LENGTH, seed=1).run()
    assert result.search_time == 0.0
    assert result.metrics()["found"]


def test_no_target_means_no_search_time(small_exploration):
    small_exploration.study.with_target = False
    result = run_exploration_trial(small_exploration, Strategy.UNIFORM, seed=2)
    assert result.search_time is None
    assert result.metrics()["search_time_min"] is None
