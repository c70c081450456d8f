import math

import numpy as np
import pytest

from cyborg_explorer.errors import OutOfBoundsError
from cyborg_explorer.models import Pose, SourceKind, ThermalSource, Wall
from cyborg_explorer.world import (
    Arena,
    CoverageGrid,
    World,
    coverage_fraction,
    distance_to_nearest_wall,
    make_rng,
    mark_coverage,
    normalize_angle,
    spawn_rngs,
    trial_seed,
)


@pytest.mark.parametrize("deg, expected", [
    (270.0, -90.0),
    (-181.0, 179.0),
    (180.0, 180.0),
    (-180.0, 180.0),
    (540.0, 180.0),
    (0.0, 0.0),
    (-0.0, 0.0),
    (719.5, -0.5),
])
def test_normalize_angle(deg, expected):
    assert normalize_angle(deg) == pytest.approx(expected)


def test_normalize_angle_rejects_nan():
    with pytest.raises(ValueError):
        normalize_angle(math.nan)


def test_grid_of_six_square_meters_has_600_cells(room):
    grid = CoverageGrid(room, 0.1)
    assert (grid.ny, grid.nx) == (30, 20)
    assert grid.total_cells == 600


def test_coverage_fraction_counts_visited_cells(room):
    grid = CoverageGrid(room, 0.1)
    grid.visited.flat[:366] = True
    assert coverage_fraction(grid) == pytest.approx(0.61)


def test_far_edges_belong_to_last_cell(room):
    grid = CoverageGrid(room, 0.1)
    assert grid.cell_of(2.0, 3.0) == (29, 19)
    assert grid.cell_of(0.0, 0.0) == (0, 0)


def test_marking_outside_the_arena_raises(room):
    grid = CoverageGrid(room, 0.1)
    with pytest.raises(OutOfBoundsError):
        mark_coverage(grid, Pose(2.5, 1.0))


def test_marking_is_idempotent(room):
    grid = CoverageGrid(room, 0.1)
    mark_coverage(grid, Pose(0.55, 0.55))
    mark_coverage(grid, Pose(0.56, 0.52))
    assert grid.visited_count == 1


def test_segment_marks_every_crossed_cell(room):
    grid = CoverageGrid(room, 0.1)
    grid.mark_segment((0.05, 0.05), (0.95, 0.05))
    assert grid.visited[0].sum() == 10
    assert grid.visited_count == 10


def test_nearest_wall_distance(room):
    assert distance_to_nearest_wall(room, Pose(0.3, 1.5)) == pytest.approx(0.3)
    assert room.nearest_wall(1.0, 2.9) == (Wall.TOP, pytest.approx(0.1))


def test_ray_exit_distance(room):
    assert room.ray_exit_distance(1.0, 1.5, 0.0) == pytest.approx(1.0)
    assert room.ray_exit_distance(1.0, 1.5, 90.0) == pytest.approx(1.5)
    assert room.ray_exit_distance(1.0, 1.5, 180.0, inset=0.1) == pytest.approx(0.9)
    assert room.ray_exit_distance(1.0, 1.0, 45.0) == pytest.approx(math.sqrt(2.0))


def test_arena_with_offset_origin():
    arena = Arena(20.0, 20.0, (-10.0, -10.0))
    assert arena.contains(-10.0, 10.0)
    assert not arena.contains(10.1, 0.0)
    assert arena.clamp(12.0, -11.0) == (10.0, -10.0)


def test_arena_rejects_degenerate_size():
    with pytest.raises(ValueError):
        Arena(0.0, 1.0)


def test_world_rejects_sources_colder_than_ambient():
    cold = ThermalSource(SourceKind.FIXTURE, (1.0, 1.0), 0.1, 20.0)
    with pytest.raises(ValueError):
        World(Arena(2.0, 2.0), [cold], ambient=25.0)


def test_transient_sources_follow_their_interval():
    air = ThermalSource(SourceKind.TRANSIENT_AIR, (1.0, 1.0), 0.5, 31.0, active_interval=(10.0, 20.0))
    world = World(Arena(2.0, 2.0), [air], ambient=28.0)
    assert world.active_sources(5.0) == []
    assert world.active_sources(15.0) == [air]
    assert world.active_sources(20.5) == []


def test_check_inside(human_world):
    human_world.check_inside(Pose(1.0, 1.0))
    with pytest.raises(OutOfBoundsError):
        human_world.check_inside(Pose(-0.1, 1.0))


def test_same_seed_same_draws():
    a = make_rng(42).random(5)
    b = make_rng(42).random(5)
    assert np.array_equal(a, b)


def test_spawned_streams_are_independent():
    first, second = spawn_rngs(7, 2)
    again, _ = spawn_rngs(7, 2)
    assert np.array_equal(first.random(4), again.random(4))
    assert not np.array_equal(spawn_rngs(7, 2)[0].random(4), second.random(4))


def test_trial_seed_offsets_the_base_seed():
    assert [trial_seed(100, i) for i in range(3)] == [100, 101, 102]
