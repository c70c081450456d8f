"""Shared fixtures: configs, worlds and hand-built IR frames."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cyborg_explorer.config import ExplorerConfig, load_config
from cyborg_explorer.ir_camera import IrImage
from cyborg_explorer.models import SourceKind, ThermalSource
from cyborg_explorer.world import Arena, World, make_rng

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


def scenario(name: str) -> ExplorerConfig:
    return load_config(SCENARIOS / f"{name}.yaml").validate()


def flat_frame(temp: float = 25.0, pixels: int = 32) -> IrImage:
    return IrImage(np.full((pixels, pixels), temp))


def hot_frame(u: int, v: int, size: int = 5, temp: float = 33.0, ambient: float = 25.0) -> IrImage:
    """Ambient frame with a size x size hot square centred on display column u, row v."""
    temps = np.full((32, 32), ambient)
    r0, c0 = v - 1 - size // 2, u - 1 - size // 2
    temps[max(0, r0): r0 + size, max(0, c0): c0 + size] = temp
    return IrImage(temps)


@pytest.fixture
def config() -> ExplorerConfig:
    return ExplorerConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(1234)


@pytest.fixture
def room() -> Arena:
    return Arena(2.0, 3.0)


@pytest.fixture
def human_world() -> World:
    """4.8 x 6.6 m room with one seated human."""
    human = ThermalSource(SourceKind.HUMAN, (2.4, 3.0), 0.25, 33.0, name="human")
    return World(Arena(4.8, 6.6), [human], ambient=25.0)


@pytest.fixture
def small_exploration(tmp_path) -> ExplorerConfig:
    """Ten-minute exploration in a 2 x 3 m arena with a nearby target."""
    cfg = ExplorerConfig()
    cfg.project_root = tmp_path
    cfg.world.width, cfg.world.height = 2.0, 3.0
    cfg.world.origin = [0.0, 0.0]
    cfg.world.start = [0.5, 0.5]
    cfg.world.target = [1.5, 2.5]
    cfg.world.detection_radius = 0.3
    cfg.strategy.min_step = 0.2
    cfg.strategy.fixed_step = 0.2
    cfg.strategy.uniform_max = 3.0
    cfg.strategy.brownian_step = 3.0
    cfg.strategy.levy_max = 3.0
    cfg.study.trials = 2
    cfg.study.duration_s = 600.0
    cfg.study.checkpoint_s = 60.0
    return cfg.validate()
