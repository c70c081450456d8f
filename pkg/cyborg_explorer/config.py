"""Configuration loading and typed config dataclasses."""

from __future__ import annotations

import dataclasses
import math
import types
import typing
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import yaml

from .errors import ConfigError
from .models import (
    CalibrationMode,
    Environment,
    Localization,
    NavigationVariant,
    SourceKind,
    Strategy,
    StudyKind,
    ThermalSource,
)


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _check_probability(name: str, value: float) -> None:
    _check(0.0 <= value <= 1.0, f"{name} must be in [0, 1], got {value}")


@dataclass
class SourceSettings:
    kind: SourceKind = SourceKind.HUMAN
    center: list[float] = field(default_factory=lambda: [0.0, 0.0])
    radius: float = 0.25
    surface_temp: float = 33.0
    height: float | None = None
    active_interval: list[float] | None = None
    name: str = ""

    def to_source(self) -> ThermalSource:
        interval = tuple(self.active_interval) if self.active_interval is not None else None
        return ThermalSource(
            kind=self.kind,
            center=(self.center[0], self.center[1]),
            radius=self.radius,
            surface_temp=self.surface_temp,
            height=self.height,
            active_interval=interval,
            name=self.name or self.kind.value,
        )


@dataclass
class WorldSettings:
    width: float = 20.0
    height: float = 20.0
    origin: list[float] = field(default_factory=lambda: [-10.0, -10.0])
    ambient: float = 25.0
    slope: float = 0.0
    cell_size: float = 0.1
    start: list[float] = field(default_factory=lambda: [-9.5, -9.5])
    start_yaw: float | None = None     # None: drawn uniformly per trial
    sources: list[SourceSettings] = field(default_factory=list)
    target: list[float] | None = None  # search target for exploration studies
    detection_radius: float = 0.5

    def validate(self) -> None:
        _check(self.width > 0 and self.height > 0,
               f"arena size must be positive, got {self.width} x {self.height}")
        _check(self.cell_size > 0, f"cell_size must be > 0, got {self.cell_size}")
        _check(len(self.origin) == 2, "origin must be [x, y]")
        _check(len(self.start) == 2, "start must be [x, y]")
        x0, y0 = self.origin
        _check(x0 <= self.start[0] <= x0 + self.width and y0 <= self.start[1] <= y0 + self.height,
               f"start {self.start} lies outside the arena")
        _check(self.detection_radius >= 0, "detection_radius must be >= 0")
        for src in self.sources:
            _check(src.radius > 0, f"source {src.name or src.kind.value}: radius must be > 0")
            _check(src.surface_temp >= self.ambient,
                   f"source {src.name or src.kind.value}: surface_temp below ambient")
            if src.active_interval is not None:
                _check(len(src.active_interval) == 2
                       and src.active_interval[0] <= src.active_interval[1],
                       f"source {src.name or src.kind.value}: bad active_interval")


@dataclass
class MotionParams:
    """Natural-walk and stimulated-response parameters (SI units, degrees)."""

    dt: float = 0.1
    straight_len_mean: float = 0.175
    straight_len_sd: float = 0.048
    p_persist: float = 0.71
    p_stop: float = 0.21
    stop_mean: float = 36.0
    stop_sd: float = 24.0
    p_exit: float = 0.05
    wall_depart_median: float = 36.6
    wall_depart_shape: float = 2.1
    v_nat_mean: float = 0.020
    v_nat_sd: float = 0.003
    v_stim_mean: float = 0.084
    v_stim_sd: float = 0.038
    omega_stim_mean: float = 86.5
    omega_stim_sd: float = 43.5
    turn_mu: float = 0.0
    turn_kappa: float = 2.0
    wall_capture: float = 0.02
    min_speed: float = 0.001

    def validate(self) -> None:
        _check(self.dt > 0, f"dt must be > 0, got {self.dt}")
        for name in ("p_persist", "p_stop", "p_exit"):
            _check_probability(name, getattr(self, name))
        for name in ("straight_len_mean", "v_nat_mean", "v_stim_mean", "omega_stim_mean",
                     "wall_depart_median", "min_speed"):
            _check(getattr(self, name) > 0, f"{name} must be > 0")
        _check(self.wall_depart_shape > 1.0, "wall_depart_shape must be > 1")
        _check(self.turn_kappa >= 0, "turn_kappa must be >= 0")
        _check(self.wall_capture >= 0, "wall_capture must be >= 0")


@dataclass
class StrategyParams:
    name: Strategy = Strategy.LEVY_WALK
    min_step: float = 0.5
    fixed_step: float = 0.5
    uniform_max: float = 20.0
    brownian_step: float = 30.0
    levy_mu: float = 2.0
    levy_max: float = 30.0
    wall_margin: float = 0.10
    redirect_len: float = 0.5
    theta_t: float = 20.0
    d_t: float = 0.10

    def validate(self) -> None:
        _check(self.min_step > 0, "min_step must be > 0")
        _check(self.fixed_step >= self.min_step, "fixed_step must be >= min_step")
        _check(self.uniform_max >= self.min_step, "uniform_max must be >= min_step")
        _check(self.brownian_step >= self.min_step, "brownian_step must be >= min_step")
        _check(self.levy_mu > 1.0, f"levy_mu must be > 1, got {self.levy_mu}")
        _check(self.levy_max > self.min_step, "levy_max must exceed min_step")
        _check(0 < self.theta_t < 180, "theta_t must be in (0, 180)")
        _check(self.d_t > 0 and self.wall_margin >= 0 and self.redirect_len > 0,
               "d_t, redirect_len must be > 0 and wall_margin >= 0")


@dataclass
class CameraModel:
    h_fov: float = 90.0
    v_fov: float = 90.0
    pixels: int = 32
    height: float = 0.02
    rate: float = 1.0
    noise_sd: float = 0.3
    max_range: float = 10.0
    attenuation_d0: float = 2.6
    mirrored: bool = True

    @property
    def period(self) -> float:
        return 1.0 / self.rate

    def validate(self) -> None:
        _check(0 < self.h_fov < 180 and 0 < self.v_fov < 180, "fov must be in (0, 180)")
        _check(self.rate > 0, f"camera rate must be > 0, got {self.rate}")
        _check(self.pixels >= 2, "pixels must be >= 2")
        _check(self.noise_sd >= 0, "noise_sd must be >= 0")
        _check(self.max_range > 0 and self.attenuation_d0 > 0,
               "max_range and attenuation_d0 must be > 0")


@dataclass
class BlobSettings:
    scales: list[list[float]] = field(default_factory=lambda: [[33, 5.0], [27, 4.0], [21, 3.0]])
    noise_sigmas: float = 3.0
    min_response: float = 0.01
    scale_normalized: bool = False

    def validate(self) -> None:
        _check(len(self.scales) > 0, "at least one blob scale is required")
        for size, sigma in self.scales:
            _check(int(size) == size and size % 2 == 1, f"kernel size must be odd, got {size}")
            _check(sigma > 0, f"sigma must be > 0, got {sigma}")
        _check(self.noise_sigmas >= 0 and self.min_response >= 0,
               "noise_sigmas and min_response must be >= 0")


@dataclass
class ImuSettings:
    rate: float = 100.0
    window_s: float = 0.5
    k_seed: float = 3.5
    k_true: float = 3.5
    k_true_range: list[float] | None = None   # per-insect gain drawn per trial
    gait_freq: float = 6.0
    noise_sd: float = 0.005
    calibration: CalibrationMode = CalibrationMode.CORRECTIVE
    calib_window_s: float = 30.0
    quat_tolerance: float = 1e-3
    bench_duration_s: float = 300.0
    bench_slope: float = 7.9
    reference_rate: float = 10.0
    reference_gap_fraction: float = 0.0
    climb_pitch_deg: float = 0.0
    climb_event_rate: float = 0.0

    @property
    def window_samples(self) -> int:
        return max(2, int(round(self.window_s * self.rate)))

    def validate(self) -> None:
        _check(self.rate > 0 and self.window_s > 0, "imu rate and window_s must be > 0")
        _check(self.k_seed > 0 and self.k_true > 0, "gain factors must be > 0")
        _check(3.0 <= self.gait_freq <= 9.0, f"gait_freq must be in [3, 9] Hz, got {self.gait_freq}")
        _check(self.calib_window_s > self.window_s, "calib_window_s must exceed window_s")
        _check(0.0 <= self.reference_gap_fraction < 1.0, "reference_gap_fraction must be in [0, 1)")
        if self.k_true_range is not None:
            _check(len(self.k_true_range) == 2 and 0 < self.k_true_range[0] <= self.k_true_range[1],
                   "k_true_range must be [lo, hi] with 0 < lo <= hi")


@dataclass
class MissionConfig:
    environment: Environment = Environment.INDOOR
    navigation: NavigationVariant = NavigationVariant.ONBOARD
    localization: Localization = Localization.TRUTH
    phase2_band: list[float] = field(default_factory=lambda: [28.0, 38.0])
    outdoor_band: list[float] = field(default_factory=lambda: [29.0, 35.0])
    phase2_trigger: int = 8
    phase3_trigger: int = 50
    outdoor_total: int = 25
    outdoor_center: int = 12
    outdoor_phase3_scale: float = 1.0
    estimate_fraction: float = 0.002
    approach_step: float = 1.5
    aux_step: float = 0.2
    arrival_radius: float = 0.2
    success_radius: float = 0.5
    nav_time_limit: float = 180.0
    approach_timeout: float = 180.0
    u_left: list[int] = field(default_factory=lambda: [1, 10])
    u_accel: list[int] = field(default_factory=lambda: [11, 22])
    u_right: list[int] = field(default_factory=lambda: [23, 32])
    turn_pulse_s: float = 0.3
    max_misses: int = 2
    sweep_deg: float = 90.0
    max_shuttle_legs: int = 4
    time_budget_s: float = 1800.0
    mask_out_of_band: bool = False
    initial_yaw_spread: float = 35.0

    @property
    def band(self) -> tuple[float, float]:
        lo, hi = self.outdoor_band if self.environment is Environment.OUTDOOR else self.phase2_band
        return float(lo), float(hi)

    def validate(self, pixels: int = 32) -> None:
        for name in ("phase2_band", "outdoor_band"):
            lo, hi = getattr(self, name)
            _check(lo < hi, f"{name} must satisfy lo < hi, got {[lo, hi]}")
        _check(self.phase2_trigger > 0 and self.phase3_trigger > 0
               and self.outdoor_total > 0 and self.outdoor_center > 0, "triggers must be positive")
        covered: list[int] = []
        for band in (self.u_left, self.u_accel, self.u_right):
            _check(len(band) == 2 and band[0] <= band[1], f"bad u-band {band}")
            covered.extend(range(band[0], band[1] + 1))
        _check(sorted(covered) == list(range(1, pixels + 1)),
               f"u-bands must partition [1, {pixels}]")
        _check(self.u_left[1] < self.u_accel[0] <= self.u_accel[1] < self.u_right[0],
               "u-bands must be ordered left, accelerate, right")
        _check(self.approach_step > 0 and self.aux_step > 0 and self.arrival_radius > 0,
               "approach_step, aux_step and arrival_radius must be > 0")
        _check(self.max_misses >= 1 and self.max_shuttle_legs >= 1, "max_misses and max_shuttle_legs must be >= 1")
        _check(0 < self.sweep_deg <= 180, "sweep_deg must be in (0, 180]")
        _check(self.turn_pulse_s > 0 and self.time_budget_s > 0, "turn_pulse_s and time_budget_s must be > 0")


@dataclass
class StudySettings:
    kind: StudyKind = StudyKind.EXPLORATION
    trials: int = 20
    base_seed: int = 0
    workers: int = 1
    duration_s: float = 86400.0
    checkpoint_s: float = 3600.0
    strategies: list[Strategy] = field(default_factory=lambda: list(Strategy))
    with_target: bool = True
    distances: list[float] = field(default_factory=lambda: [round(0.6 * i, 1) for i in range(1, 10)])
    frames_per_distance: int = 200
    accuracy_distance: float = 4.2

    def validate(self) -> None:
        _check(self.trials >= 1, f"trials must be >= 1, got {self.trials}")
        _check(self.workers >= 1, f"workers must be >= 1, got {self.workers}")
        _check(self.duration_s > 0 and self.checkpoint_s > 0, "duration_s and checkpoint_s must be > 0")
        _check(len(self.strategies) > 0, "at least one strategy is required")
        _check(self.frames_per_distance >= 1, "frames_per_distance must be >= 1")
        _check(all(d > 0 for d in self.distances), "distances must be positive")


@dataclass
class OutputSettings:
    out_dir: str = "output/"
    plots: bool = True


@dataclass
class ExplorerConfig:
    project_root: Path = field(default_factory=lambda: Path.cwd())
    world: WorldSettings = field(default_factory=WorldSettings)
    motion: MotionParams = field(default_factory=MotionParams)
    strategy: StrategyParams = field(default_factory=StrategyParams)
    camera: CameraModel = field(default_factory=CameraModel)
    blob: BlobSettings = field(default_factory=BlobSettings)
    imu: ImuSettings = field(default_factory=ImuSettings)
    mission: MissionConfig = field(default_factory=MissionConfig)
    study: StudySettings = field(default_factory=StudySettings)
    output: OutputSettings = field(default_factory=OutputSettings)

    def resolve_path(self, relative_path: str) -> Path:
        """Resolve a relative path against the project root."""
        p = Path(relative_path)
        if p.is_absolute():
            return p
        return self.project_root / p

    def validate(self) -> ExplorerConfig:
        self.world.validate()
        self.motion.validate()
        self.strategy.validate()
        self.camera.validate()
        self.blob.validate()
        self.imu.validate()
        self.mission.validate(self.camera.pixels)
        self.study.validate()
        return self


def _coerce(tp, val):
    """Coerce a raw YAML value to the annotated field type."""
    if val is None:
        return None
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        inner = [a for a in typing.get_args(tp) if a is not type(None)]
        return _coerce(inner[0], val) if len(inner) == 1 else val
    if origin is list:
        (item_tp,) = typing.get_args(tp) or (typing.Any,)
        if not isinstance(val, list):
            raise ConfigError(f"expected a list, got {val!r}")
        return [_coerce(item_tp, v) for v in val]
    if dataclasses.is_dataclass(tp):
        if not isinstance(val, dict):
            raise ConfigError(f"expected a mapping for {tp.__name__}, got {val!r}")
        return _build_nested(tp, val)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(val)
        except ValueError:
            choices = ", ".join(m.value for m in tp)
            raise ConfigError(f"unknown {tp.__name__} {val!r} (choose from {choices})") from None
    if tp is float and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    return val


def _build_nested(cls, data: dict | None):
    """Recursively build a dataclass from a dict, ignoring unknown keys."""
    if data is None:
        return cls()
    hints = typing.get_type_hints(cls)
    fieldnames = {f.name for f in dataclasses.fields(cls)}
    filtered = {}
    for key, val in data.items():
        if key not in fieldnames:
            continue
        filtered[key] = _coerce(hints[key], val)
    return cls(**filtered)


def load_config(path: str | Path) -> ExplorerConfig:
    """Load configuration from a YAML file, falling back to defaults."""
    config_path = Path(path)
    project_root = config_path.parent

    if config_path.exists():
        with open(config_path) as f:
            try:
                raw = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"{config_path}: {e}") from e
    else:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{config_path}: top level must be a mapping")

    config = _build_nested(ExplorerConfig, {k: v for k, v in raw.items() if k != "project_root"})
    config.project_root = project_root
    return config


def config_to_dict(config: ExplorerConfig) -> dict:
    """Plain-data snapshot of a config (enums as values, no project_root)."""

    def convert(value):
        if isinstance(value, Enum):
            return value.value
        if isinstance(value, dict):
            return {k: convert(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [convert(v) for v in value]
        if isinstance(value, float) and math.isfinite(value):
            return round(value, 9)
        return value

    data = dataclasses.asdict(config)
    data.pop("project_root", None)
    return convert(data)


def dump_config(config: ExplorerConfig) -> str:
    return yaml.safe_dump(config_to_dict(config), sort_keys=True, default_flow_style=False)
