"""Data models for the cyborg insect explorer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from .utils import bearing_deg, normalize_angle


class SourceKind(str, Enum):
    HUMAN = "human"
    OVEN = "oven"
    TRANSIENT_AIR = "transient_air"
    FIXTURE = "fixture"


class StimCommand(str, Enum):
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    ACCELERATE = "accelerate"
    NONE = "none"
    ARRIVED = "arrived"


class TurnDirection(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> int:
        return 1 if self is TurnDirection.LEFT else -1

    def opposite(self) -> TurnDirection:
        return TurnDirection.RIGHT if self is TurnDirection.LEFT else TurnDirection.LEFT

    @classmethod
    def from_angle(cls, deg: float) -> TurnDirection:
        return cls.LEFT if deg >= 0 else cls.RIGHT


class WalkMode(str, Enum):
    OPEN_WALK = "open_walk"
    OPEN_STOP = "open_stop"
    WALL_FOLLOW = "wall_follow"
    WALL_STOP = "wall_stop"


class Wall(str, Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP = "top"


class Strategy(str, Enum):
    NATURAL = "natural"
    FIXED_LENGTH = "fixed"
    LEVY_WALK = "levy"
    UNIFORM = "uniform"
    BROWNIAN = "brownian"

    @property
    def uses_destinations(self) -> bool:
        return self is not Strategy.NATURAL


class Phase(str, Enum):
    EXPLORE = "explore"
    APPROACH = "approach"
    CLASSIFY = "classify"


class RecaptureStage(str, Enum):
    BACK_TURN = "back_turn"
    SWEEP_RIGHT = "sweep_right"
    SWEEP_LEFT = "sweep_left"
    EXHAUSTED = "exhausted"


class Classification(str, Enum):
    HUMAN = "human"
    NOT_HUMAN = "not_human"


class MissionOutcome(str, Enum):
    HUMAN_FOUND = "human_found"
    NOT_HUMAN = "not_human"
    NOT_FOUND = "not_found"


class NavOutcome(str, Enum):
    SUCCESS = "success"
    TIMEOUT = "timeout"
    GAVE_UP = "gave_up"


class Environment(str, Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"


class NavigationVariant(str, Enum):
    TRACKING = "tracking"
    ONBOARD = "onboard"


class Localization(str, Enum):
    TRUTH = "truth"
    IMU = "imu"


class CalibrationMode(str, Enum):
    LITERAL = "literal"
    CORRECTIVE = "corrective"


class RunMode(str, Enum):
    MISSION = "mission"              # full three-phase search
    THERMAL_NAV = "thermal_nav"      # starts in Approach, ends on reaching the source
    EXPLORE_ONLY = "explore_only"    # Phase I controller without a camera


class StudyKind(str, Enum):
    EXPLORATION = "exploration"
    THERMAL_NAV = "thermal_nav"
    IMU_REPLAY = "imu_replay"
    FULL_MISSION = "full_mission"
    BLOB_ACCURACY = "blob_accuracy"


# Default cylinder heights (m) per source kind
DEFAULT_SOURCE_HEIGHT: dict[SourceKind, float] = {
    SourceKind.HUMAN: 1.0,
    SourceKind.OVEN: 0.6,
    SourceKind.TRANSIENT_AIR: 1.0,
    SourceKind.FIXTURE: 0.3,
}


@dataclass
class Pose:
    """Agent pose in the world frame: meters, degrees, yaw CCW from +x."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self) -> None:
        self.yaw = normalize_angle(self.yaw)
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch must be in [-90, 90], got {self.pitch}")

    @property
    def xy(self) -> tuple[float, float]:
        return self.x, self.y

    def heading(self) -> tuple[float, float]:
        rad = math.radians(self.yaw)
        return math.cos(rad), math.sin(rad)

    def moved(self, distance: float) -> Pose:
        hx, hy = self.heading()
        return replace(self, x=self.x + distance * hx, y=self.y + distance * hy)

    def turned(self, delta_deg: float) -> Pose:
        return replace(self, yaw=self.yaw + delta_deg)

    def at(self, x: float, y: float) -> Pose:
        return replace(self, x=x, y=y)

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(x - self.x, y - self.y)

    def bearing_to(self, x: float, y: float) -> float:
        return bearing_deg(x - self.x, y - self.y)


@dataclass
class ThermalSource:
    kind: SourceKind
    center: tuple[float, float]
    radius: float
    surface_temp: float
    height: float | None = None
    active_interval: tuple[float, float] | None = None
    name: str = ""

    def __post_init__(self) -> None:
        self.kind = SourceKind(self.kind)
        self.center = (float(self.center[0]), float(self.center[1]))
        if self.radius <= 0:
            raise ValueError(f"source radius must be > 0, got {self.radius}")
        if self.height is None:
            self.height = DEFAULT_SOURCE_HEIGHT[self.kind]
        if self.active_interval is not None:
            start, end = self.active_interval
            if end < start:
                raise ValueError(f"active interval ends before it starts: {self.active_interval}")
            self.active_interval = (float(start), float(end))

    @property
    def is_transient(self) -> bool:
        return self.active_interval is not None

    def is_active(self, t: float) -> bool:
        if self.active_interval is None:
            return True
        start, end = self.active_interval
        return start <= t <= end

    def surface_distance(self, x: float, y: float) -> float:
        cx, cy = self.center
        return max(0.0, math.hypot(x - cx, y - cy) - self.radius)


@dataclass
class Destination:
    target: tuple[float, float]
    origin_pose: Pose
    direction: float = 0.0          # sampled world direction (deg)
    distance: float = 0.0           # sampled step length before clipping (m)
    interim: bool = False           # wall-redirect waypoint


@dataclass
class BlobResult:
    u: int                          # display column, 1-based
    v: int                          # row, 1-based
    response: float
    scale: int                      # Gaussian kernel size: 33, 27 or 21


@dataclass
class TargetEstimate:
    x_t: float
    y_t: float
    upsilon: float
    alpha: float
    step: float


@dataclass
class ImuSample:
    t: float
    acc: tuple[float, float, float]
    quat: tuple[float, float, float, float]   # (w, x, y, z), world-from-body


@dataclass
class PhaseEvent:
    t: float
    phase_from: Phase
    phase_to: Phase
    reason: str
    frame_index: int | None = None


@dataclass
class TrialRecord:
    """One trial of a study; ``metrics`` holds flat numeric/string fields."""

    index: int
    seed: int
    label: str
    status: str = "ok"
    metrics: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    error: str | None = None
