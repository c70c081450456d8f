"""Gait-adaptive dead reckoning.

Walking speed is read from the variance of the body-shake acceleration
(V = K * Var(acc)), then integrated along the heading given by the IMU's
fused orientation quaternion. Quaternions are stored scalar-first
(w, x, y, z) as in the replay CSV; scipy expects scalar-last.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import ReplayParseError
from .models import CalibrationMode, ImuSample, Pose

logger = logging.getLogger(__name__)

IMU_COLUMNS = ("t", "ax", "ay", "az", "qw", "qx", "qy", "qz")
TRACK_COLUMNS = ("t", "x", "y", "z")
BODY_FORWARD = np.array([1.0, 0.0, 0.0])
# Phase offsets of the three body axes in the gait forward model
_AXIS_PHASES = np.radians([0.0, 120.0, 240.0])


# ── Orientation helpers ──────────────────────────────────────


def quat_from_euler(yaw, pitch=0.0, roll=0.0) -> np.ndarray:
    """World-from-body quaternion(s), scalar-first. Positive pitch raises the nose."""
    yaw, pitch, roll = np.broadcast_arrays(np.asarray(yaw, float), np.asarray(pitch, float),
                                           np.asarray(roll, float))
    angles = np.stack([yaw.ravel(), -pitch.ravel(), roll.ravel()], axis=-1)
    xyzw = Rotation.from_euler("ZYX", angles, degrees=True).as_quat()
    wxyz = np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=1)
    return wxyz.reshape(yaw.shape + (4,))


def _to_scipy(quat: np.ndarray) -> np.ndarray:
    quat = np.asarray(quat, dtype=float)
    return np.concatenate([quat[..., 1:], quat[..., :1]], axis=-1)


def heading_from_quat(quat: np.ndarray) -> np.ndarray:
    """Body-forward unit vector(s) in the world frame."""
    return Rotation.from_quat(_to_scipy(quat)).apply(BODY_FORWARD)


def yaw_from_quat(quat: np.ndarray) -> float:
    hx, hy, _ = heading_from_quat(np.asarray(quat, dtype=float))
    return math.degrees(math.atan2(hy, hx))


def _normalize_quats(quat: np.ndarray, tolerance: float) -> tuple[np.ndarray, int]:
    quat = np.asarray(quat, dtype=float)
    norms = np.linalg.norm(quat, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero-norm quaternion")
    flagged = int(np.count_nonzero(np.abs(norms - 1.0) > tolerance))
    if flagged:
        logger.warning("renormalized %d quaternion(s) deviating from unit norm by more than %g",
                       flagged, tolerance)
    return quat / norms, flagged


# ── Traces and paths ─────────────────────────────────────────


@dataclass
class ImuTrace:
    t: np.ndarray
    acc: np.ndarray
    quat: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.acc = np.asarray(self.acc, dtype=float).reshape(-1, 3)
        self.quat = np.asarray(self.quat, dtype=float).reshape(-1, 4)
        if not (len(self.t) == len(self.acc) == len(self.quat)):
            raise ValueError("t, acc and quat must have the same length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("IMU samples must be strictly time-ordered")

    def __len__(self) -> int:
        return len(self.t)

    def samples(self):
        for i in range(len(self.t)):
            yield ImuSample(float(self.t[i]), tuple(self.acc[i]), tuple(self.quat[i]))

    @classmethod
    def from_samples(cls, samples: list[ImuSample]) -> ImuTrace:
        return cls(
            t=[s.t for s in samples],
            acc=[s.acc for s in samples],
            quat=[s.quat for s in samples],
        )


@dataclass
class Track:
    """Timed positions; rows of NaN mark missing reference fixes."""

    t: np.ndarray
    pos: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 3)
        if len(self.t) != len(self.pos):
            raise ValueError("t and pos must have the same length")

    @property
    def valid(self) -> np.ndarray:
        return np.all(np.isfinite(self.pos), axis=1)

    def path_length(self, t_start: float = -math.inf, t_end: float = math.inf) -> float:
        mask = self.valid & (self.t >= t_start) & (self.t <= t_end)
        pts = self.pos[mask]
        if len(pts) < 2:
            return 0.0
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


@dataclass
class TruePath:
    """Ground-truth poses; motion over (t[k], t[k+1]] follows the orientation at k+1."""

    t: np.ndarray
    pos: np.ndarray
    yaw: np.ndarray
    pitch: np.ndarray

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 3)
        self.yaw = np.asarray(self.yaw, dtype=float)
        self.pitch = np.asarray(self.pitch, dtype=float)
        if len(self.t) < 1 or np.any(np.diff(self.t) <= 0):
            raise ValueError("path times must be non-empty and strictly increasing")

    @classmethod
    def from_poses(cls, times, poses: list[Pose]) -> TruePath:
        return cls(
            t=np.asarray(times, dtype=float),
            pos=[[p.x, p.y, p.z] for p in poses],
            yaw=[p.yaw for p in poses],
            pitch=[p.pitch for p in poses],
        )

    def interval_speeds(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.pos, axis=0), axis=1) / np.diff(self.t)

    def traveled(self) -> np.ndarray:
        steps = np.linalg.norm(np.diff(self.pos, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def as_track(self) -> Track:
        return Track(self.t.copy(), self.pos.copy())


# ── Forward model ────────────────────────────────────────────


class GaitSynthesizer:
    """Body-shake acceleration whose windowed variance encodes the walking speed.

    Three phase-shifted sinusoids at the gait frequency plus white noise; the
    sinusoid amplitude is chosen so the summed per-axis variance is v / K.
    """

    def __init__(self, k_true: float, gait_freq: float, noise_sd: float,
                 rng: np.random.Generator, rate: float = 100.0):
        if k_true <= 0 or rate <= 0:
            raise ValueError("k_true and rate must be > 0")
        self.k_true = k_true
        self.gait_freq = gait_freq
        self.noise_sd = noise_sd
        self.rng = rng
        self.rate = rate

    def amplitude(self, speeds: np.ndarray) -> np.ndarray:
        target = np.asarray(speeds, dtype=float) / self.k_true - 3.0 * self.noise_sd ** 2
        return np.sqrt(np.maximum(0.0, 2.0 * target / 3.0))

    def acceleration(self, times: np.ndarray, speeds: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        amp = self.amplitude(speeds)
        phase = 2.0 * math.pi * self.gait_freq * times
        acc = amp[:, None] * np.sin(phase[:, None] + _AXIS_PHASES[None, :])
        if self.noise_sd > 0:
            acc = acc + self.rng.normal(0.0, self.noise_sd, acc.shape)
        return acc

    def interval(self, t0: float, t1: float, speed: float, yaw: float, pitch: float = 0.0) -> ImuTrace:
        """Samples on the rate grid inside (t0, t1] for one constant-speed interval."""
        first = math.floor(t0 * self.rate + 1e-9) + 1
        last = math.floor(t1 * self.rate + 1e-9)
        times = np.arange(first, last + 1) / self.rate
        speeds = np.full(len(times), speed)
        quat = np.broadcast_to(quat_from_euler(yaw, pitch), (len(times), 4))
        return ImuTrace(times, self.acceleration(times, speeds), quat)


def synth_gait(
    true_path: TruePath,
    gait_freq: float,
    k_true: float,
    rng: np.random.Generator,
    rate: float = 100.0,
    noise_sd: float = 0.005,
    pitch_bias: np.ndarray | None = None,
) -> ImuTrace:
    """IMU samples at ``rate`` along a ground-truth path.

    ``pitch_bias`` (deg, one value per emitted sample) tilts the reported
    orientation without moving the body, e.g. to mimic posture changes.
    """
    if not 3.0 <= gait_freq <= 9.0:
        raise ValueError(f"gait_freq must be in [3, 9] Hz, got {gait_freq}")
    synth = GaitSynthesizer(k_true, gait_freq, noise_sd, rng, rate)
    t0, t_end = float(true_path.t[0]), float(true_path.t[-1])
    count = int(math.floor((t_end - t0) * rate + 1e-9)) + 1
    times = t0 + np.arange(count) / rate

    interval = np.searchsorted(true_path.t, times, side="left") - 1
    speeds = np.zeros(count)
    if len(true_path.t) > 1:
        speeds_iv = true_path.interval_speeds()
        inside = interval >= 0
        speeds[inside] = speeds_iv[np.minimum(interval[inside], len(speeds_iv) - 1)]
    orient = np.clip(interval + 1, 0, len(true_path.t) - 1)
    pitch = true_path.pitch[orient]
    if pitch_bias is not None:
        pitch = pitch + np.asarray(pitch_bias, dtype=float)
    quat = quat_from_euler(true_path.yaw[orient], pitch)
    return ImuTrace(times, synth.acceleration(times, speeds), quat)


def climb_pitch_profile(
    times: np.ndarray,
    rng: np.random.Generator,
    event_rate: float,
    pitch_deg: float,
    duration: float = 1.0,
) -> np.ndarray:
    """Posture-pitch offsets: Poisson events lifting the body by ``pitch_deg``."""
    times = np.asarray(times, dtype=float)
    bias = np.zeros(len(times))
    if event_rate <= 0 or pitch_deg == 0 or len(times) == 0:
        return bias
    span = float(times[-1] - times[0])
    n_events = int(rng.poisson(event_rate * span))
    for start in np.sort(rng.uniform(times[0], times[-1], n_events)):
        bias[(times >= start) & (times < start + duration)] = pitch_deg
    return bias


def synth_walk(
    rng: np.random.Generator,
    duration: float,
    rate: float = 100.0,
    slope: float = 0.0,
    speed_range: tuple[float, float] = (0.03, 0.07),
    p_pause: float = 0.1,
) -> TruePath:
    """Random piecewise walk on a plane inclined by ``slope`` degrees along +x."""
    count = int(math.floor(duration * rate)) + 1
    dt = 1.0 / rate
    t = np.arange(count) * dt
    speed = np.zeros(count)
    turn_rate = np.zeros(count)
    i = 1
    while i < count:
        n = max(1, int(rng.uniform(2.0, 6.0) * rate))
        moving = i == 1 or rng.random() >= p_pause
        speed[i:i + n] = rng.uniform(*speed_range) if moving else 0.0
        turn_rate[i:i + n] = rng.uniform(-20.0, 20.0) if moving else 0.0
        i += n
    psi = np.radians(rng.uniform(-180.0, 180.0) + np.cumsum(turn_rate * dt))
    du = np.where(np.arange(count) > 0, speed * np.cos(psi) * dt, 0.0)
    dw = np.where(np.arange(count) > 0, speed * np.sin(psi) * dt, 0.0)
    u, w = np.cumsum(du), np.cumsum(dw)
    s = math.radians(slope)
    pos = np.stack([u * math.cos(s), w, u * math.sin(s)], axis=1)
    yaw = np.degrees(np.arctan2(np.sin(psi), np.cos(psi) * math.cos(s)))
    pitch = np.degrees(np.arcsin(np.cos(psi) * math.sin(s)))
    return TruePath(t, pos, yaw, pitch)


def reference_from_path(
    path: TruePath,
    reference_rate: float,
    rng: np.random.Generator | None = None,
    gap_fraction: float = 0.0,
) -> Track:
    """Subsampled ground-truth track; a fraction of fixes is blanked as gaps."""
    step = max(1, int(round((1.0 / reference_rate) / float(np.median(np.diff(path.t))))))
    idx = np.arange(0, len(path.t), step)
    pos = path.pos[idx].copy()
    if gap_fraction > 0 and rng is not None and len(idx) > 2:
        blank = rng.random(len(idx)) < gap_fraction
        blank[0] = blank[-1] = False
        pos[blank] = np.nan
    return Track(path.t[idx], pos)


# ── Speed estimation ─────────────────────────────────────────


@dataclass
class SpeedEstimator:
    k: float = 3.5
    window: float = 0.5
    rate: float = 100.0
    warming_up: bool = True
    buffer: deque = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.k <= 0 or self.window <= 0:
            raise ValueError("K and window must be > 0")
        self.buffer = deque(maxlen=self.window_samples)

    @property
    def window_samples(self) -> int:
        return max(2, int(round(self.window * self.rate)))

    def update(self, acc) -> float:
        self.buffer.append(np.asarray(acc, dtype=float))
        return estimate_speed(self, np.array(self.buffer))


def estimate_speed(est: SpeedEstimator, window) -> float:
    """V = K * (sum of per-axis population variances over the window)."""
    samples = np.asarray(window, dtype=float).reshape(-1, 3)
    if len(samples) < 2:
        est.warming_up = True
        return 0.0
    est.warming_up = False
    return max(0.0, est.k * float(samples.var(axis=0).sum()))


def rolling_speed(acc: np.ndarray, k: float, window_samples: int) -> np.ndarray:
    """Per-sample speed from the trailing window, matching ``SpeedEstimator.update``."""
    acc = np.asarray(acc, dtype=float).reshape(-1, 3)
    n_total = len(acc)
    if n_total == 0:
        return np.zeros(0)
    zeros = np.zeros((1, 3))
    s1 = np.concatenate([zeros, np.cumsum(acc, axis=0)])
    s2 = np.concatenate([zeros, np.cumsum(acc ** 2, axis=0)])
    end = np.arange(1, n_total + 1)
    start = np.maximum(0, end - window_samples)
    n = (end - start)[:, None].astype(float)
    mean = (s1[end] - s1[start]) / n
    var = (s2[end] - s2[start]) / n - mean ** 2
    speed = k * np.maximum(var, 0.0).sum(axis=1)
    speed[(end - start) < 2] = 0.0
    return speed


# ── Integration ──────────────────────────────────────────────


@dataclass
class DeadReckonState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_t: float = 0.0
    traveled: float = 0.0
    renormalized: int = 0


def integrate_position(
    state: DeadReckonState,
    speed: float,
    orientation,
    dt: float,
    tolerance: float = 1e-3,
) -> DeadReckonState:
    """Advance the position by speed * heading * dt, heading from the quaternion."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    quat, flagged = _normalize_quats(np.asarray(orientation, dtype=float), tolerance)
    heading = heading_from_quat(quat)
    return DeadReckonState(
        position=np.asarray(state.position, dtype=float) + speed * heading * dt,
        last_t=state.last_t + dt,
        traveled=state.traveled + speed * dt,
        renormalized=state.renormalized + flagged,
    )


@dataclass
class DeadReckonResult:
    t: np.ndarray
    positions: np.ndarray
    traveled: np.ndarray
    speeds: np.ndarray
    renormalized: int = 0

    def as_track(self) -> Track:
        return Track(self.t, self.positions)


def dead_reckon(
    trace: ImuTrace,
    k: float,
    window_samples: int = 50,
    start=(0.0, 0.0, 0.0),
    tolerance: float = 1e-3,
) -> DeadReckonResult:
    """Vectorized replay: per-sample speed, heading and cumulative position."""
    quat, flagged = _normalize_quats(trace.quat, tolerance)
    speeds = rolling_speed(trace.acc, k, window_samples)
    headings = heading_from_quat(quat).reshape(-1, 3)
    dt = np.diff(trace.t, prepend=trace.t[0]) if len(trace.t) else np.zeros(0)
    steps = (speeds * dt)[:, None] * headings
    positions = np.asarray(start, dtype=float)[None, :] + np.cumsum(steps, axis=0)
    traveled = np.cumsum(speeds * dt)
    return DeadReckonResult(trace.t.copy(), positions, traveled, speeds, flagged)


class ImuTracker:
    """Streaming dead reckoning: one estimator and one integrator, sample by sample."""

    def __init__(self, k: float, window: float = 0.5, rate: float = 100.0,
                 start: tuple[float, float, float] = (0.0, 0.0, 0.0), t0: float = 0.0,
                 start_yaw: float = 0.0, tolerance: float = 1e-3):
        self.estimator = SpeedEstimator(k=k, window=window, rate=rate)
        self.state = DeadReckonState(position=np.asarray(start, dtype=float), last_t=t0)
        self.tolerance = tolerance
        self.last_quat = quat_from_euler(start_yaw)

    def feed(self, sample: ImuSample) -> DeadReckonState:
        speed = self.estimator.update(sample.acc)
        dt = sample.t - self.state.last_t
        self.last_quat = np.asarray(sample.quat, dtype=float)
        if dt > 0:
            self.state = integrate_position(self.state, speed, sample.quat, dt, self.tolerance)
        return self.state

    def feed_trace(self, trace: ImuTrace) -> DeadReckonState:
        for sample in trace.samples():
            self.feed(sample)
        return self.state

    @property
    def yaw(self) -> float:
        return yaw_from_quat(self.last_quat)

    def pose(self) -> Pose:
        x, y, z = self.state.position
        return Pose(float(x), float(y), float(z), self.yaw)


# ── Calibration and evaluation ───────────────────────────────


def calibrate_gain(
    measured_imu_dist: float,
    actual_ref_dist: float,
    k_seed: float = 3.5,
    mode: CalibrationMode = CalibrationMode.CORRECTIVE,
) -> float:
    """Adjusted gain from one calibration walk.

    LITERAL mode applies the ratio measured/actual as written; CORRECTIVE mode
    applies actual/measured, which scales the estimate onto the reference.
    """
    if measured_imu_dist <= 0 or actual_ref_dist <= 0:
        raise ValueError(
            f"calibration distances must be > 0, got measured={measured_imu_dist}, actual={actual_ref_dist}"
        )
    if CalibrationMode(mode) is CalibrationMode.LITERAL:
        return measured_imu_dist / actual_ref_dist * k_seed
    return actual_ref_dist / measured_imu_dist * k_seed


def calibrate_from_reference(
    trace: ImuTrace,
    reference: Track,
    k_seed: float,
    window_samples: int,
    t_start: float,
    t_end: float,
    mode: CalibrationMode = CalibrationMode.CORRECTIVE,
) -> float:
    """Calibrate K over the reference fixes inside [t_start, t_end]."""
    mask = reference.valid & (reference.t >= t_start) & (reference.t <= t_end)
    if np.count_nonzero(mask) < 2:
        raise ValueError(f"fewer than two reference fixes in [{t_start}, {t_end}] s")
    fix_t = reference.t[mask]
    result = dead_reckon(trace, k_seed, window_samples)
    traveled = np.interp([fix_t[0], fix_t[-1]], result.t, result.traveled)
    measured = float(traveled[1] - traveled[0])
    actual = reference.path_length(fix_t[0], fix_t[-1])
    return calibrate_gain(measured, actual, k_seed, mode)


@dataclass
class ErrorPoint:
    t: float
    traveled: float
    error: float
    error_pct: float


def error_series(estimated: Track, reference: Track) -> list[ErrorPoint]:
    """Error at every reference fix; gap rows are skipped, traveled counts valid fixes only."""
    valid = reference.valid
    if not valid.any():
        return []
    gaps = int(np.count_nonzero(~valid))
    if gaps:
        logger.warning("reference track has %d missing fixes; skipped", gaps)
    ref_t = reference.t[valid]
    ref_pos = reference.pos[valid]
    est = np.stack([np.interp(ref_t, estimated.t, estimated.pos[:, i]) for i in range(3)], axis=1)
    traveled = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(ref_pos, axis=0), axis=1))])
    errors = np.linalg.norm(est - ref_pos, axis=1)
    points = []
    for t, dist, err in zip(ref_t, traveled, errors):
        pct = 100.0 * err / dist if dist > 0 else 0.0
        points.append(ErrorPoint(float(t), float(dist), float(err), float(pct)))
    return points


# ── CSV codecs ───────────────────────────────────────────────


def _read_rows(path: Path, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ReplayParseError(1, "empty file") from None
        missing = [c for c in required if c not in header]
        if missing:
            raise ReplayParseError(1, f"missing column(s): {', '.join(missing)}")
        index = {c: header.index(c) for c in required + optional if c in header}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ReplayParseError(line_no, f"expected {len(header)} fields, got {len(row)}")
            yield line_no, {c: row[i].strip() for c, i in index.items()}


def read_imu_csv(path: Path) -> ImuTrace:
    rows = []
    last_t = -math.inf
    for line_no, row in _read_rows(path, IMU_COLUMNS):
        try:
            values = [float(row[c]) for c in IMU_COLUMNS]
        except ValueError as e:
            raise ReplayParseError(line_no, str(e)) from e
        if not all(math.isfinite(v) for v in values):
            raise ReplayParseError(line_no, "non-finite value")
        if values[0] <= last_t:
            raise ReplayParseError(line_no, f"timestamp {values[0]} not after {last_t}")
        last_t = values[0]
        rows.append(values)
    if not rows:
        raise ReplayParseError(2, "no samples")
    data = np.array(rows)
    return ImuTrace(data[:, 0], data[:, 1:4], data[:, 4:8])


def read_reference_csv(path: Path) -> Track:
    """Reference track t,x,y[,z]; rows with empty coordinates become gaps."""
    times, positions = [], []
    for line_no, row in _read_rows(path, ("t", "x", "y"), ("z",)):
        try:
            t = float(row["t"])
        except ValueError as e:
            raise ReplayParseError(line_no, str(e)) from e
        coords = [row["x"], row["y"], row.get("z", "0")]
        if any(c == "" for c in coords):
            positions.append([math.nan] * 3)
        else:
            try:
                positions.append([float(c) for c in coords])
            except ValueError as e:
                raise ReplayParseError(line_no, str(e)) from e
        times.append(t)
    if not times:
        raise ReplayParseError(2, "no reference rows")
    return Track(np.array(times), np.array(positions))


def write_imu_csv(trace: ImuTrace, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(IMU_COLUMNS)
        for t, acc, q in zip(trace.t, trace.acc, trace.quat):
            writer.writerow([f"{t:.4f}", *(f"{a:.9f}" for a in acc), *(f"{c:.9f}" for c in q)])
    return path


def write_track_csv(track: Track, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACK_COLUMNS)
        for t, p in zip(track.t, track.pos):
            cells = ["" if not math.isfinite(c) else f"{c:.6f}" for c in p]
            writer.writerow([f"{t:.4f}", *cells])
    return path


def write_positions_csv(result: DeadReckonResult, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("t", "x", "y", "z", "traveled"))
        for t, p, d in zip(result.t, result.positions, result.traveled):
            writer.writerow([f"{t:.4f}", f"{p[0]:.6f}", f"{p[1]:.6f}", f"{p[2]:.6f}", f"{d:.6f}"])
    return path
