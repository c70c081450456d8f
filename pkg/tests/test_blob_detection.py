import math

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view

from cyborg_explorer.blob_detection import (
    blob_alpha,
    blob_in_hottest_region,
    detect_blob,
    estimate_target,
    gaussian_kernel,
    gaussian_smooth,
    hottest_region,
    laplacian3,
    median3,
    nomination_threshold,
    pixel_to_angle,
    scale_responses,
    sensor_column,
)
from cyborg_explorer.config import BlobSettings, CameraModel
from cyborg_explorer.ir_camera import IrImage, render_ir
from cyborg_explorer.models import BlobResult, Pose, SourceKind, ThermalSource
from cyborg_explorer.world import Arena, World, make_rng

from .conftest import flat_frame, hot_frame


# ── Pixel-to-angle and target estimate ───────────────────────


@pytest.mark.parametrize("u, alpha", [(1, 0.0), (32, 90.0), (16, 15 * 90.0 / 31)])
def test_pixel_to_angle(u, alpha):
    assert pixel_to_angle(u) == pytest.approx(alpha)


@pytest.mark.parametrize("u", [0, 33, 2.5, True])
def test_pixel_to_angle_rejects_bad_columns(u):
    with pytest.raises(ValueError):
        pixel_to_angle(u)


def test_mirrored_sensor_flips_columns():
    cam = CameraModel(mirrored=True)
    assert sensor_column(1, cam) == 32
    assert sensor_column(32, cam) == 1
    assert blob_alpha(BlobResult(u=1, v=16, response=-1.0, scale=21), cam) == pytest.approx(90.0)
    assert sensor_column(7, CameraModel(mirrored=False)) == 7


def test_estimate_keeps_the_step_length():
    rng = make_rng(99)
    for _ in range(10_000):
        insect = Pose(rng.uniform(-10, 10), rng.uniform(-10, 10), 0.0, rng.uniform(-180, 180))
        step = rng.uniform(0.01, 5.0)
        est = estimate_target(insect, rng.uniform(0.0, 90.0), step)
        assert math.hypot(est.x_t - insect.x, est.y_t - insect.y) == pytest.approx(step, abs=1e-9)


@pytest.mark.parametrize("alpha, expected", [
    (45.0, (2.0, 0.0)),
    (0.0, (math.sqrt(2.0), -math.sqrt(2.0))),
    (90.0, (math.sqrt(2.0), math.sqrt(2.0))),
])
def test_estimate_bearing(alpha, expected):
    est = estimate_target(Pose(0.0, 0.0, 0.0, 0.0), alpha, 2.0)
    assert (est.x_t, est.y_t) == pytest.approx(expected)


@pytest.mark.parametrize("turn", [30.0, 90.0, -135.0])
def test_estimate_rotates_with_the_insect(turn):
    rng = make_rng(7)
    for _ in range(200):
        x, y, yaw = rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-180, 180)
        alpha, step = rng.uniform(0.0, 90.0), rng.uniform(0.1, 3.0)
        base = estimate_target(Pose(x, y, 0.0, yaw), alpha, step)
        turned = estimate_target(Pose(x, y, 0.0, yaw + turn), alpha, step)
        c, s = math.cos(math.radians(turn)), math.sin(math.radians(turn))
        dx, dy = base.x_t - x, base.y_t - y
        assert turned.x_t - x == pytest.approx(c * dx - s * dy, abs=1e-9)
        assert turned.y_t - y == pytest.approx(s * dx + c * dy, abs=1e-9)


def test_estimate_validates_inputs():
    with pytest.raises(ValueError):
        estimate_target(Pose(), 91.0, 1.0)
    with pytest.raises(ValueError):
        estimate_target(Pose(), 45.0, 0.0)


# ── Detector against a brute-force oracle ────────────────────


def _oracle_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _oracle(temps: np.ndarray, scales) -> tuple[int, int, int, float]:
    """Exhaustive arg-min over every position of every scale, replicate borders."""
    windows = sliding_window_view(np.pad(temps, 1, mode="edge"), (3, 3))
    filtered = np.median(windows, axis=(2, 3))
    best = None
    for size, sigma in sorted(scales, key=lambda s: s[0]):
        half = size // 2
        padded = np.pad(filtered, half, mode="edge")
        smooth = np.einsum("ijkl,kl->ij", sliding_window_view(padded, (size, size)), _oracle_kernel(size, sigma))
        p = np.pad(smooth, 1, mode="edge")
        lap = p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * smooth
        for row in range(lap.shape[0]):
            for col in range(lap.shape[1]):
                if best is None or lap[row, col] < best[3]:
                    best = (col + 1, row + 1, int(size), float(lap[row, col]))
    return best


def _synthetic(rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:32, 0:32]
    cx, cy = rng.uniform(0, 31, 2)
    width = rng.uniform(1.5, 4.0)
    peak = rng.uniform(4.0, 10.0)
    blob = peak * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * width ** 2))
    return 25.0 + blob + rng.normal(0.0, 0.3, (32, 32))


def test_detector_matches_oracle():
    rng = make_rng(2024)
    settings = BlobSettings()
    for _ in range(100):
        temps = _synthetic(rng)
        blob = detect_blob(IrImage(temps), settings, noise_sd=0.3)
        u, v, size, response = _oracle(temps, settings.scales)
        assert blob is not None
        assert (blob.u, blob.v, blob.scale) == (u, v, size)
        assert blob.response == pytest.approx(response, abs=1e-9)


def test_flat_frame_has_no_blob():
    assert detect_blob(flat_frame(25.0)) is None


def test_threshold_scales_with_noise():
    settings = BlobSettings()
    assert nomination_threshold(settings, 0.0) == settings.min_response
    assert nomination_threshold(settings, 0.6) == pytest.approx(2.0 * nomination_threshold(settings, 0.3))


def test_gaussian_kernel_is_normalized_and_odd():
    assert gaussian_kernel(21, 3.0).sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        gaussian_kernel(20, 3.0)


def test_gaussian_kernel_centre_weight():
    assert gaussian_kernel(21, 3.0)[10, 10] == pytest.approx(1.0 / (2.0 * math.pi * 9.0), rel=0.01)


def test_median_removes_single_hot_pixels():
    temps = np.full((32, 32), 25.0)
    temps[10, 10] = 80.0
    assert np.array_equal(median3(temps), np.full((32, 32), 25.0))


def test_flat_field_survives_smoothing_and_has_no_laplacian():
    temps = np.full((32, 32), 25.0)
    assert gaussian_smooth(temps, 21, 3.0) == pytest.approx(temps)
    assert np.allclose(laplacian3(temps), 0.0)


def test_laplacian_of_a_ramp_vanishes_inside():
    ramp = np.add.outer(0.5 * np.arange(32.0), 0.25 * np.arange(32.0))
    assert np.allclose(laplacian3(ramp)[1:-1, 1:-1], 0.0)


def test_laplacian_is_negative_on_a_peak():
    temps = np.full((32, 32), 25.0)
    temps[16, 16] = 30.0
    response = laplacian3(temps)
    assert response[16, 16] == pytest.approx(-20.0)
    assert response.argmin() == 16 * 32 + 16


def test_hot_square_is_found_inside_the_hottest_region():
    frame = hot_frame(8, 20, size=6)
    blob = detect_blob(frame)
    assert blob is not None
    assert abs(blob.u - 8) <= 1 and abs(blob.v - 20) <= 1
    assert blob_in_hottest_region(blob, frame)
    region = hottest_region(frame)
    assert not region[0, 31]
    assert not blob_in_hottest_region(None, frame)


def test_rendered_human_bearing_is_recovered():
    cam = CameraModel()
    bearing = 30.0
    human = ThermalSource(SourceKind.HUMAN, (1.5 * math.cos(math.radians(bearing)),
                                             1.5 * math.sin(math.radians(bearing))), 0.25, 33.0)
    world = World(Arena(8.0, 8.0, (-4.0, -4.0)), [human])
    frame = render_ir(world, Pose(0.0, 0.0, 0.0, 0.0), cam, make_rng(11))
    blob = detect_blob(frame, BlobSettings(), cam.noise_sd)
    assert blob is not None
    est = estimate_target(Pose(), blob_alpha(blob, cam), 1.5, cam.h_fov)
    assert est.upsilon == pytest.approx(bearing, abs=6.0)


def _wide_blob(width: float = 6.0, peak: float = 8.0) -> IrImage:
    yy, xx = np.mgrid[0:32, 0:32]
    return IrImage(25.0 + peak * np.exp(-((xx - 15) ** 2 + (yy - 15) ** 2) / (2.0 * width ** 2)))


def test_normalized_scales_prefer_the_matching_kernel():
    frame = _wide_blob()
    raw = detect_blob(frame, BlobSettings())
    normalized = detect_blob(frame, BlobSettings(scale_normalized=True))
    assert (raw.u, raw.v, raw.scale) == (16, 16, 21)
    assert (normalized.u, normalized.v, normalized.scale) == (16, 16, 33)


def test_normalized_blob_reports_the_raw_response():
    frame = _wide_blob()
    settings = BlobSettings(scale_normalized=True)
    blob = detect_blob(frame, settings)
    response = {size: grid for size, _, grid in scale_responses(frame, settings)}[blob.scale]
    assert blob.response == pytest.approx(response[blob.v - 1, blob.u - 1])
    assert blob.response < 0.0
