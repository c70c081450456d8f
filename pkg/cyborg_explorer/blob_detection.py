"""Scale-space thermal blob detector, pixel-to-angle map and target estimator.

Pipeline: 3x3 median, then for each Gaussian scale a 3x3 Laplacian; the hot
spot is the lowest (most negative) response over all positions and scales.
All filters use replicate padding.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .config import BlobSettings, CameraModel
from .models import BlobResult, Pose, TargetEstimate
from .utils import normalize_angle

logger = logging.getLogger(__name__)

LAPLACIAN_3X3 = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

DEFAULT_SCALES: tuple[tuple[int, float], ...] = ((33, 5.0), (27, 4.0), (21, 3.0))


def _as_array(img) -> np.ndarray:
    return np.asarray(getattr(img, "temps", img), dtype=float)


def median3(img) -> np.ndarray:
    return ndimage.median_filter(_as_array(img), size=3, mode="nearest")


@lru_cache(maxsize=16)
def _gaussian_kernel_cached(size: int, sigma: float, normalize: bool) -> np.ndarray:
    half = (size - 1) / 2.0
    ax = np.arange(size) - half
    xx, yy = np.meshgrid(ax, ax)
    kernel = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2)) / (2.0 * math.pi * sigma ** 2)
    if normalize:
        kernel = kernel / kernel.sum()
    kernel.setflags(write=False)
    return kernel


def gaussian_kernel(size: int, sigma: float, normalize: bool = True) -> np.ndarray:
    """Sampled 2D Gaussian, optionally normalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    return _gaussian_kernel_cached(int(size), float(sigma), normalize)


def gaussian_smooth(img, size: int, sigma: float) -> np.ndarray:
    return ndimage.convolve(_as_array(img), gaussian_kernel(size, sigma), mode="nearest")


def laplacian3(img) -> np.ndarray:
    return ndimage.convolve(_as_array(img), LAPLACIAN_3X3, mode="nearest")


def kernel_noise_gain(size: int, sigma: float) -> float:
    """L2 norm of the Gaussian-then-Laplacian kernel: response sd per unit white noise."""
    g = np.pad(gaussian_kernel(size, sigma), 1)
    combined = ndimage.convolve(g, LAPLACIAN_3X3, mode="constant")
    return float(np.sqrt(np.sum(combined ** 2)))


def nomination_threshold(settings: BlobSettings, noise_sd: float) -> float:
    """Responses must fall below minus this value to nominate a blob."""
    smallest = min(settings.scales, key=lambda s: s[0])
    gain = kernel_noise_gain(int(smallest[0]), float(smallest[1]))
    return max(settings.noise_sigmas * noise_sd * gain, settings.min_response)


def scale_responses(img, settings: BlobSettings | None = None) -> list[tuple[int, float, np.ndarray]]:
    """(size, sigma, response grid) per scale, smallest kernel first."""
    settings = settings or BlobSettings()
    filtered = median3(img)
    out = []
    for size, sigma in sorted(settings.scales, key=lambda s: s[0]):
        response = laplacian3(gaussian_smooth(filtered, int(size), float(sigma)))
        out.append((int(size), float(sigma), response))
    return out


def detect_blob(
    img,
    settings: BlobSettings | None = None,
    noise_sd: float = 0.3,
) -> BlobResult | None:
    """Lowest Laplacian response over all positions and scales, or None below threshold.

    Ties go to the smallest kernel, then to row-major order.
    """
    settings = settings or BlobSettings()
    threshold = nomination_threshold(settings, noise_sd)
    best: BlobResult | None = None
    best_score = math.inf
    for size, sigma, response in scale_responses(img, settings):
        score_grid = response * sigma ** 2 if settings.scale_normalized else response
        flat = int(np.argmin(score_grid))
        row, col = divmod(flat, score_grid.shape[1])
        score = float(score_grid[row, col])
        if score < best_score:
            best_score = score
            best = BlobResult(u=col + 1, v=row + 1, response=float(response[row, col]), scale=size)
    if best is None or not best.response < -threshold:
        return None
    logger.debug("blob at u=%d v=%d scale=%d response=%.4f", best.u, best.v, best.scale, best.response)
    return best


def pixel_to_angle(u: int, pixels: int = 32, fov: float = 90.0) -> float:
    """Column index to angle from the right edge of the field of view."""
    if isinstance(u, bool) or not isinstance(u, (int, np.integer)):
        raise ValueError(f"u must be an integer, got {u!r}")
    if not 1 <= u <= pixels:
        raise ValueError(f"u must be in [1, {pixels}], got {u}")
    return (u - 1) * fov / (pixels - 1)


def sensor_column(u: int, cam: CameraModel) -> int:
    """Display column to the column index the angle map expects."""
    return cam.pixels + 1 - u if cam.mirrored else u


def blob_alpha(blob: BlobResult, cam: CameraModel) -> float:
    return pixel_to_angle(sensor_column(blob.u, cam), cam.pixels, cam.h_fov)


def estimate_target(insect: Pose, alpha: float, step: float, fov: float = 90.0) -> TargetEstimate:
    """Point ``step`` metres from the insect along bearing yaw - fov/2 + alpha."""
    if not 0.0 <= alpha <= fov:
        raise ValueError(f"alpha must be in [0, {fov}], got {alpha}")
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    upsilon = normalize_angle(insect.yaw - fov / 2.0 + alpha)
    rad = math.radians(upsilon)
    return TargetEstimate(
        x_t=insect.x + step * math.cos(rad),
        y_t=insect.y + step * math.sin(rad),
        upsilon=upsilon,
        alpha=alpha,
        step=step,
    )


# ── Evaluation helpers ───────────────────────────────────────


def hottest_region(img) -> np.ndarray:
    """Mask of the bounding box (grown by one pixel) of the hottest connected region.

    The region is the connected component containing the maximum pixel among
    pixels above the midpoint between the frame median and its maximum.
    """
    temps = _as_array(img)
    peak = float(temps.max())
    cutoff = (float(np.median(temps)) + peak) / 2.0
    labels, _ = ndimage.label(temps >= cutoff)
    row, col = np.unravel_index(int(np.argmax(temps)), temps.shape)
    component = labels == labels[row, col]
    rows = np.flatnonzero(component.any(axis=1))
    cols = np.flatnonzero(component.any(axis=0))
    mask = np.zeros_like(component)
    mask[
        max(0, rows[0] - 1): min(temps.shape[0], rows[-1] + 2),
        max(0, cols[0] - 1): min(temps.shape[1], cols[-1] + 2),
    ] = True
    return mask


def blob_in_hottest_region(blob: BlobResult | None, img) -> bool:
    if blob is None:
        return False
    return bool(hottest_region(img)[blob.v - 1, blob.u - 1])
