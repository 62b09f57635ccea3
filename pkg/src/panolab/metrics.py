"""Panoramic video metrics: seam consistency, optical-flow motion, pose stats.

The two headline numbers are the left/right seam cosine similarity of an
equirect frame and the mean dense-flow magnitude over four cardinal
perspective crops. Flow itself is Farneback's polynomial-expansion method as
implemented by OpenCV; parameters map one-to-one onto
``cv2.calcOpticalFlowFarneback``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import cv2
import numpy as np

from .errors import InvalidInputError, UndefinedSimilarityError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    EquirectFrame,
    ImageBuffer,
    warp_equirect_to_perspective,
)

# Rec. 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])

# Cardinal crop directions, in report order.
CARDINAL_YAWS = (("front", 0.0), ("back", 180.0), ("left", -90.0), ("right", 90.0))


# ---------------------------------------------------------------------------
# Seam consistency

def seam_consistency(frame: EquirectFrame, strip_width: int = 2) -> float:
    """Cosine similarity between the leftmost and rightmost pixel strips.

    Strips are flattened row-major over (row, strip column, channel). A
    perfectly wrapped panorama scores 1.0; identical strips return exactly
    1.0. An all-zero strip makes the similarity undefined and raises instead
    of silently returning 0.
    """
    if strip_width < 1:
        raise InvalidInputError(f"strip_width must be >= 1, got {strip_width}")
    img = frame.image
    if img.channels != 3:
        raise InvalidInputError("seam consistency expects a 3-channel frame")
    if img.width < 2 * strip_width:
        raise InvalidInputError(
            f"frame width {img.width} cannot hold two {strip_width}-pixel strips"
        )
    left = img.data[:, :strip_width, :].ravel()
    right = img.data[:, img.width - strip_width :, :].ravel()
    nl = float(np.linalg.norm(left))
    nr = float(np.linalg.norm(right))
    if nl == 0.0:
        raise UndefinedSimilarityError("left seam strip is identically zero")
    if nr == 0.0:
        raise UndefinedSimilarityError("right seam strip is identically zero")
    if np.array_equal(left, right):
        return 1.0
    return float(np.clip(float(left @ right) / (nl * nr), -1.0, 1.0))


@dataclass
class SeamReport:
    strip_width: int
    per_frame: list[float]
    mean: float

    def to_dict(self) -> dict:
        return {
            "strip_width": self.strip_width,
            "per_frame": [float(v) for v in self.per_frame],
            "mean": float(self.mean),
        }


def seam_sequence(frames: Sequence[EquirectFrame], strip_width: int = 2) -> SeamReport:
    """Per-frame seam consistency plus its arithmetic mean."""
    if len(frames) < 1:
        raise InvalidInputError("seam_sequence needs at least one frame")
    first = frames[0]
    scores = []
    for index, frame in enumerate(frames):
        if (frame.width, frame.height) != (first.width, first.height):
            raise InvalidInputError(
                f"frame {index} is {frame.width}x{frame.height}, "
                f"expected {first.width}x{first.height}"
            )
        try:
            scores.append(seam_consistency(frame, strip_width))
        except UndefinedSimilarityError as err:
            raise UndefinedSimilarityError(f"frame {index}: {err}") from None
    return SeamReport(strip_width, scores, float(np.mean(scores)))


# ---------------------------------------------------------------------------
# Dense optical flow

@dataclass(frozen=True)
class FarnebackParams:
    """Parameters for Farneback dense flow; defaults follow the classic
    pyramidal configuration (0.5 scale, 3 levels, 15 window)."""

    pyr_scale: float = 0.5
    levels: int = 3
    window_size: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.1

    def __post_init__(self):
        if not 0.0 < self.pyr_scale < 1.0:
            raise InvalidInputError(f"pyr_scale must lie in (0, 1), got {self.pyr_scale}")
        if self.levels < 1:
            raise InvalidInputError(f"levels must be >= 1, got {self.levels}")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise InvalidInputError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.iterations < 1:
            raise InvalidInputError(f"iterations must be >= 1, got {self.iterations}")
        if self.poly_n < 3 or self.poly_n % 2 == 0:
            raise InvalidInputError(f"poly_n must be odd and >= 3, got {self.poly_n}")
        if not self.poly_sigma > 0:
            raise InvalidInputError(f"poly_sigma must be positive, got {self.poly_sigma}")

    def to_dict(self) -> dict:
        return {
            "pyr_scale": self.pyr_scale,
            "levels": self.levels,
            "window_size": self.window_size,
            "iterations": self.iterations,
            "poly_n": self.poly_n,
            "poly_sigma": self.poly_sigma,
        }


class FlowField:
    """Dense displacement field, (H, W, 2) with (dx, dy) in pixels."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise InvalidInputError(f"flow field must be (H, W, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("flow field contains non-finite values")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.data[..., 0], self.data[..., 1])


def luminance(image: ImageBuffer) -> np.ndarray:
    """Rec. 601 luma in [0, 1]; single-channel images pass through."""
    if image.channels == 1:
        return image.data[..., 0]
    return image.data @ _LUMA


def farneback_flow(prev: ImageBuffer, nxt: ImageBuffer, params: FarnebackParams | None = None) -> FlowField:
    """Dense flow from ``prev`` to ``nxt`` on Rec. 601 luminance."""
    if params is None:
        params = FarnebackParams()
    if (prev.width, prev.height, prev.channels) != (nxt.width, nxt.height, nxt.channels):
        raise InvalidInputError(
            f"frame dimensions differ: {prev.width}x{prev.height}x{prev.channels} vs "
            f"{nxt.width}x{nxt.height}x{nxt.channels}"
        )
    a = np.rint(np.clip(luminance(prev), 0.0, 1.0) * 255.0).astype(np.uint8)
    b = np.rint(np.clip(luminance(nxt), 0.0, 1.0) * 255.0).astype(np.uint8)
    flow = cv2.calcOpticalFlowFarneback(
        a,
        b,
        None,
        params.pyr_scale,
        params.levels,
        params.window_size,
        params.iterations,
        params.poly_n,
        params.poly_sigma,
        0,
    )
    return FlowField(flow)


def interior_mask(height: int, width: int, border: int) -> np.ndarray:
    """Boolean mask deselecting a border of the given width."""
    if border < 0:
        raise InvalidInputError(f"border must be >= 0, got {border}")
    mask = np.zeros((height, width), dtype=bool)
    if 2 * border < height and 2 * border < width:
        mask[border : height - border, border : width - border] = True
    return mask


def motion_magnitude(flow: FlowField, mask: np.ndarray | None = None) -> float:
    """Mean per-pixel displacement magnitude, optionally over a mask."""
    mag = flow.magnitude()
    if mask is None:
        return float(mag.mean())
    m = np.asarray(mask, dtype=bool)
    if m.shape != mag.shape:
        raise InvalidInputError(f"mask shape {m.shape} does not match flow {mag.shape}")
    if not m.any():
        raise InvalidInputError("mask selects no pixels")
    return float(mag[m].mean())


# ---------------------------------------------------------------------------
# Cardinal motion

@dataclass
class MotionReport:
    front: float
    back: float
    left: float
    right: float
    per_pair: dict[str, list[float]]
    fov_degrees: float
    crop_size: int
    stride: int
    exclude_border: bool
    farneback: FarnebackParams = field(default_factory=FarnebackParams)

    def to_dict(self) -> dict:
        return {
            "front": self.front,
            "back": self.back,
            "left": self.left,
            "right": self.right,
            "per_pair": {k: [float(v) for v in vals] for k, vals in self.per_pair.items()},
            "fov_degrees": self.fov_degrees,
            "crop_size": self.crop_size,
            "stride": self.stride,
            "exclude_border": self.exclude_border,
            "farneback": self.farneback.to_dict(),
        }


def cardinal_crop_intrinsics(fov_degrees: float, crop_size: int) -> CameraIntrinsics:
    """Square pinhole intrinsics for a cardinal crop of the given field of view."""
    if not 0.0 < fov_degrees < 180.0:
        raise InvalidInputError(f"field of view must lie in (0, 180), got {fov_degrees}")
    if crop_size < 2:
        raise InvalidInputError(f"crop_size must be >= 2, got {crop_size}")
    f = crop_size / (2.0 * math.tan(math.radians(fov_degrees) / 2.0))
    return CameraIntrinsics(f, f, crop_size / 2.0, crop_size / 2.0, 0.0)


def cardinal_motion(
    frames: Sequence[EquirectFrame],
    fov_degrees: float = 90.0,
    crop_size: int = 256,
    params: FarnebackParams | None = None,
    stride: int = 1,
    exclude_border: bool = True,
) -> MotionReport:
    """Mean flow magnitude over front/back/left/right perspective crops.

    Frames are subsampled by ``stride`` and flow runs over the remaining
    consecutive pairs. Flow statistics exclude a window-size border unless
    ``exclude_border`` is turned off; the report records every setting since
    the numbers are only comparable at fixed crop geometry.
    """
    if params is None:
        params = FarnebackParams()
    if stride < 1:
        raise InvalidInputError(f"stride must be >= 1, got {stride}")
    picked = list(frames[::stride])
    if len(picked) < 2:
        raise InvalidInputError(
            f"need at least 2 frames after stride {stride}, got {len(picked)}"
        )
    intr = cardinal_crop_intrinsics(fov_degrees, crop_size)
    mask = interior_mask(crop_size, crop_size, params.window_size) if exclude_border else None
    per_pair: dict[str, list[float]] = {}
    means: dict[str, float] = {}
    for name, yaw in CARDINAL_YAWS:
        pose = CameraPose.from_euler(yaw_deg=yaw)
        crops = [
            warp_equirect_to_perspective(f, intr, pose, crop_size, crop_size) for f in picked
        ]
        mags = [
            motion_magnitude(farneback_flow(a, b, params), mask)
            for a, b in zip(crops, crops[1:])
        ]
        per_pair[name] = mags
        means[name] = float(np.mean(mags))
    return MotionReport(
        front=means["front"],
        back=means["back"],
        left=means["left"],
        right=means["right"],
        per_pair=per_pair,
        fov_degrees=fov_degrees,
        crop_size=crop_size,
        stride=stride,
        exclude_border=exclude_border,
        farneback=params,
    )


# ---------------------------------------------------------------------------
# Pose statistics

POSE_FIELDS = ("tx", "ty", "tz", "pitch_deg", "yaw_deg", "roll_deg")

POSE_STAT_LABELS = (
    "Horizontal shift (tx)",
    "Forward shift (ty)",
    "Vertical shift (tz)",
    "Pitch",
    "Yaw",
    "Roll",
)


@dataclass
class PoseLog:
    """Per-frame generation parameters: three shifts (meters) and three
    angles (degrees), keyed by strictly increasing frame indices."""

    frames: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.frames.ndim != 1 or self.values.shape != (self.frames.size, 6):
            raise InvalidInputError(
                f"pose log needs frames (N,) and values (N, 6), got "
                f"{self.frames.shape} and {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("pose log contains non-finite values")
        if self.frames.size > 1 and not np.all(np.diff(self.frames) > 0):
            raise InvalidInputError("pose log frames must be strictly increasing")

    def __len__(self) -> int:
        return int(self.frames.size)

    def column(self, name: str) -> np.ndarray:
        if name not in POSE_FIELDS:
            raise InvalidInputError(f"unknown pose field {name!r}, expected one of {POSE_FIELDS}")
        return self.values[:, POSE_FIELDS.index(name)]


def pose_statistics(log: PoseLog) -> list[tuple[str, float, float]]:
    """Sample mean and sample standard deviation (ddof=1) per parameter.

    Rows come back in fixed order: horizontal, forward, and vertical shift,
    then pitch, yaw, roll.
    """
    if len(log) < 2:
        raise InvalidInputError("pose statistics need at least 2 records")
    rows = []
    for label, column in zip(POSE_STAT_LABELS, log.values.T):
        rows.append((label, float(np.mean(column)), float(np.std(column, ddof=1))))
    return rows


# ---------------------------------------------------------------------------
# Image comparison helper

def psnr(a: ImageBuffer, b: ImageBuffer, mask: np.ndarray | None = None, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, optionally restricted to a mask."""
    if a.data.shape != b.data.shape:
        raise InvalidInputError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")
    err = (a.data - b.data) ** 2
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != err.shape[:2]:
            raise InvalidInputError(f"mask shape {m.shape} does not match image {err.shape[:2]}")
        if not m.any():
            raise InvalidInputError("mask selects no pixels")
        err = err[m]
    mse = float(err.mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)
