"""Pinhole camera model, sphere mappings, and perspective/equirect warps.

Conventions (fixed for the whole package; the seam and shift tests depend on
them, so do not change one without the others):

* Axes are right-handed with +x right, +y up, +z camera forward. Yaw rotates
  about +y, pitch about +x, roll about +z, composed as
  ``R = Ry(yaw) @ Rx(pitch) @ Rz(roll)`` with the right-hand rule about each
  axis. Euler ranges: yaw in (-180, 180], pitch in (-90, 90), roll in
  (-180, 180]. Extrinsics are camera-to-world: ``world = R @ p_cam + t`` and
  the camera center sits at ``t``.
* Equirect continuous coordinates: u = k is the left edge of column k, pixel
  centers sit at k + 0.5. Longitude theta = atan2(x, z) grows rightward from
  +z, latitude phi = asin(y) grows upward; u = (theta/2pi + 0.5) * W and
  v = (0.5 - phi/pi) * H, so the zenith maps to the top row and +z to the
  center column.
* ``bilinear_sample`` works in pixel-index coordinates, where x = k hits the
  stored pixel k exactly. Warps convert from continuous coordinates with the
  half-pixel offset.
* The 8-DoF reduced model names its translations after what they do: ``tx``
  shifts horizontally (world +x) and ``ty`` shifts forward (world +z). The
  unused vertical component (world +y) is pinned to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryDomainError, InvalidInputError

# Latitude clamp applied before inverse-mapping equirect rows, in degrees.
# Keeps forward/backward mapping stable at the poles.
POLE_CLAMP_DEG = 90.0 - 1e-6

_ROTATION_TOL = 1e-9


class ImageBuffer:
    """An H x W x C float64 raster with samples nominally in [0, 1].

    Grayscale input of shape (H, W) is promoted to (H, W, 1). Channels must
    be 1 or 3 and every sample finite. Values may exceed [0, 1] slightly
    (warp interpolation, float fixtures); consumers that need hard bounds
    clamp at the edges (PNG encoding does).
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise InvalidInputError(f"image must be 2-D or 3-D, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise InvalidInputError(f"image must have 1 or 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"image dimensions must be positive, got {arr.shape[:2]}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("image contains non-finite samples")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def full(cls, height: int, width: int, value: float, channels: int = 3) -> "ImageBuffer":
        return cls(np.full((height, width, channels), float(value)))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"ImageBuffer({self.height}x{self.width}x{self.channels})"


@dataclass(frozen=True)
class EquirectFrame:
    """An equirectangular panorama; width must be exactly twice the height."""

    image: ImageBuffer

    def __post_init__(self):
        if self.image.width != 2 * self.image.height:
            raise InvalidInputError(
                f"equirect frame must be 2:1, got {self.image.width}x{self.image.height}"
            )

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def data(self) -> np.ndarray:
        return self.image.data


@dataclass(frozen=True)
class SceneModel:
    """Spherical scene proxy: all content lives on a sphere of this radius
    centered at the world origin. Depth is not modeled; the radius only
    matters once the camera translates away from the origin."""

    radius: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidInputError(f"scene radius must be positive and finite, got {self.radius}")


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths, principal point, and axis skew."""

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0

    DOF = 5

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "skew"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"intrinsic {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def _check_rotation(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidInputError("rotation contains non-finite entries")
    if np.max(np.abs(r.T @ r - np.eye(3))) > _ROTATION_TOL:
        raise InvalidInputError("rotation is not orthonormal within 1e-9")
    if abs(np.linalg.det(r) - 1.0) > _ROTATION_TOL:
        raise InvalidInputError("rotation determinant is not +1 within 1e-9")
    return r


def yaw_matrix(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def pitch_matrix(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def roll_matrix(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class CameraPose:
    """Camera-to-world rigid transform: ``world = rotation @ p_cam + translation``."""

    __slots__ = ("rotation", "translation")

    DOF = 6

    def __init__(self, rotation=None, translation=None):
        self.rotation = _check_rotation(np.eye(3) if rotation is None else rotation)
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=np.float64)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise InvalidInputError("translation must be a finite 3-vector")
        self.translation = t

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls()

    @classmethod
    def from_euler(
        cls,
        yaw_deg: float = 0.0,
        pitch_deg: float = 0.0,
        roll_deg: float = 0.0,
        translation=None,
    ) -> "CameraPose":
        if not (-90.0 < pitch_deg < 90.0):
            raise InvalidInputError(f"pitch must lie in (-90, 90), got {pitch_deg}")
        r = yaw_matrix(yaw_deg) @ pitch_matrix(pitch_deg) @ roll_matrix(roll_deg)
        return cls(r, translation)

    def to_euler(self) -> tuple[float, float, float]:
        """Recover (yaw, pitch, roll) in degrees, pitch on the (-90, 90) branch."""
        m = self.rotation
        pitch = math.degrees(math.asin(max(-1.0, min(1.0, -m[1, 2]))))
        yaw = math.degrees(math.atan2(m[0, 2], m[2, 2]))
        roll = math.degrees(math.atan2(m[1, 0], m[1, 1]))
        return yaw, pitch, roll

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        y, p, r = self.to_euler()
        return f"CameraPose(yaw={y:.3f}, pitch={p:.3f}, roll={r:.3f}, t={self.translation})"


@dataclass(frozen=True)
class Projection8DoF:
    """Reduced projection family with exactly 8 free scalars.

    Five intrinsics plus horizontal shift ``tx`` (world +x), forward shift
    ``ty`` (world +z), and yaw. Vertical shift, pitch, and roll are pinned to
    zero by :meth:`expand`.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    skew: float
    tx: float
    ty: float
    yaw_deg: float

    DOF = 8

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy", "skew", "tx", "ty", "yaw_deg"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"8-DoF parameter {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("8-DoF focal lengths must be positive")

    def expand(self) -> tuple[CameraIntrinsics, CameraPose]:
        """Lossless expansion into the full 11-DoF (intrinsics, pose) pair."""
        intr = CameraIntrinsics(self.fx, self.fy, self.cx, self.cy, self.skew)
        pose = CameraPose.from_euler(
            yaw_deg=self.yaw_deg, translation=(self.tx, 0.0, self.ty)
        )
        return intr, pose


def pixel_to_ray(intrinsics: CameraIntrinsics, pixel) -> np.ndarray:
    """Unit ray through a continuous pixel coordinate, camera frame.

    Applies the closed-form inverse of the upper-triangular K. Accepts a
    single (x, y) pair or an array of shape (..., 2); returns (..., 3).
    """
    p = np.asarray(pixel, dtype=np.float64)
    if p.shape[-1] != 2:
        raise InvalidInputError(f"pixel must have 2 components, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("pixel coordinates must be finite")
    x = p[..., 0]
    y = p[..., 1]
    yc = (y - intrinsics.cy) / intrinsics.fy
    xc = (x - intrinsics.cx) / intrinsics.fx - intrinsics.skew * yc / intrinsics.fx
    d = np.stack([xc, yc, np.ones_like(xc)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def apply_pose(pose: CameraPose, point) -> np.ndarray:
    """Map camera-frame points (..., 3) to world frame."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape[-1] != 3:
        raise InvalidInputError(f"point must have 3 components, got shape {p.shape}")
    return p @ pose.rotation.T + pose.translation


def ray_to_scene_point(origin, direction, scene: SceneModel) -> np.ndarray:
    """Forward intersection of rays with the scene sphere.

    ``origin`` must lie strictly inside the sphere, which guarantees exactly
    one intersection at positive ray parameter. ``direction`` is unit-length,
    shape (..., 3); broadcasting against a single origin is supported.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if o.shape[-1] != 3 or d.shape[-1] != 3:
        raise InvalidInputError("origin and direction must have 3 components")
    rho = scene.radius
    if np.linalg.norm(o, axis=-1).max() >= rho:
        raise GeometryDomainError(
            f"ray origin must lie strictly inside the scene sphere (radius {rho})"
        )
    b = np.sum(o * d, axis=-1)
    c = np.sum(o * o, axis=-1) - rho * rho
    disc = b * b - c
    if np.any(disc <= 0):
        raise GeometryDomainError("ray does not intersect the scene sphere")
    s = -b + np.sqrt(disc)
    if np.any(s <= 0):
        raise GeometryDomainError("no forward intersection with the scene sphere")
    return o + s[..., None] * d


def direction_to_equirect(direction, width: int, height: int):
    """Map unit directions to continuous equirect coordinates (u, v).

    u lies in [0, width) with the wrap column folded to 0; v lies in
    [0, height]. Returns a pair of arrays (or floats for a single direction).
    """
    if width != 2 * height:
        raise InvalidInputError(f"equirect target must be 2:1, got {width}x{height}")
    d = np.asarray(direction, dtype=np.float64)
    if d.shape[-1] != 3:
        raise InvalidInputError(f"direction must have 3 components, got shape {d.shape}")
    norm = np.linalg.norm(d, axis=-1)
    if np.any(norm == 0):
        raise InvalidInputError("zero direction has no equirect image")
    theta = np.arctan2(d[..., 0], d[..., 2])
    phi = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
    u = np.mod((theta / (2.0 * np.pi) + 0.5) * width, width)
    v = (0.5 - phi / np.pi) * height
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def equirect_to_direction(u, v, width: int, height: int) -> np.ndarray:
    """Inverse of :func:`direction_to_equirect`; u wraps modulo width.

    Latitude is clamped to +-(90 - 1e-6) degrees so rows at the very poles
    map to stable non-degenerate directions.
    """
    if width != 2 * height:
        raise InvalidInputError(f"equirect source must be 2:1, got {width}x{height}")
    uu = np.mod(np.asarray(u, dtype=np.float64), width)
    vv = np.asarray(v, dtype=np.float64)
    theta = (uu / width - 0.5) * 2.0 * np.pi
    phi = (0.5 - vv / height) * np.pi
    lim = math.radians(POLE_CLAMP_DEG)
    phi = np.clip(phi, -lim, lim)
    cp = np.cos(phi)
    return np.stack([np.sin(theta) * cp, np.sin(phi), np.cos(theta) * cp], axis=-1)


def _gather(data: np.ndarray, yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
    return data[yi, xi]


def bilinear_sample(image: ImageBuffer, x, y, wrap_horizontal: bool = False) -> np.ndarray:
    """Bilinear lookup in pixel-index coordinates.

    Integer coordinates return the stored pixel exactly. y is clamped to the
    valid rows; x wraps cyclically when ``wrap_horizontal`` is set and clamps
    otherwise. Returns (..., C).
    """
    xs = np.asarray(x, dtype=np.float64)
    ys = np.asarray(y, dtype=np.float64)
    data = image.data
    h, w = image.height, image.width

    ys = np.clip(ys, 0.0, h - 1.0)
    if wrap_horizontal:
        xs = np.mod(xs, w)
    else:
        xs = np.clip(xs, 0.0, w - 1.0)

    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    if wrap_horizontal:
        x0 = np.mod(x0, w)
        x1 = np.mod(x0 + 1, w)
    else:
        x1 = np.minimum(x0 + 1, w - 1)

    fx = fx[..., None]
    fy = fy[..., None]
    top = _gather(data, y0, x0) * (1.0 - fx) + _gather(data, y0, x1) * fx
    bot = _gather(data, y1, x0) * (1.0 - fx) + _gather(data, y1, x1) * fx
    return top * (1.0 - fy) + bot * fy


def _nearest_sample(image: ImageBuffer, x, y, wrap_horizontal: bool = False) -> np.ndarray:
    xs = np.floor(np.asarray(x, dtype=np.float64) + 0.5)
    ys = np.floor(np.asarray(y, dtype=np.float64) + 0.5)
    h, w = image.height, image.width
    ys = np.clip(ys, 0, h - 1).astype(np.intp)
    if wrap_horizontal:
        xs = np.mod(xs, w).astype(np.intp)
    else:
        xs = np.clip(xs, 0, w - 1).astype(np.intp)
    return _gather(image.data, ys, xs)


def _sample(image, x, y, wrap_horizontal, interpolation):
    if interpolation == "bilinear":
        return bilinear_sample(image, x, y, wrap_horizontal)
    if interpolation == "nearest":
        return _nearest_sample(image, x, y, wrap_horizontal)
    raise InvalidInputError(f"unknown interpolation {interpolation!r}")


def _resolve_projection(params) -> tuple[CameraIntrinsics, CameraPose]:
    if isinstance(params, Projection8DoF):
        return params.expand()
    if isinstance(params, tuple) and len(params) == 2:
        intr, pose = params
        if isinstance(intr, CameraIntrinsics) and isinstance(pose, CameraPose):
            return intr, pose
    raise InvalidInputError(
        "projection parameters must be a Projection8DoF or an (intrinsics, pose) pair"
    )


def warp_perspective_to_equirect(
    src: ImageBuffer,
    params,
    out_width: int,
    out_height: int,
    scene: SceneModel = SceneModel(),
    interpolation: str = "bilinear",
) -> tuple[EquirectFrame, ImageBuffer]:
    """Backward-warp a perspective image onto an equirect panorama.

    Every output pixel center is inverse-mapped: equirect direction from the
    world origin, scene point on the sphere, camera-frame projection through
    K, then a source lookup when the point lands in front of the camera and
    inside the source extent. Returns the panorama and a {0,1} coverage mask.
    """
    if out_width != 2 * out_height:
        raise InvalidInputError(f"equirect output must be 2:1, got {out_width}x{out_height}")
    intr, pose = _resolve_projection(params)
    rho = scene.radius
    if np.linalg.norm(pose.translation) >= rho:
        raise GeometryDomainError(
            f"camera center {pose.translation} lies outside the scene sphere (radius {rho})"
        )

    jj, ii = np.meshgrid(np.arange(out_width), np.arange(out_height))
    d = equirect_to_direction(jj + 0.5, ii + 0.5, out_width, out_height)
    p_cam = (rho * d - pose.translation) @ pose.rotation
    z = p_cam[..., 2]
    front = z > 0.0
    zsafe = np.where(front, z, 1.0)
    xn = p_cam[..., 0] / zsafe
    yn = p_cam[..., 1] / zsafe
    sx = intr.fx * xn + intr.skew * yn + intr.cx
    sy = intr.fy * yn + intr.cy
    inside = (
        front & (sx >= 0.0) & (sx <= src.width) & (sy >= 0.0) & (sy <= src.height)
    )

    values = _sample(src, sx - 0.5, sy - 0.5, False, interpolation)
    out = np.where(inside[..., None], values, 0.0)
    mask = inside.astype(np.float64)[..., None]
    return EquirectFrame(ImageBuffer(out)), ImageBuffer(mask)


def warp_equirect_to_perspective(
    src: EquirectFrame,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    out_width: int,
    out_height: int,
    interpolation: str = "bilinear",
) -> ImageBuffer:
    """Extract a perspective view from a panorama (rotation only).

    The panorama is a pure direction field, so the pose translation is
    ignored by construction. Horizontal wrap is honored when sampling.
    """
    if out_width < 1 or out_height < 1:
        raise InvalidInputError("output dimensions must be positive")
    jj, ii = np.meshgrid(np.arange(out_width), np.arange(out_height))
    pix = np.stack([jj + 0.5, ii + 0.5], axis=-1)
    d_cam = pixel_to_ray(intrinsics, pix)
    d_world = d_cam @ pose.rotation.T
    u, v = direction_to_equirect(d_world, src.width, src.height)
    return ImageBuffer(_sample(src.image, u - 0.5, v - 0.5, True, interpolation))


def yaw_shift(frame: EquirectFrame, yaw_degrees: float) -> EquirectFrame:
    """Cyclically shift a panorama by the column offset equivalent to a yaw.

    Positive yaw shifts content rightward by ``yaw/360 * width`` pixels,
    matching what re-warping with that camera yaw produces. Integral shifts
    are exact rolls; fractional shifts resample bilinearly with wrap.
    """
    if not math.isfinite(yaw_degrees):
        raise InvalidInputError("yaw must be finite")
    w = frame.width
    shift = yaw_degrees / 360.0 * w
    nearest = round(shift)
    if abs(shift - nearest) < 1e-9:
        return EquirectFrame(ImageBuffer(np.roll(frame.data, int(nearest) % w, axis=1)))
    jj = np.arange(w, dtype=np.float64)
    xs = np.broadcast_to(np.mod(jj - shift, w), (frame.height, w))
    ys = np.broadcast_to(np.arange(frame.height, dtype=np.float64)[:, None], (frame.height, w))
    return EquirectFrame(ImageBuffer(bilinear_sample(frame.image, xs, ys, wrap_horizontal=True)))


def solid_angle_fraction(mask: ImageBuffer) -> float:
    """Fraction of the full sphere covered by a 2:1 equirect mask.

    Rows are weighted by the cosine of their center latitude, so the value
    estimates solid angle rather than raw pixel share.
    """
    if mask.width != 2 * mask.height:
        raise InvalidInputError("coverage mask must be a 2:1 equirect raster")
    h = mask.height
    phi = (0.5 - (np.arange(h) + 0.5) / h) * np.pi
    weights = np.cos(phi)[:, None]
    m = mask.data[..., 0]
    return float((m * weights).sum() / (weights.sum() * mask.width))
