"""Procedural test content: band-limited textures and rotating panoramas.

Everything here is seeded and fully deterministic. Textures are sums of a
few sinusoids, normalized into (0, 1) without clipping so they stay smooth;
planar textures are periodic in both axes, which makes integer np.roll an
exact cyclic shift (handy for flow ground truth).
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .geometry import EquirectFrame, ImageBuffer, equirect_to_direction, yaw_matrix


def smooth_texture(height: int, width: int, channels: int = 3, seed: int = 0,
                   components: int = 6, max_cycles: int = 4) -> ImageBuffer:
    """Smooth periodic texture with samples in roughly [0.05, 0.95].

    ``max_cycles`` bounds the integer frequency per axis. Low values give
    gently varying images that survive repeated resampling (projection round
    trips); dense-flow estimation wants finer detail, around 16 cycles and
    up at 256 pixels.
    """
    if height < 1 or width < 1:
        raise InvalidInputError("texture dimensions must be positive")
    if max_cycles < 1:
        raise InvalidInputError("max_cycles must be >= 1")
    rng = np.random.default_rng(seed)
    px = (np.arange(width) + 0.5) / width
    py = (np.arange(height) + 0.5) / height
    xx, yy = np.meshgrid(px, py)
    data = np.empty((height, width, channels))
    for c in range(channels):
        total = np.zeros((height, width))
        weight = 0.0
        for _ in range(components):
            kx, ky = 0, 0
            while kx == 0 and ky == 0:
                kx = int(rng.integers(-max_cycles, max_cycles + 1))
                ky = int(rng.integers(-max_cycles, max_cycles + 1))
            amp = float(rng.uniform(0.5, 1.0))
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            total += amp * np.sin(2.0 * np.pi * (kx * xx + ky * yy) + phase)
            weight += amp
        data[:, :, c] = 0.5 + 0.45 * total / weight
    return ImageBuffer(data)


def _sphere_field(directions: np.ndarray, rng: np.random.Generator,
                  components: int, omega_range: tuple[float, float]) -> np.ndarray:
    total = np.zeros(directions.shape[:-1])
    weight = 0.0
    for _ in range(components):
        normal = rng.standard_normal(3)
        normal /= np.linalg.norm(normal)
        omega = float(rng.uniform(*omega_range))
        amp = float(rng.uniform(0.5, 1.0))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        total += amp * np.sin(omega * (directions @ normal) + phase)
        weight += amp
    return 0.5 + 0.45 * total / weight


def sphere_texture_frame(width: int, height: int, seed: int = 0,
                         components: int = 8, yaw_deg: float = 0.0,
                         omega_range: tuple[float, float] = (2.0, 8.0)) -> EquirectFrame:
    """Render a smooth function on the sphere into an equirect frame.

    The texture is evaluated directly at each pixel-center direction, so the
    result wraps perfectly at the left/right seam. ``yaw_deg`` rotates the
    scene about the vertical axis before sampling (content moves left as the
    value grows), which produces exact rotated views without resampling.
    """
    jj, ii = np.meshgrid(np.arange(width), np.arange(height))
    directions = equirect_to_direction(jj + 0.5, ii + 0.5, width, height)
    if yaw_deg != 0.0:
        directions = directions @ yaw_matrix(yaw_deg).T
    rng = np.random.default_rng(seed)
    channels = [_sphere_field(directions, rng, components, omega_range) for _ in range(3)]
    return EquirectFrame(ImageBuffer(np.stack(channels, axis=-1)))


def rotating_sequence(n_frames: int, width: int, height: int,
                      yaw_step_deg: float, seed: int = 0, components: int = 8,
                      omega_range: tuple[float, float] = (20.0, 60.0)) -> list[EquirectFrame]:
    """Panorama sequence of one scene texture rotating by a fixed yaw step.

    Defaults to fine-grained texture so dense flow has structure to latch
    onto.
    """
    if n_frames < 1:
        raise InvalidInputError("sequence needs at least one frame")
    return [
        sphere_texture_frame(width, height, seed=seed, components=components,
                             yaw_deg=k * yaw_step_deg, omega_range=omega_range)
        for k in range(n_frames)
    ]
