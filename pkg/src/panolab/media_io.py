"""File formats: PNG rasters, PFM float maps, pose CSV logs, canonical JSON.

Loaders reject malformed input instead of coercing it. Writers are atomic
(temp file in the target directory, then rename) and deterministic: the same
data always produces the same bytes.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import FormatError, InvalidInputError, ParseError
from .geometry import ImageBuffer
from .metrics import POSE_FIELDS, PoseLog

POSE_CSV_HEADER = "frame,tx,ty,tz,pitch_deg,yaw_deg,roll_deg"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to ``path`` via a same-directory temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------------------
# PNG

def load_png(path) -> ImageBuffer:
    """Load an 8- or 16-bit PNG as floats in [0, 1] (value / (2^bits - 1)).

    Grayscale stays single-channel; an alpha channel is dropped with a
    warning. Missing or undecodable files raise with the path in the message.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"could not decode PNG: {path}")
    if raw.dtype == np.uint8:
        divisor = 255.0
    elif raw.dtype == np.uint16:
        divisor = 65535.0
    else:
        raise FormatError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if raw.ndim == 2:
        data = raw[:, :, None].astype(np.float64)
    elif raw.ndim == 3 and raw.shape[2] in (3, 4):
        if raw.shape[2] == 4:
            warnings.warn(f"dropping alpha channel while loading {path}", stacklevel=2)
            raw = raw[:, :, :3]
        data = raw[:, :, ::-1].astype(np.float64)  # BGR -> RGB
    else:
        raise FormatError(f"unsupported PNG layout with {raw.shape[2]} channels in {path}")
    return ImageBuffer(data / divisor)


def save_png(image: ImageBuffer, path) -> None:
    """Encode as 8-bit PNG, rounding half away from zero on the 255 scale.

    Out-of-range samples are clamped with a warning rather than wrapped.
    """
    path = Path(path)
    data = image.data
    if data.min() < 0.0 or data.max() > 1.0:
        warnings.warn(
            f"clamping out-of-range samples (min={data.min():.4g}, max={data.max():.4g}) "
            f"while writing {path}",
            stacklevel=2,
        )
        data = np.clip(data, 0.0, 1.0)
    quantized = np.floor(data * 255.0 + 0.5).astype(np.uint8)
    if image.channels == 1:
        encoded = quantized[:, :, 0]
    else:
        encoded = quantized[:, :, ::-1]  # RGB -> BGR
    ok, buf = cv2.imencode(".png", encoded)
    if not ok:
        raise FormatError(f"PNG encoding failed for {path}")
    atomic_write_bytes(path, buf.tobytes())


# ---------------------------------------------------------------------------
# PFM (lossless float32 container; also used for matrix fixtures)

def _read_pfm_array(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such PFM file: {path}")
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip()
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise FormatError(f"bad PFM magic {magic!r} in {path}")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"bad PFM dimension line in {path}")
        try:
            width, height = int(dims[0]), int(dims[1])
        except ValueError:
            raise FormatError(f"non-integer PFM dimensions in {path}") from None
        if width < 1 or height < 1:
            raise FormatError(f"non-positive PFM dimensions in {path}")
        try:
            scale = float(fh.readline())
        except ValueError:
            raise FormatError(f"bad PFM scale line in {path}") from None
        if scale == 0 or not math.isfinite(scale):
            raise FormatError(f"bad PFM scale {scale} in {path}")
        dtype = "<f4" if scale < 0 else ">f4"
        count = width * height * channels
        raw = fh.read(count * 4)
        if len(raw) != count * 4:
            raise FormatError(f"truncated PFM raster in {path}")
    data = np.frombuffer(raw, dtype=dtype, count=count).reshape(height, width, channels)
    # Rows are stored bottom-to-top.
    return np.flipud(data).astype(np.float64)


def load_pfm(path) -> ImageBuffer:
    """Load a PFM image. Sign of the scale selects endianness; rows are
    stored bottom-to-top per the format."""
    return ImageBuffer(_read_pfm_array(path))


def _pfm_bytes(data: np.ndarray) -> bytes:
    height, width, channels = data.shape
    magic = b"PF" if channels == 3 else b"Pf"
    header = b"%s\n%d %d\n-1.0\n" % (magic, width, height)
    payload = np.flipud(data).astype("<f4").tobytes()
    return header + payload


def save_pfm(image: ImageBuffer, path) -> None:
    """Write little-endian PFM (scale -1.0). Round-trips float32 data
    bit-exactly."""
    atomic_write_bytes(path, _pfm_bytes(image.data))


def save_matrix(matrix, path) -> None:
    """Store a 2-D float matrix as a single-channel PFM fixture."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInputError(f"matrix fixture must be 2-D, got shape {m.shape}")
    atomic_write_bytes(path, _pfm_bytes(m[:, :, None]))


def load_matrix(path) -> np.ndarray:
    arr = _read_pfm_array(path)
    if arr.shape[2] != 1:
        raise FormatError(f"matrix fixture must be single-channel: {path}")
    return arr[:, :, 0]


# ---------------------------------------------------------------------------
# Pose CSV

def load_pose_csv(path) -> PoseLog:
    """Parse a pose log with header ``frame,tx,ty,tz,pitch_deg,yaw_deg,roll_deg``.

    Frames must be integers, strictly increasing; every other field must be a
    finite float. Errors carry 1-based line numbers.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such pose log: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty pose log", line=1)
    if lines[0].strip() != POSE_CSV_HEADER:
        raise ParseError(
            f"bad header {lines[0]!r}, expected {POSE_CSV_HEADER!r}", line=1
        )
    frames: list[int] = []
    rows: list[list[float]] = []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            raise ParseError("blank line in pose log", line=lineno)
        fields = text.split(",")
        if len(fields) != 7:
            raise ParseError(f"expected 7 fields, got {len(fields)}", line=lineno)
        try:
            frame = int(fields[0])
        except ValueError:
            raise ParseError(f"non-integer frame {fields[0]!r}", line=lineno) from None
        if frames and frame <= frames[-1]:
            raise ParseError(
                f"frame {frame} does not increase past {frames[-1]}", line=lineno
            )
        values = []
        for name, field in zip(POSE_FIELDS, fields[1:]):
            try:
                value = float(field)
            except ValueError:
                raise ParseError(f"non-numeric {name} {field!r}", line=lineno) from None
            if not math.isfinite(value):
                raise ParseError(f"non-finite {name} {field!r}", line=lineno)
            values.append(value)
        frames.append(frame)
        rows.append(values)
    if not rows:
        raise ParseError("pose log has no data rows", line=2)
    return PoseLog(np.asarray(frames, dtype=np.int64), np.asarray(rows, dtype=np.float64))


def save_pose_csv(log: PoseLog, path) -> None:
    lines = [POSE_CSV_HEADER]
    for frame, row in zip(log.frames, log.values):
        lines.append(str(int(frame)) + "," + ",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Frame sequences

@dataclass
class FrameSequence:
    """PNG frames from one directory, ordered bytewise by filename."""

    directory: Path
    paths: list[Path]
    images: list[ImageBuffer]

    @property
    def width(self) -> int:
        return self.images[0].width

    @property
    def height(self) -> int:
        return self.images[0].height

    @property
    def channels(self) -> int:
        return self.images[0].channels

    def __len__(self) -> int:
        return len(self.images)


def load_frame_sequence(directory) -> FrameSequence:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such frame directory: {directory}")
    paths = sorted(p for p in directory.iterdir() if p.name.endswith(".png"))
    if not paths:
        raise InvalidInputError(f"no PNG frames in {directory}")
    images = [load_png(p) for p in paths]
    first = images[0]
    for path, img in zip(paths, images):
        if (img.width, img.height, img.channels) != (first.width, first.height, first.channels):
            raise FormatError(
                f"frame {path.name} is {img.width}x{img.height}x{img.channels}, "
                f"expected {first.width}x{first.height}x{first.channels}"
            )
    return FrameSequence(directory, paths, images)


# ---------------------------------------------------------------------------
# Canonical JSON reports

def _canon_scalar(value, float_format: str) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if not math.isfinite(f):
            raise InvalidInputError(f"cannot serialize non-finite float {f!r}")
        if f == 0.0:
            f = 0.0  # normalize -0.0
        return float_format % f
    if isinstance(value, str):
        return json.dumps(value)
    raise InvalidInputError(f"cannot serialize {type(value).__name__} in a report")


def _canon(value, float_format: str, indent: int, out: list) -> None:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (key, item) in enumerate(value.items()):
            if not isinstance(key, str):
                raise InvalidInputError("report keys must be strings")
            out.append(f"{inner}{json.dumps(key)}: ")
            _canon(item, float_format, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(value):
            out.append(inner)
            _canon(item, float_format, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_canon_scalar(value, float_format))


def dumps_canonical(obj, float_format: str = "%.6f") -> str:
    """Serialize a report deterministically.

    Keys keep insertion order, floats are fixed-format (metric reports use
    six decimals; rank/coverage reports pass ``%.12g`` so tiny singular
    values stay meaningful), and the result is newline-terminated. Identical
    input always yields identical bytes.
    """
    out: list[str] = []
    _canon(obj, float_format, 0, out)
    return "".join(out) + "\n"


def write_report(path, obj, float_format: str = "%.6f") -> None:
    atomic_write_text(path, dumps_canonical(obj, float_format))
