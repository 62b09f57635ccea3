import json
import struct

import numpy as np
import pytest

from panolab.errors import FormatError, InvalidInputError, ParseError
from panolab.geometry import ImageBuffer
from panolab.media_io import (
    POSE_CSV_HEADER,
    atomic_write_text,
    dumps_canonical,
    load_frame_sequence,
    load_matrix,
    load_pfm,
    load_png,
    load_pose_csv,
    save_matrix,
    save_pfm,
    save_png,
    save_pose_csv,
)
from panolab.metrics import PoseLog
from panolab.synthetic import smooth_texture


def test_png_eight_bit_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    quantized = np.round(rng.random((16, 20, 3)) * 255) / 255.0
    path = tmp_path / "img.png"
    save_png(ImageBuffer(quantized), path)
    back = load_png(path)
    assert np.array_equal(back.data, quantized)


def test_png_half_rounds_away_from_zero(tmp_path):
    path = tmp_path / "gray.png"
    save_png(ImageBuffer(np.full((2, 2, 1), 0.5)), path)
    back = load_png(path)
    assert np.allclose(back.data, 128 / 255.0)


def test_png_out_of_range_clamps_with_warning(tmp_path):
    path = tmp_path / "hot.png"
    with pytest.warns(UserWarning, match="clamp"):
        save_png(ImageBuffer(np.full((2, 2, 3), 1.5)), path)
    assert np.array_equal(load_png(path).data, np.ones((2, 2, 3)))


def test_png_grayscale_loads_single_channel(tmp_path):
    path = tmp_path / "g.png"
    save_png(ImageBuffer(np.linspace(0, 1, 12).reshape(3, 4, 1)), path)
    assert load_png(path).channels == 1


def test_png_missing_file_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_png(tmp_path / "absent.png")


def test_pfm_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((7, 5, 3)).astype(np.float32).astype(np.float64)
    path = tmp_path / "img.pfm"
    save_pfm(ImageBuffer(data), path)
    assert np.array_equal(load_pfm(path).data, data)


def test_pfm_grayscale_header_layout(tmp_path):
    """A hand-built little-endian grayscale file: rows are stored bottom
    to top, so the first stored row is the bottom image row."""
    payload = struct.pack("<4f", 0.0, 1.0, 2.0, 3.0)
    path = tmp_path / "tiny.pfm"
    path.write_bytes(b"Pf\n2 2\n-1.0\n" + payload)
    img = load_pfm(path)
    assert img.data.shape == (2, 2, 1)
    assert np.array_equal(img.data[..., 0], [[2.0, 3.0], [0.0, 1.0]])


def test_pfm_big_endian_scale(tmp_path):
    payload = struct.pack(">4f", 5.0, 6.0, 7.0, 8.0)
    path = tmp_path / "be.pfm"
    path.write_bytes(b"Pf\n2 2\n1.0\n" + payload)
    assert np.array_equal(load_pfm(path).data[..., 0], [[7.0, 8.0], [5.0, 6.0]])


def test_pfm_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"P6\n2 2\n-1.0\n" + b"\x00" * 16)
    with pytest.raises(FormatError):
        load_pfm(path)


def test_pfm_rejects_truncated_payload(tmp_path):
    path = tmp_path / "short.pfm"
    path.write_bytes(b"Pf\n2 2\n-1.0\n" + b"\x00" * 8)
    with pytest.raises(FormatError):
        load_pfm(path)


def test_matrix_fixture_round_trip(tmp_path):
    m = np.arange(12.0).reshape(3, 4)
    path = tmp_path / "m.pfm"
    save_matrix(m, path)
    assert np.array_equal(load_matrix(path), m)


def test_pose_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    log = PoseLog(np.array([0, 1, 5, 9]), rng.normal(size=(4, 6)))
    path = tmp_path / "poses.csv"
    save_pose_csv(log, path)
    back = load_pose_csv(path)
    assert np.array_equal(back.frames, log.frames)
    assert np.allclose(back.values, log.values, atol=1e-12)


def test_pose_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("frame,tx,ty,tz,pitch,yaw,roll\n0,0,0,0,0,0,0\n")
    with pytest.raises(ParseError, match="line 1"):
        load_pose_csv(path)


def test_pose_csv_reports_bad_value_with_line(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text(POSE_CSV_HEADER + "\n0,0,0,0,0,0,0\n1,0,oops,0,0,0,0\n")
    with pytest.raises(ParseError, match="line 3") as exc:
        load_pose_csv(path)
    assert "ty" in str(exc.value)


def test_pose_csv_requires_increasing_frames(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text(POSE_CSV_HEADER + "\n2,0,0,0,0,0,0\n2,0,0,0,0,0,0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_pose_csv(path)


def test_pose_csv_rejects_empty_and_blank(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text(POSE_CSV_HEADER + "\n")
    with pytest.raises(ParseError):
        load_pose_csv(empty)
    blank = tmp_path / "b.csv"
    blank.write_text(POSE_CSV_HEADER + "\n0,0,0,0,0,0,0\n\n1,0,0,0,0,0,0\n")
    with pytest.raises(ParseError, match="line 3"):
        load_pose_csv(blank)


def test_frame_sequence_sorted_and_validated(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    img = smooth_texture(8, 16, channels=3, seed=0)
    for name in ("b.png", "a.png", "c.png"):
        save_png(img, d / name)
    seq = load_frame_sequence(d)
    assert [p.name for p in seq.paths] == ["a.png", "b.png", "c.png"]
    assert len(seq) == 3 and seq.width == 16

    save_png(smooth_texture(4, 8, seed=0), d / "d.png")
    with pytest.raises(FormatError, match="d.png"):
        load_frame_sequence(d)


def test_frame_sequence_empty_dir(tmp_path):
    d = tmp_path / "nothing"
    d.mkdir()
    with pytest.raises(InvalidInputError):
        load_frame_sequence(d)


def test_canonical_json_is_stable_and_formatted():
    doc = {"b": 1.0 / 3.0, "a": [1, 2.5, -0.0], "nested": {"z": True, "y": None}}
    text = dumps_canonical(doc)
    assert text == dumps_canonical(doc)
    assert text.endswith("\n")
    parsed = json.loads(text)
    assert list(parsed) == ["b", "a", "nested"]
    assert "0.333333" in text
    assert "-0.0" not in text


def test_canonical_json_wide_format_keeps_tiny_values():
    text = dumps_canonical({"sv": 3.5e-15}, float_format="%.12g")
    assert "3.5e-15" in text


def test_canonical_json_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        dumps_canonical({"x": float("inf")})


def test_canonical_json_serializes_arrays():
    text = dumps_canonical({"v": np.array([1.0, 2.0])})
    assert json.loads(text)["v"] == [1.0, 2.0]


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "hello\n")
    assert target.read_text() == "hello\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
