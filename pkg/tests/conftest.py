import json
import os

import numpy as np
import pytest

from panolab.media_io import save_png, save_pose_csv
from panolab.metrics import PoseLog
from panolab.synthetic import rotating_sequence, smooth_texture


@pytest.fixture(scope="session")
def cli_inputs(tmp_path_factory):
    """A shared directory of small CLI inputs: frames, a source image with
    its projection file, and a pose log."""
    root = tmp_path_factory.mktemp("cli_inputs")
    frames = root / "frames"
    frames.mkdir()
    for i, fr in enumerate(rotating_sequence(4, 256, 128, yaw_step_deg=2.0, seed=4)):
        save_png(fr.image, frames / f"frame_{i:03d}.png")

    save_png(smooth_texture(128, 128, seed=3), root / "source.png")
    params = {
        "fx": 64.0, "fy": 64.0, "cx": 64.0, "cy": 64.0, "skew": 0.0,
        "tx": 0.0, "ty": 0.0, "tz": 0.0,
        "yaw_deg": 15.0, "pitch_deg": 0.0, "roll_deg": 0.0,
        "scene_radius": 1.0,
    }
    (root / "params.json").write_text(json.dumps(params))

    rng = np.random.default_rng(0)
    save_pose_csv(PoseLog(np.arange(12), rng.normal(size=(12, 6))), root / "poses.csv")
    return root


def read_tree(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out
