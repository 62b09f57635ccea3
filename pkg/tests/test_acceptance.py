"""End-to-end acceptance checks for the whole workbench.

Each test covers one headline guarantee and prints a single scoreboard line;
run ``pytest -s tests/test_acceptance.py`` to see them. Tolerances and time
budgets are part of the contract and are asserted, not just printed.
"""

import dataclasses
import json
import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np

from panolab.geometry import (
    CameraIntrinsics,
    CameraPose,
    EquirectFrame,
    Projection8DoF,
    warp_equirect_to_perspective,
    warp_perspective_to_equirect,
    yaw_shift,
)
from panolab.lora_lab import (
    LinearNetwork,
    dof_coverage_experiment,
    network_jacobian,
    numerical_rank,
    projection_target_family,
    run_rank_experiment,
)
from panolab.metrics import (
    POSE_STAT_LABELS,
    PoseLog,
    cardinal_motion,
    farneback_flow,
    interior_mask,
    pose_statistics,
    psnr,
    seam_consistency,
)
from panolab.synthetic import rotating_sequence, smooth_texture, sphere_texture_frame


@contextmanager
def scoreboard(number, label, budget_s):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {number:2d}. {label}")
        raise
    elapsed = time.monotonic() - start
    print(f"[PASS] {number:2d}. {label} ({elapsed:.1f}s)")
    assert elapsed < budget_s, f"criterion {number} took {elapsed:.1f}s, budget {budget_s}s"


def test_01_seam_metric_ground_truth_anchor():
    with scoreboard(1, "true panorama scores seam >= 0.995, identical strips exactly 1", 1.0):
        frame = sphere_texture_frame(512, 256, seed=11)
        assert seam_consistency(frame, strip_width=2) >= 0.995
        data = frame.data.copy()
        data[:, :2] = data[:, -2:]
        glued = EquirectFrame(frame.image.__class__(data))
        assert abs(seam_consistency(glued, strip_width=2) - 1.0) < 1e-9


def test_02_degree_of_freedom_accounting():
    with scoreboard(2, "5 intrinsic + 6 pose = 11 free scalars, reduced model has 8", 1.0):
        assert CameraIntrinsics.DOF == 5
        assert CameraPose.DOF == 6
        assert CameraIntrinsics.DOF + CameraPose.DOF == 11
        assert Projection8DoF.DOF == 8
        assert len(dataclasses.fields(CameraIntrinsics)) == 5
        assert len(dataclasses.fields(Projection8DoF)) == 8


def test_03_projection_round_trip_psnr():
    with scoreboard(3, "perspective -> 1024x512 equirect -> perspective, interior PSNR > 30 dB", 5.0):
        src = smooth_texture(256, 256, seed=3)
        intr = CameraIntrinsics(128.0, 128.0, 128.0, 128.0, 0.0)  # 90 degree FoV
        pose = CameraPose.identity()
        frame, _ = warp_perspective_to_equirect(src, (intr, pose), 1024, 512)
        back = warp_equirect_to_perspective(frame, intr, pose, 256, 256)
        assert psnr(src, back, interior_mask(256, 256, 8)) > 30.0


def test_04_yaw_equals_column_shift():
    with scoreboard(4, "90 degree yaw warp equals cyclic shift of the zero-yaw warp", 5.0):
        src = smooth_texture(256, 256, seed=3)

        def warp(yaw):
            proj = Projection8DoF(fx=128, fy=128, cx=128, cy=128, skew=0,
                                  tx=0, ty=0, yaw_deg=yaw)
            return warp_perspective_to_equirect(src, proj, 1024, 512)

        rotated, _ = warp(90.0)
        base, _ = warp(0.0)
        shifted = yaw_shift(base, 90.0)
        assert np.max(np.abs(rotated.data - shifted.data)) < 1e-6


def test_05_rank_bound_holds_over_thousand_trials():
    with scoreboard(5, "rank(dF) <= min(rank(J), r): 1000 random trials, zero violations", 60.0):
        report = run_rank_experiment()
        assert report["trials"] == 1000
        assert report["violations"] == 0
        assert report["passed"] is True
        ranks = {c["rank"] for c in report["combos"]}
        depths = {len(c["dims"]) - 1 for c in report["combos"]}
        assert ranks == {1, 2, 4, 8, 16}
        assert depths == {1, 3}


def test_06_eight_dof_coverage_needs_rank_eight():
    with scoreboard(6, "8 projection directions: rank 8/16 fit < 1e-6, rank 5 misses", 120.0):
        src = smooth_texture(256, 256, seed=5, max_cycles=4)
        base = Projection8DoF(fx=128.0, fy=128.0, cx=128.0, cy=128.0,
                              skew=0.0, tx=0.0, ty=0.0, yaw_deg=0.0)
        family = projection_target_family(base, src, 128, 64)
        normalized = family.directions / np.linalg.norm(family.directions, axis=0)
        assert numerical_rank(normalized, rel_tol=1e-6).numerical_rank == 8

        net = LinearNetwork.random([64, 32], "identity", np.random.default_rng(1))
        for rank in (8, 16):
            report = dof_coverage_experiment(family, net, rank, seed=0)
            assert report.fit_residual < 1e-6
        short = dof_coverage_experiment(family, net, 5, seed=0)
        assert max(short.per_target_residuals) > 0.05


def test_07_farneback_flow_accuracy():
    with scoreboard(7, "3 px shift recovered within [2.7, 3.3]; still frames < 0.05 px", 10.0):
        img = smooth_texture(256, 256, seed=9, max_cycles=24)
        shifted = img.__class__(np.roll(img.data, 3, axis=1))
        flow = farneback_flow(img, shifted)
        inner = interior_mask(256, 256, 15)
        dx = float(np.mean(flow.data[..., 0][inner]))
        dy = float(np.mean(flow.data[..., 1][inner]))
        assert 2.7 <= dx <= 3.3
        assert abs(dy) < 0.3
        still = farneback_flow(img, img)
        assert float(np.mean(still.magnitude()[inner])) < 0.05


def test_08_cardinal_motion_contrast():
    with scoreboard(8, "rotating sequence scores >= 3x its frozen copy in all directions", 60.0):
        frames = list(rotating_sequence(16, 512, 256, yaw_step_deg=2.0, seed=4))
        moving = cardinal_motion(frames, crop_size=128)
        frozen = cardinal_motion([frames[0]] * 16, crop_size=128)
        for direction in ("front", "back", "left", "right"):
            live = getattr(moving, direction)
            still = max(getattr(frozen, direction), 1e-9)
            assert live >= 3.0 * still, f"{direction}: {live:.4f} vs {still:.4f}"


def test_09_pose_statistics_closed_form():
    with scoreboard(9, "1000-record log reproduces analytic mean/std to 1e-9", 1.0):
        n = 1000
        k = np.arange(n, dtype=np.float64)
        values = np.empty((n, 6))
        offsets = [0.5, -2.0, 3.25, 10.0, -7.5, 0.0]
        steps = [1e-3, 2e-3, 5e-4, 1e-3, 3e-3, 2e-3]
        for j in range(6):
            values[:, j] = offsets[j] + steps[j] * k
        stats = pose_statistics(PoseLog(np.arange(n), values))
        std_k = math.sqrt(n * (n + 1) / 12.0)
        assert [row[0] for row in stats] == list(POSE_STAT_LABELS)
        for j, (label, mean, std) in enumerate(stats):
            assert abs(mean - (offsets[j] + steps[j] * (n - 1) / 2.0)) < 1e-9
            assert abs(std - steps[j] * std_k) < 1e-9


def test_10_jacobian_against_finite_differences():
    with scoreboard(10, "analytic and FD Jacobians agree to 1e-6 over 100 trials", 30.0):
        for trial in range(100):
            activation = "identity" if trial % 2 == 0 else "tanh"
            rng = np.random.default_rng((17, trial))
            net = LinearNetwork.random([6, 5, 4], activation, rng)
            x = rng.standard_normal(6)
            analytic = network_jacobian(net, x)
            fd = network_jacobian(net, x, method="fd")
            rel = np.linalg.norm(analytic - fd) / np.linalg.norm(analytic)
            assert rel < 1e-6, f"trial {trial} ({activation}): {rel:.2e}"


def test_11_cli_reports_are_deterministic(cli_inputs, tmp_path):
    with scoreboard(11, "every subcommand rewrites byte-identical reports", 180.0):
        commands = {
            "warp": ["warp", "--source", str(cli_inputs / "source.png"),
                     "--params", str(cli_inputs / "params.json"),
                     "--width", "256", "--height", "128"],
            "seam": ["seam", "--frames", str(cli_inputs / "frames")],
            "motion": ["motion", "--frames", str(cli_inputs / "frames"), "--crop", "64"],
            "pose-stats": ["pose-stats", "--poses", str(cli_inputs / "poses.csv")],
            "rank-verify": ["rank-verify", "--trials", "40", "--seed", "0"],
            "dof-coverage": ["dof-coverage", "--rank", "16", "--seed", "0"],
        }
        for name, argv in commands.items():
            outputs = []
            for attempt in ("a", "b"):
                out = tmp_path / f"{name}_{attempt}"
                proc = subprocess.run(
                    [sys.executable, "-m", "panolab", *argv,
                     "--out", str(out), "--quiet"],
                    capture_output=True, text=True,
                )
                assert proc.returncode == 0, f"{name}: {proc.stderr}"
                reports = sorted(out.glob("*_report.json"))
                assert len(reports) == 1
                outputs.append(reports[0].read_bytes())
            assert outputs[0] == outputs[1], f"{name} report changed between runs"
            parsed = json.loads(outputs[0])
            assert parsed["timestamp"] is None
