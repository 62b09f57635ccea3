"""Command line workbench.

Six subcommands share one output convention: every run writes a canonical
JSON report (stable key order, fixed float formatting, no timestamp unless
asked for), delimited tables where the result is tabular, and matplotlib
figures next to them unless ``--no-figures`` is passed. All writes are
atomic, and rerunning a command with the same inputs reproduces the output
files byte for byte.

Exit codes: 0 success, 2 invalid input or unusable file, 3 a verification
command found a real failure (rank bound violated, coverage residual above
threshold), 1 unexpected internal error.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
import traceback
from pathlib import Path

from . import __version__
from .errors import InvalidInputError, PanolabError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    EquirectFrame,
    SceneModel,
    solid_angle_fraction,
    warp_perspective_to_equirect,
)
from .media_io import (
    atomic_write_text,
    load_frame_sequence,
    load_png,
    load_pose_csv,
    save_png,
    write_report,
)
from .metrics import FarnebackParams, cardinal_motion, pose_statistics, seam_sequence

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_ASSERTION = 3

WARP_PARAM_KEYS = (
    "fx", "fy", "cx", "cy", "skew",
    "tx", "ty", "tz", "yaw_deg", "pitch_deg", "roll_deg",
    "scene_radius",
)


def _configure_threads() -> None:
    raw = os.environ.get("PANOLAB_THREADS")
    if raw is None:
        return
    try:
        count = int(raw)
    except ValueError:
        raise InvalidInputError(f"PANOLAB_THREADS must be an integer, got {raw!r}") from None
    if count > 0:
        import cv2

        cv2.setNumThreads(count)


def _load_json_object(path, what: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise InvalidInputError(f"cannot read {what} {path}: {err}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as err:
        raise InvalidInputError(f"{what} {path} is not valid JSON: {err}") from None
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{what} {path} must hold a JSON object")
    return obj


def _command_config(args, allowed: tuple[str, ...]) -> dict:
    """Load the subcommand's JSON config, if any, and check its keys."""
    if not args.config:
        return {}
    config = _load_json_object(args.config, "config file")
    unknown = sorted(set(config) - set(allowed))
    if unknown:
        raise InvalidInputError(
            f"{args.command} config has unknown keys {unknown}; allowed: {sorted(allowed)}"
        )
    return config


def _resolve(cli_value, config: dict, key: str, default, cast):
    """Option precedence: explicit flag, then config file, then default."""
    if cli_value is not None:
        return cli_value
    if key in config:
        try:
            return cast(config[key])
        except (TypeError, ValueError):
            raise InvalidInputError(f"config key {key} has unusable value {config[key]!r}") from None
    return default


def _parse_warp_params(obj: dict, path) -> dict:
    missing = [k for k in WARP_PARAM_KEYS if k not in obj]
    unknown = sorted(set(obj) - set(WARP_PARAM_KEYS))
    if missing or unknown:
        parts = []
        if missing:
            parts.append(f"missing {missing}")
        if unknown:
            parts.append(f"unknown {unknown}")
        raise InvalidInputError(
            f"projection file {path} must define exactly the keys "
            f"{list(WARP_PARAM_KEYS)}: " + ", ".join(parts)
        )
    values = {}
    for key in WARP_PARAM_KEYS:
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            raise InvalidInputError(f"projection parameter {key} must be a finite number, got {v!r}")
        values[key] = float(v)
    return values


def _out_path(args, suffix: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{args.name}_{suffix}"


def _emit_report(args, payload: dict, config: dict, float_format: str = "%.6f") -> Path:
    body = {
        "tool": "panolab",
        "version": __version__,
        "command": args.command,
        "config": config,
    }
    body.update(payload)
    if args.timestamp:
        body["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    else:
        body["timestamp"] = None
    path = _out_path(args, "report.json")
    write_report(path, body, float_format=float_format)
    return path


def _write_table(args, suffix: str, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            f"{v:.9g}" if isinstance(v, float) else str(v) for v in row
        ))
    path = _out_path(args, suffix)
    atomic_write_text(path, "\n".join(lines) + "\n")
    return path


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


# ---------------------------------------------------------------------------
# Subcommand handlers

def cmd_warp(args) -> int:
    file_cfg = _command_config(args, ("width", "height"))
    width = _resolve(args.width, file_cfg, "width", 1024, int)
    height = _resolve(args.height, file_cfg, "height", 512, int)
    source = load_png(args.source)
    params = _parse_warp_params(_load_json_object(args.params, "projection file"), args.params)
    intrinsics = CameraIntrinsics(params["fx"], params["fy"], params["cx"],
                                  params["cy"], params["skew"])
    pose = CameraPose.from_euler(
        yaw_deg=params["yaw_deg"], pitch_deg=params["pitch_deg"],
        roll_deg=params["roll_deg"],
        translation=(params["tx"], params["ty"], params["tz"]),
    )
    scene = SceneModel(params["scene_radius"])
    frame, mask = warp_perspective_to_equirect(
        source, (intrinsics, pose), width, height, scene
    )
    coverage = solid_angle_fraction(mask)
    save_png(frame.image, _out_path(args, "equirect.png"))
    save_png(mask, _out_path(args, "mask.png"))
    config = {
        "source": str(args.source),
        "params": params,
        "width": width,
        "height": height,
    }
    report = _emit_report(args, {
        "coverage_fraction": coverage,
        "source_width": source.width,
        "source_height": source.height,
    }, config)
    if not args.no_figures:
        from .plotting import warp_preview_figure

        warp_preview_figure(frame.data, mask.data[..., 0] > 0.5, coverage,
                            _out_path(args, "preview.png"))
    _say(args, f"warp: coverage {coverage:.4f} of the sphere, report {report}")
    return EXIT_OK


def cmd_seam(args) -> int:
    file_cfg = _command_config(args, ("strip_width",))
    strip_width = _resolve(args.strip_width, file_cfg, "strip_width", 2, int)
    sequence = load_frame_sequence(args.frames)
    frames = [EquirectFrame(img) for img in sequence.images]
    report = seam_sequence(frames, strip_width=strip_width)
    config = {"frames": str(args.frames), "strip_width": strip_width}
    report_path = _emit_report(args, report.to_dict(), config)
    _write_table(args, "frames.csv", ["frame", "seam_correlation"],
                 list(enumerate(report.per_frame)))
    if not args.no_figures:
        from .plotting import seam_figure

        seam_figure(report.per_frame, report.mean, _out_path(args, "scores.png"))
    _say(args, f"seam: {len(report.per_frame)} frames, mean {report.mean:.6f}, "
               f"report {report_path}")
    return EXIT_OK


def cmd_motion(args) -> int:
    flow_keys = tuple(FarnebackParams().to_dict())
    file_cfg = _command_config(
        args, ("fov_degrees", "crop_size", "stride", "exclude_border") + flow_keys
    )
    fov = _resolve(args.fov, file_cfg, "fov_degrees", 90.0, float)
    crop = _resolve(args.crop, file_cfg, "crop_size", 256, int)
    stride = _resolve(args.stride, file_cfg, "stride", 1, int)
    exclude_border = not args.keep_border and bool(file_cfg.get("exclude_border", True))
    flow_overrides = {k: file_cfg[k] for k in flow_keys if k in file_cfg}
    params = FarnebackParams(**{**FarnebackParams().to_dict(), **flow_overrides})

    sequence = load_frame_sequence(args.frames)
    frames = [EquirectFrame(img) for img in sequence.images]
    report = cardinal_motion(
        frames, fov_degrees=fov, crop_size=crop, params=params,
        stride=stride, exclude_border=exclude_border,
    )
    config = {
        "frames": str(args.frames),
        "fov_degrees": fov,
        "crop_size": crop,
        "stride": stride,
        "exclude_border": exclude_border,
        "farneback": params.to_dict(),
    }
    body = report.to_dict()
    report_path = _emit_report(args, body, config)
    directions = ["front", "back", "left", "right"]
    per_pair = body["per_pair"]
    rows = [[i] + [per_pair[d][i] for d in directions]
            for i in range(len(per_pair["front"]))]
    _write_table(args, "pairs.csv", ["pair"] + directions, rows)
    if not args.no_figures:
        from .plotting import motion_figure

        motion_figure({d: body[d] for d in directions}, per_pair,
                      _out_path(args, "means.png"))
    _say(args, "motion: " + "  ".join(f"{d} {body[d]:.3f}px" for d in directions)
               + f", report {report_path}")
    return EXIT_OK


def cmd_pose_stats(args) -> int:
    _command_config(args, ())  # accepted for interface symmetry; no tunables
    log = load_pose_csv(args.poses)
    stats = pose_statistics(log)
    config = {"poses": str(args.poses)}
    payload = {
        "n_frames": len(log),
        "rows": [{"label": lab, "mean": mean, "std": std} for lab, mean, std in stats],
    }
    report_path = _emit_report(args, payload, config)
    _write_table(args, "table.csv", ["label", "mean", "std"], stats)
    if not args.no_figures:
        from .plotting import pose_stats_figure

        pose_stats_figure(stats, _out_path(args, "bars.png"))
    _say(args, f"pose-stats: {len(log)} poses, report {report_path}")
    return EXIT_OK


def cmd_rank_verify(args) -> int:
    from .lora_lab import DEFAULT_RANK_CONFIG, run_rank_experiment

    cfg = dict(DEFAULT_RANK_CONFIG)
    cfg.update(_command_config(args, tuple(DEFAULT_RANK_CONFIG)))
    if args.trials is not None:
        cfg["trials"] = args.trials
    if args.seed is not None:
        cfg["seed"] = args.seed
    result = run_rank_experiment(cfg)
    report_path = _emit_report(args, result, cfg, float_format="%.12g")
    if not args.no_figures:
        from .plotting import rank_margins_figure

        rank_margins_figure(result, _out_path(args, "margins.png"))
    _say(args, f"rank-verify: {result['trials']} trials, "
               f"{result['violations']} violations, worst margin "
               f"{result['worst_margin']:.3e}, report {report_path}")
    if not result["passed"]:
        _say(args, "rank-verify: BOUND VIOLATED")
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_dof_coverage(args) -> int:
    from .lora_lab import DEFAULT_COVERAGE_CONFIG, run_coverage_experiment

    cfg = dict(_command_config(args, tuple(DEFAULT_COVERAGE_CONFIG) + ("rank",)))
    if args.rank is not None:
        cfg["ranks"] = [args.rank]
        cfg.pop("rank", None)
    if args.seed is not None:
        cfg["seed"] = args.seed
    result = run_coverage_experiment(cfg or None)
    config_echo = {
        "ranks": result["ranks"],
        "residual_threshold": result["residual_threshold"],
        "net_dims": result["net_dims"],
        "placement": result["placement"],
        "seed": result["seed"],
    }
    report_path = _emit_report(args, result, config_echo, float_format="%.12g")
    if not args.no_figures:
        from .plotting import coverage_figure

        coverage_figure(result, _out_path(args, "residuals.png"))
    worst = max(r["fit_residual"] for r in result["per_rank"])
    _say(args, f"dof-coverage: family rank {result['family_rank']}, worst fit residual "
               f"{worst:.3e} at threshold {result['residual_threshold']:g}, "
               f"report {report_path}")
    if not result["passed"]:
        _say(args, "dof-coverage: TARGETS NOT COVERED")
        return EXIT_ASSERTION
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def _add_common(sp: argparse.ArgumentParser, default_name: str) -> None:
    sp.add_argument("--out", default=".", help="output directory (default: current)")
    sp.add_argument("--name", default=default_name,
                    help=f"output file stem (default: {default_name})")
    sp.add_argument("--config", default=None,
                    help="JSON file with this subcommand's settings; explicit "
                         "flags win over config values")
    sp.add_argument("--seed", type=int, default=None,
                    help="seed for randomized experiments (the deterministic "
                         "commands accept and ignore it)")
    sp.add_argument("--quiet", action="store_true", help="suppress the summary line")
    sp.add_argument("--no-figures", action="store_true",
                    help="skip figure rendering")
    sp.add_argument("--timestamp", action="store_true",
                    help="stamp the report with wall-clock time (breaks rerun "
                         "byte-identity, off by default)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panolab",
        description="Panoramic warp geometry, video metrics, and low-rank "
                    "adapter experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sp = sub.add_parser("warp", help="project a perspective image onto an "
                                     "equirectangular panorama")
    sp.add_argument("--source", required=True, help="perspective source PNG")
    sp.add_argument("--params", required=True,
                    help="JSON file with the 12 projection parameters "
                         f"{list(WARP_PARAM_KEYS)}")
    sp.add_argument("--width", type=int, default=None, help="output width (default 1024)")
    sp.add_argument("--height", type=int, default=None, help="output height (default 512)")
    _add_common(sp, "warp")
    sp.set_defaults(func=cmd_warp)

    sp = sub.add_parser("seam", help="left/right edge consistency of panorama frames")
    sp.add_argument("--frames", required=True, help="directory of equirect PNG frames")
    sp.add_argument("--strip-width", type=int, default=None,
                    help="edge strip width in pixels (default 2)")
    _add_common(sp, "seam")
    sp.set_defaults(func=cmd_seam)

    sp = sub.add_parser("motion", help="Farneback flow magnitude on cardinal "
                                       "perspective crops")
    sp.add_argument("--frames", required=True, help="directory of equirect PNG frames")
    sp.add_argument("--fov", type=float, default=None,
                    help="crop field of view in degrees (default 90)")
    sp.add_argument("--crop", type=int, default=None, help="crop edge in pixels (default 256)")
    sp.add_argument("--stride", type=int, default=None, help="frame subsampling (default 1)")
    sp.add_argument("--keep-border", action="store_true",
                    help="include the window-size border in flow statistics")
    _add_common(sp, "motion")
    sp.set_defaults(func=cmd_motion)

    sp = sub.add_parser("pose-stats", help="per-component mean and sample std of a "
                                           "camera trajectory CSV")
    sp.add_argument("--poses", required=True, help="pose CSV file")
    _add_common(sp, "pose_stats")
    sp.set_defaults(func=cmd_pose_stats)

    sp = sub.add_parser("rank-verify", help="randomized check of the low-rank "
                                            "update bound rank(dF) <= min(rank(J), r)")
    sp.add_argument("--trials", type=int, default=None, help="override the trial budget")
    _add_common(sp, "rank_verify")
    sp.set_defaults(func=cmd_rank_verify)

    sp = sub.add_parser("dof-coverage", help="fit the 8 projection-parameter "
                                             "directions with a rank-r adapter family")
    sp.add_argument("--rank", type=int, default=None, help="test a single adapter rank")
    _add_common(sp, "dof_coverage")
    sp.set_defaults(func=cmd_dof_coverage)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_threads()
        return args.func(args)
    except (PanolabError, OSError) as err:
        print(f"panolab {args.command}: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
