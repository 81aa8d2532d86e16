"""Command-line entry point.

Subcommands: sim, collect, train, eval, follow, params, proto-fuzz.
Exit codes: 0 success, 2 usage error (argparse), 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, datakit, evalbench
from .bridge import SessionConfig, run_collect, serve
from .firmware import fuzz_roundtrip
from .follow import follow_episode
from .neuralnet.policy import (
    BASELINE_PARAM_COUNTS,
    DrivingPolicy,
    PolicyArch,
    count_params,
)
from .neuralnet.train import TrainConfig, train_policy
from .neuralnet.weights_io import load_policy, save_policy
from .simcore import DEFAULT_CAMERA, CameraConfig, ROUTE_NAMES


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _camera_from(doc: dict) -> CameraConfig:
    cam = doc.get("camera")
    if not cam:
        return DEFAULT_CAMERA
    return CameraConfig(**cam)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master RNG seed")
    p.add_argument("--config", type=str, default=None, help="JSON config file")
    p.add_argument("--out", type=str, default=None, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deskbot", description="desk-scale robot stack: sim, data, training, eval"
    )
    parser.add_argument("--version", action="version", version=f"deskbot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="serve the interactive websocket bridge")
    _add_common(p)
    p.add_argument("--route", default="R1", choices=ROUTE_NAMES)
    p.add_argument("--mode", default="teleop", choices=["teleop", "policy", "follow"])
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--weights", type=str, default=None, help="policy weights (.obnw)")
    p.add_argument("--noise", action="store_true", help="start with noise injection on")
    p.add_argument("--obstacles", action="store_true")

    p = sub.add_parser("collect", help="log scripted-expert demonstrations")
    _add_common(p)
    p.add_argument("--route", default="R1", choices=ROUTE_NAMES)
    p.add_argument("--minutes", type=float, default=2.0)
    p.add_argument("--noise", action="store_true")
    p.add_argument("--obstacles", action="store_true")

    p = sub.add_parser("train", help="train the driving network on logged sessions")
    _add_common(p)
    p.add_argument("--data", type=str, required=True, help="session directory root")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)

    p = sub.add_parser("eval", help="run the benchmark and write a report")
    _add_common(p)
    p.add_argument("--route", default="EVAL1", choices=ROUTE_NAMES)
    p.add_argument("--weights", type=str, default=None, help=".obnw file; omit for expert")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--obstacles", action="store_true")
    p.add_argument(
        "--timing",
        action="store_true",
        help="record wall-clock inference times (makes the report machine-dependent)",
    )

    p = sub.add_parser("follow", help="run a person-following episode")
    _add_common(p)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("params", help="print parameter counts next to the baselines")
    _add_common(p)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)

    p = sub.add_parser("proto-fuzz", help="fuzz the serial grammar round-trip")
    _add_common(p)
    p.add_argument("--lines", type=int, default=100_000)

    return parser


def _cmd_sim(args: argparse.Namespace, doc: dict) -> int:
    cfg = SessionConfig(
        mode=args.mode,
        route=args.route,
        seed=args.seed,
        weights=args.weights or doc.get("weights"),
        noise=args.noise,
        obstacles=args.obstacles,
        port=args.port,
        out=args.out,
        camera=_camera_from(doc),
    )
    serve(cfg)
    return 0


def _cmd_collect(args: argparse.Namespace, doc: dict) -> int:
    cfg = SessionConfig(
        mode="collect",
        route=args.route,
        seed=args.seed,
        noise=args.noise,
        obstacles=args.obstacles,
        out=args.out or "sessions",
        camera=_camera_from(doc),
    )
    session_dir = run_collect(cfg, args.minutes)
    print(session_dir)
    return 0


def session_dirs(root: str | Path) -> list[Path]:
    """Session directories under root (any folder holding a manifest)."""
    root = Path(root)
    if (root / "manifest.jsonl").is_file():
        return [root]
    return sorted(p for p in root.iterdir() if (p / "manifest.jsonl").is_file())


def _cmd_train(args: argparse.Namespace, doc: dict) -> int:
    dirs = session_dirs(args.data)
    if not dirs:
        raise FileNotFoundError(f"no sessions with manifest.jsonl under {args.data}")
    train_set, val_set = datakit.load_dataset(dirs, split_seed=args.seed)
    height, width = train_set.images.shape[1:3]
    arch = PolicyArch(input_width=int(width), input_height=int(height))
    cfg_kwargs = {k: doc[k] for k in doc if k in TrainConfig.__dataclass_fields__}
    if args.epochs is not None:
        cfg_kwargs["epochs"] = args.epochs
    if args.batch_size is not None:
        cfg_kwargs["batch_size"] = args.batch_size
    cfg_kwargs.setdefault("seed", args.seed)
    cfg_kwargs.setdefault("verbose", True)
    config = TrainConfig(**cfg_kwargs)
    net = DrivingPolicy(arch, seed=args.seed)
    result = train_policy(net, train_set.arrays(), val_set.arrays(), config)
    out_dir = Path(args.out or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    weights = out_dir / "policy.obnw"
    save_policy(str(weights), net)
    best = result.best
    print(
        f"best epoch {best.epoch}: val {best.val_loss:.5f} "
        f"within {best.within_rate:.3f} direction {best.direction_rate:.3f}"
    )
    print(weights)
    return 0


def _cmd_eval(args: argparse.Namespace, doc: dict) -> int:
    camera = _camera_from(doc)
    if args.weights:
        arch_doc = doc.get("arch") or {}
        arch = PolicyArch(
            input_width=arch_doc.get("width", camera.width),
            input_height=arch_doc.get("height", camera.height),
        )
        net = load_policy(args.weights, arch, seed=args.seed)
        policy = evalbench.network_policy(net)
        label, params = Path(args.weights).stem, count_params(net)
    else:
        policy = evalbench.expert_policy()
        label, params = "expert", None
    timer = time.perf_counter if args.timing else None
    result = evalbench.run_benchmark(
        policy,
        route=args.route,
        trials=args.trials,
        base_seed=args.seed,
        label=label,
        camera=camera,
        obstacles=args.obstacles,
        timer=timer,
        param_count=params,
    )
    out_dir = Path(args.out or "reports")
    evalbench.report(result, out_dir)
    print(evalbench.render_report_md(result))
    print(f"report written to {out_dir}")
    return 0


def _cmd_follow(args: argparse.Namespace, doc: dict) -> int:
    for trial in range(args.trials):
        res = follow_episode(
            seed=args.seed + trial, duration=args.duration, keep_trace=False
        )
        print(
            f"seed {args.seed + trial}: centering {res.centering_rate:.3f} "
            f"collisions {res.collisions} laps {res.person_laps}"
        )
    return 0


def _cmd_params(args: argparse.Namespace, doc: dict) -> int:
    width = args.width or doc.get("width") or DEFAULT_CAMERA.width
    height = args.height or doc.get("height") or DEFAULT_CAMERA.height
    arch = PolicyArch(input_width=width, input_height=height)
    net = DrivingPolicy(arch, seed=args.seed)
    rows = [("ours", count_params(net))]
    rows += sorted(BASELINE_PARAM_COUNTS.items())
    width_col = max(len(name) for name, _ in rows)
    print(f"{'model':<{width_col}} {'params':>12}")
    for name, n in rows:
        print(f"{name:<{width_col}} {n:>12,}")
    return 0


def _cmd_proto_fuzz(args: argparse.Namespace, doc: dict) -> int:
    report = fuzz_roundtrip(args.lines, seed=args.seed)
    print(json.dumps(report, indent=2))
    return 0 if report["crashes"] == 0 else 1


_HANDLERS = {
    "sim": _cmd_sim,
    "collect": _cmd_collect,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "follow": _cmd_follow,
    "params": _cmd_params,
    "proto-fuzz": _cmd_proto_fuzz,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    doc = _load_config(args.config)
    try:
        return _HANDLERS[args.command](args, doc)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # surface runtime failures as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
