"""Command line interface.

Exit codes: 0 success, 2 configuration or input error, 3 stage failure.
All paths are resolved against --workspace unless absolute.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .compositing import composite_sequence
from .errors import (
    ConfigError,
    ContractViolationError,
    EngineError,
    ProtocolError,
    StageError,
    WorkerTimeoutError,
)
from .pipeline import PipelineConfig, plan, run, verify_cache
from .workers import stubs
from .workers.types import Prompt
from .workspace import Workspace, load_reference


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recast", description="character replacement pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a frame directory into the workspace")
    p.add_argument("--workspace", required=True)
    p.add_argument("--dir", required=True)
    p.add_argument("--name")
    p.add_argument("--fps", default="24")

    p = sub.add_parser("segment", help="segment and track from a spatial prompt")
    p.add_argument("--workspace", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--point", action="append", default=[], metavar="X,Y[,negative]")
    p.add_argument("--box", metavar="X0,Y0,X1,Y1")
    p.add_argument("--tau", type=float, default=30.0)

    p = sub.add_parser("remove", help="inpaint a tracked character out of a sequence")
    p.add_argument("--workspace", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--masks", required=True, help="mask sequence artifact id")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--out", default="cleaned")

    p = sub.add_parser("animate", help="animate a reference character along tracked poses")
    p.add_argument("--workspace", required=True)
    p.add_argument("--sequence", required=True, help="scene sequence (for dimensions)")
    p.add_argument("--reference", required=True)
    p.add_argument("--masks", required=True, help="mask sequence artifact id driving the pose")
    p.add_argument("--out", default="animated")

    p = sub.add_parser("compose", help="alpha-over one sequence onto another")
    p.add_argument("--workspace", required=True)
    p.add_argument("--foreground", required=True)
    p.add_argument("--background", required=True)
    p.add_argument("--out", default="composite")

    p = sub.add_parser("run", help="run the full pipeline from a config file")
    p.add_argument("--workspace", required=True)
    p.add_argument("--config", required=True)

    p = sub.add_parser("verify-cache", help="re-execute cached stages and compare outputs")
    p.add_argument("--workspace", required=True)
    p.add_argument("--config", required=True)

    p = sub.add_parser("serve", help="serve the HTTP API and operator console")
    p.add_argument("--workspace", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8750)
    p.add_argument("--static", help="directory of built console assets")

    return parser


def _parse_prompt(args) -> Prompt:
    if args.box:
        x0, y0, x1, y1 = (float(v) for v in args.box.split(","))
        return Prompt(frame_index=args.frame, kind="box", box=(x0, y0, x1, y1))
    points = []
    for spec in args.point:
        parts = spec.split(",")
        label = "negative" if len(parts) > 2 and parts[2] == "negative" else "positive"
        points.append((float(parts[0]), float(parts[1]), label))
    if not points:
        raise ConfigError("segment needs --point or --box")
    return Prompt(frame_index=args.frame, kind="point", points=points)


def _resolve(workspace: Path, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() else workspace / p


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError,) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (StageError,) as exc:
        print(f"stage failed: {exc.stage}: {exc}", file=sys.stderr)
        return 3
    except (ContractViolationError, ProtocolError, WorkerTimeoutError) as exc:
        print(f"worker failure: {exc}", file=sys.stderr)
        return 3
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    ws = Workspace(args.workspace)

    if args.command == "ingest":
        seq = ws.ingest_frames(_resolve(ws.root, args.dir), expected_fps=args.fps, name=args.name)
        print(seq.artifact_id)
        return 0

    if args.command == "segment":
        frames = ws.read_sequence(args.sequence)
        prompt = _parse_prompt(args)
        prompt.validate(frames.width, frames.height, len(frames))
        masks = stubs.stub_segment_track(frames, prompt, tau=args.tau)
        print(ws.write_masks(masks))
        return 0

    if args.command == "remove":
        frames = ws.read_sequence(args.sequence)
        masks = ws.read_masks(args.masks)
        cleaned = stubs.stub_inpaint(frames, masks, iters=args.iters)
        ws.write_sequence(args.out, cleaned)
        print(cleaned.artifact_id)
        return 0

    if args.command == "animate":
        frames = ws.read_sequence(args.sequence)
        masks = ws.read_masks(args.masks)
        reference = load_reference(_resolve(ws.root, args.reference))
        poses = stubs.stub_pose(masks)
        rgba = stubs.stub_animate(reference, poses, (frames.width, frames.height))
        ws.write_sequence(args.out, rgba)
        print(rgba.artifact_id)
        return 0

    if args.command == "compose":
        fg = ws.read_sequence(args.foreground)
        bg = ws.read_sequence(args.background)
        out = composite_sequence(fg, bg)
        ws.write_sequence(args.out, out)
        print(out.artifact_id)
        return 0

    if args.command == "run":
        config = PipelineConfig.from_json_file(_resolve(ws.root, args.config))
        result = run(plan(config, ws), ws)
        print(result.final_artifact_id)
        return 0

    if args.command == "verify-cache":
        config = PipelineConfig.from_json_file(_resolve(ws.root, args.config))
        results = verify_cache(plan(config, ws), ws)
        clean = True
        for stage, ok in results.items():
            print(f"{stage}: {'ok' if ok else 'MISMATCH'}")
            clean = clean and ok
        return 0 if clean else 1

    if args.command == "serve":
        import uvicorn

        from .service import create_app

        static = args.static or _default_static()
        app = create_app(ws.root, static_dir=static)
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0

    raise ConfigError(f"unknown command {args.command!r}")


def _default_static() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
