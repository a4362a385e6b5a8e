"""Runnable stub worker: speaks the wire protocol, serves all five stages.

Run as ``python -m recast.workers.stub_main``; the engine supplies the
workspace root via the RECAST_WORKSPACE environment variable (or
``--workspace``). Exists so the protocol path gets exercised end to end by a
real subprocess, not just by in-process function calls.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from ..masks import sequence_from_json, sequence_to_json
from ..workspace import FRAME_PATTERN, load_reference, read_frame_dir, save_frame
from . import stubs
from .client import WORKSPACE_ENV
from .types import PROTOCOL_VERSION, STAGE_NAMES, PoseSequence, Prompt, StageRequest


def _send(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _write_frames(root: Path, rel: str, frames) -> None:
    out = root / rel
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(frames)):
        save_frame(out / (FRAME_PATTERN % i), frames.frames[i])


def handle_segment_track(root: Path, req: StageRequest) -> dict[str, str]:
    frames = read_frame_dir(root / req.artifacts["frames"])
    prompt = Prompt.from_dict(req.params["prompt"])
    masks = stubs.stub_segment_track(frames, prompt, tau=float(req.params.get("tau", 30.0)))
    out = req.artifacts["out_masks"]
    (root / out).parent.mkdir(parents=True, exist_ok=True)
    (root / out).write_text(sequence_to_json(masks), encoding="utf-8")
    return {"masks": out}


def handle_inpaint(root: Path, req: StageRequest) -> dict[str, str]:
    frames = read_frame_dir(root / req.artifacts["frames"])
    masks = sequence_from_json((root / req.artifacts["masks"]).read_text(encoding="utf-8"))
    result = stubs.stub_inpaint(frames, masks, iters=int(req.params.get("iters", 200)))
    _write_frames(root, req.artifacts["out_frames"], result)
    return {"frames": req.artifacts["out_frames"]}


def handle_pose_estimate(root: Path, req: StageRequest) -> dict[str, str]:
    masks = sequence_from_json((root / req.artifacts["masks"]).read_text(encoding="utf-8"))
    poses = stubs.stub_pose(masks)
    out = req.artifacts["out_poses"]
    (root / out).parent.mkdir(parents=True, exist_ok=True)
    (root / out).write_text(poses.to_json(), encoding="utf-8")
    return {"poses": out}


def handle_animate(root: Path, req: StageRequest) -> dict[str, str]:
    ref = load_reference(root / req.artifacts["reference"], anchors=req.params.get("anchors"))
    poses = PoseSequence.from_json((root / req.artifacts["poses"]).read_text(encoding="utf-8"))
    scene_dims = (int(req.params["scene_width"]), int(req.params["scene_height"]))
    result = stubs.stub_animate(ref, poses, scene_dims)
    _write_frames(root, req.artifacts["out_frames"], result)
    return {"frames": req.artifacts["out_frames"]}


def handle_harmonize_params(root: Path, req: StageRequest) -> dict[str, str]:
    frames = read_frame_dir(root / req.artifacts["frames"])
    masks = sequence_from_json((root / req.artifacts["masks"]).read_text(encoding="utf-8"))
    grid = stubs.stub_harmonize_params(
        frames,
        masks,
        ring_width=int(req.params.get("ring_width", 3)),
        stride=int(req.params.get("stride", 8)),
        start=int(req.params.get("start", 0)),
        end=req.params.get("end"),
    )
    out = req.artifacts["out_grids"]
    doc = {"granularity": "block", "grids": [json.loads(grid.to_json())]}
    (root / out).parent.mkdir(parents=True, exist_ok=True)
    (root / out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")), encoding="utf-8")
    return {"grids": out}


HANDLERS = {
    "segment_track": handle_segment_track,
    "inpaint": handle_inpaint,
    "pose_estimate": handle_pose_estimate,
    "animate": handle_animate,
    "harmonize_params": handle_harmonize_params,
}


def serve(root: Path, stages: tuple[str, ...] = STAGE_NAMES, max_batch: int = 16) -> int:
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            _send({"request_id": None, "error": {"code": "bad_json", "message": line[:200]}})
            continue
        if "hello" in doc:
            if doc["hello"].get("protocol_version") != PROTOCOL_VERSION:
                _send({"error": {"code": "bad_version", "message": "unsupported protocol version"}})
                return 1
            _send({"ready": {"protocol_version": PROTOCOL_VERSION, "stages": list(stages), "max_batch": max_batch}})
            continue
        if "shutdown" in doc:
            return 0
        req = StageRequest.from_wire(doc)
        handler = HANDLERS.get(req.stage)
        if handler is None or req.stage not in stages:
            _send({"request_id": req.request_id, "error": {"code": "unknown_stage", "message": req.stage}})
            continue
        try:
            artifacts = handler(root, req)
            _send({"request_id": req.request_id, "ok": {"artifacts": artifacts}})
        except Exception as exc:
            _send({"request_id": req.request_id, "error": {"code": type(exc).__name__, "message": str(exc)}})
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="deterministic stub worker")
    parser.add_argument("--workspace", default=os.environ.get(WORKSPACE_ENV))
    parser.add_argument("--stages", default=",".join(STAGE_NAMES))
    args = parser.parse_args(argv)
    if not args.workspace:
        print("no workspace given (flag or RECAST_WORKSPACE)", file=sys.stderr)
        return 2
    return serve(Path(args.workspace), stages=tuple(args.stages.split(",")))


if __name__ == "__main__":
    sys.exit(main())
