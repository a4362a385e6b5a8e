"""Stage DAG: segment -> remove and pose -> animate branches joined by
composite -> harmonize -> edge_refine, with content-addressed caching.

Every stage output is cached under a key derived from the stage name, its
canonical parameters, its input artifact ids, and the engine version, so
re-runs skip clean work and a change anywhere invalidates exactly the stages
downstream of it.
"""

from __future__ import annotations

import datetime
import json
import os
import shutil
import threading
import time
import uuid
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__ as ENGINE_VERSION
from .compositing import composite_sequence
from .edge_refine import EdgeBandConfig, edge_band_sequence, refine_edges
from .errors import ConfigError, ContractViolationError, StageError
from .harmonization import (
    ColorTransformGrid,
    grid_cells_for,
    harmonize_sequence,
    identity_grid,
    partition_blocks,
)
from .hashing import artifact_hash
from .masks import MaskSequence, sequence_from_json, sequence_to_json
from .workers import stubs
from .workers.client import open_worker
from .workers.types import PoseSequence, Prompt, StageRequest, WorkerSpec
from .workspace import (
    FRAME_PATTERN,
    FrameSequence,
    Workspace,
    load_reference,
    read_frame_dir,
    save_frame,
)

__all__ = ["PipelineConfig", "StagePlan", "PlanNode", "plan", "run", "cache_key", "verify_cache", "RunResult"]

ALPHA_MASK_THRESHOLD = 128  # animate alpha binarizes here for mask consumers

STAGE_WORKER_KIND = {
    "segment_track": "segment_track",
    "remove": "inpaint",
    "pose_estimate": "pose_estimate",
    "animate": "animate",
    "composite": None,  # pure engine math
    "harmonize": "harmonize_params",
    "edge_refine": "inpaint",
}


@dataclass
class PipelineConfig:
    """Everything one run needs; deserialized from a single JSON document."""

    scene: str
    prompt: Prompt
    reference: str
    output: str = "result"
    removal_enabled: bool = True
    workers: dict = field(default_factory=dict)  # worker kind -> "stub" | "identity" | WorkerSpec
    edge: EdgeBandConfig = field(default_factory=EdgeBandConfig)
    edge_inpaint_iters: int = 64
    block_len: int = 16
    overlap: int = 4
    stride: int = 8
    ring_width: int = 3
    segment_tau: float = 30.0
    removal_iters: int = 200
    reference_anchors: dict | None = None

    def __post_init__(self):
        if self.overlap >= self.block_len or self.overlap < 0:
            raise ConfigError(
                f"harmonize overlap must satisfy 0 <= overlap < block_len, got {self.overlap}/{self.block_len}"
            )
        for kind in ("segment_track", "inpaint", "pose_estimate", "animate", "harmonize_params"):
            self.workers.setdefault(kind, "stub")

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        for required in ("scene", "prompt", "reference"):
            if required not in doc:
                raise ConfigError(f"config missing field {required!r}")
        workers = {}
        for kind, value in doc.get("workers", {}).items():
            workers[kind] = value if isinstance(value, str) else WorkerSpec.from_dict(value)
        edge_doc = doc.get("edge", {})
        harm = doc.get("harmonize", {})
        return cls(
            scene=doc["scene"],
            prompt=Prompt.from_dict(doc["prompt"]),
            reference=doc["reference"],
            output=doc.get("output", "result"),
            removal_enabled=bool(doc.get("removal_enabled", True)),
            workers=workers,
            edge=EdgeBandConfig(
                r_out=int(edge_doc.get("r_out", 6)),
                r_in=int(edge_doc.get("r_in", 2)),
                scale_reference_width=int(edge_doc.get("scale_reference_width", 1024)),
            ),
            edge_inpaint_iters=int(edge_doc.get("inpaint_iters", 64)),
            block_len=int(harm.get("block_len", 16)),
            overlap=int(harm.get("overlap", 4)),
            stride=int(harm.get("stride", 8)),
            ring_width=int(harm.get("ring_width", 3)),
            segment_tau=float(doc.get("segment", {}).get("tau", 30.0)),
            removal_iters=int(doc.get("removal", {}).get("iters", 200)),
            reference_anchors=doc.get("reference_anchors"),
        )

    @classmethod
    def from_json_file(cls, path: Path | str) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        try:
            return cls.from_dict(doc)
        except KeyError as exc:
            raise ConfigError(f"config missing field {exc}") from exc


def _worker_fingerprint(value) -> dict | str:
    """The semantic identity of a worker for cache keys (not its timeouts)."""
    if isinstance(value, str):
        return value
    return {"transport": value.transport, "command": value.command, "base_url": value.base_url}


@dataclass
class PlanNode:
    name: str
    params: dict
    deps: tuple[str, ...] = ()
    external_inputs: tuple[str, ...] = ()  # artifact ids known at plan time


@dataclass
class StagePlan:
    nodes: dict[str, PlanNode]
    order: tuple[str, ...]
    scene: str
    scene_id: str
    reference_path: str
    reference_id: str
    output: str
    config: PipelineConfig

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(dep, node.name) for node in self.nodes.values() for dep in node.deps]

    def validate(self) -> None:
        """Reject cycles, dangling deps, and a malformed composition node."""
        order = _topo_order(self.nodes)
        if set(order) != set(self.nodes):
            raise ConfigError("stage plan is cyclic")
        comp = self.nodes.get("composite")
        if comp is not None:
            upstream = set(comp.deps)
            expected = {"animate", "remove"} if "remove" in self.nodes else {"animate"}
            if upstream != expected:
                raise ConfigError(f"composite must depend on exactly {sorted(expected)}, got {sorted(upstream)}")


def _topo_order(nodes: dict[str, PlanNode]) -> list[str]:
    indegree = {name: 0 for name in nodes}
    for node in nodes.values():
        for dep in node.deps:
            if dep not in nodes:
                raise ConfigError(f"node {node.name!r} depends on unknown node {dep!r}")
            indegree[node.name] += 1
    ready = [name for name, deg in sorted(indegree.items()) if deg == 0]
    order = []
    while ready:
        name = ready.pop(0)
        order.append(name)
        for node in nodes.values():
            if name in node.deps:
                indegree[node.name] -= 1
                if indegree[node.name] == 0:
                    ready.append(node.name)
    return order


def plan(config: PipelineConfig, workspace: Workspace) -> StagePlan:
    """Build and validate the stage DAG for one configuration."""
    for stage, kind in STAGE_WORKER_KIND.items():
        if kind is not None and kind not in config.workers:
            raise ConfigError(f"stage {stage} requires a {kind!r} worker")
    try:
        scene_info = workspace.sequence_info(config.scene)
    except KeyError as exc:
        raise ConfigError(f"scene {config.scene!r} is not ingested") from exc
    scene_id = scene_info["id"]
    scene_w, scene_h = scene_info["width"], scene_info["height"]
    config.prompt.validate(scene_w, scene_h, scene_info["frames"])

    ref_path = Path(config.reference)
    if not ref_path.is_absolute():
        ref_path = workspace.root / ref_path
    reference = load_reference(ref_path, anchors=config.reference_anchors)
    reference_id = reference.artifact_id

    w = {k: _worker_fingerprint(v) for k, v in config.workers.items()}
    nodes: dict[str, PlanNode] = {}
    nodes["segment_track"] = PlanNode(
        name="segment_track",
        params={"prompt": config.prompt.to_dict(), "tau": config.segment_tau, "worker": w["segment_track"]},
        external_inputs=(scene_id,),
    )
    if config.removal_enabled:
        nodes["remove"] = PlanNode(
            name="remove",
            params={"iters": config.removal_iters, "worker": w["inpaint"]},
            deps=("segment_track",),
            external_inputs=(scene_id,),
        )
    nodes["pose_estimate"] = PlanNode(
        name="pose_estimate",
        params={"worker": w["pose_estimate"]},
        deps=("segment_track",),
        external_inputs=(scene_id,),
    )
    nodes["animate"] = PlanNode(
        name="animate",
        params={
            "scene_width": scene_w,
            "scene_height": scene_h,
            "anchors": config.reference_anchors,
            "worker": w["animate"],
        },
        deps=("pose_estimate",),
        external_inputs=(reference_id,),
    )
    composite_deps = ("remove", "animate") if config.removal_enabled else ("animate",)
    nodes["composite"] = PlanNode(
        name="composite",
        params={},
        deps=composite_deps,
        external_inputs=() if config.removal_enabled else (scene_id,),
    )
    nodes["harmonize"] = PlanNode(
        name="harmonize",
        params={
            "block_len": config.block_len,
            "overlap": config.overlap,
            "stride": config.stride,
            "ring_width": config.ring_width,
            "worker": w["harmonize_params"],
        },
        deps=("composite", "animate"),
    )
    nodes["edge_refine"] = PlanNode(
        name="edge_refine",
        params={
            "r_out": config.edge.r_out,
            "r_in": config.edge.r_in,
            "scale_reference_width": config.edge.scale_reference_width,
            "iters": config.edge_inpaint_iters,
            "worker": w["inpaint"],
        },
        deps=("harmonize", "animate"),
    )
    result = StagePlan(
        nodes=nodes,
        order=tuple(_topo_order(nodes)),
        scene=config.scene,
        scene_id=scene_id,
        reference_path=str(ref_path),
        reference_id=reference_id,
        output=config.output,
        config=config,
    )
    result.validate()
    return result


def canonical_params(params: dict) -> bytes:
    return json.dumps(params, sort_keys=True, separators=(",", ":")).encode("utf-8")


def cache_key(stage: str, params: bytes, inputs: list[str]) -> str:
    """Key = hash(stage || params || sorted input ids || engine version)."""
    parts = [stage.encode("utf-8"), params]
    parts.extend(i.encode("utf-8") for i in sorted(inputs))
    parts.append(ENGINE_VERSION.encode("utf-8"))
    return artifact_hash(b"\x00".join(parts))


@dataclass
class RunResult:
    final_artifact_id: str
    events: list[dict]
    node_keys: dict[str, str]
    node_ids: dict[str, str]
    log_path: Path | None = None


class _RunContext:
    """Holds loaded artifacts during a run; lazily materializes cache hits."""

    def __init__(self, plan: StagePlan, ws: Workspace):
        self.plan = plan
        self.ws = ws
        self.config = plan.config
        self.entry_dirs: dict[str, Path] = {}
        self._cache: dict[str, object] = {}
        self._lock = threading.Lock()

    def scene(self) -> FrameSequence:
        return self._memo("scene", lambda: self.ws.read_sequence(self.plan.scene))

    def reference(self):
        return self._memo(
            "reference",
            lambda: load_reference(self.plan.reference_path, anchors=self.config.reference_anchors),
        )

    def frames_of(self, node: str) -> FrameSequence:
        return self._memo(f"frames:{node}", lambda: read_frame_dir(self.entry_dirs[node] / "frames"))

    def masks_of(self, node: str) -> MaskSequence:
        return self._memo(
            f"masks:{node}",
            lambda: sequence_from_json((self.entry_dirs[node] / "masks.json").read_text(encoding="utf-8")),
        )

    def poses_of(self, node: str) -> PoseSequence:
        return self._memo(
            f"poses:{node}",
            lambda: PoseSequence.from_json((self.entry_dirs[node] / "poses.json").read_text(encoding="utf-8")),
        )

    def alpha_masks(self, node: str = "animate") -> MaskSequence:
        def build():
            rgba = self.frames_of(node)
            return MaskSequence(masks=rgba.frames[:, :, :, 3] >= ALPHA_MASK_THRESHOLD)

        return self._memo(f"alpha:{node}", build)

    def put_frames(self, node: str, seq: FrameSequence) -> None:
        with self._lock:
            self._cache[f"frames:{node}"] = seq

    def _memo(self, key: str, build):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = build()
        with self._lock:
            self._cache.setdefault(key, value)
            return self._cache[key]

    def rel(self, path: Path) -> str:
        return str(path.relative_to(self.ws.root))

    def worker_for(self, stage: str):
        return self.config.workers[STAGE_WORKER_KIND[stage]]


def _write_frames_dir(dir: Path, seq: FrameSequence) -> None:
    dir.mkdir(parents=True, exist_ok=True)
    for i in range(len(seq)):
        save_frame(dir / (FRAME_PATTERN % i), seq.frames[i])


def _frames_output(tmp: Path, seq: FrameSequence) -> tuple[str, str]:
    _write_frames_dir(tmp / "frames", seq)
    return "frames", seq.artifact_id


def _masks_output(tmp: Path, masks: MaskSequence) -> tuple[str, str]:
    (tmp / "masks.json").write_text(sequence_to_json(masks), encoding="utf-8")
    return "masks.json", masks.artifact_id


def _invoke_stage_worker(ctx: _RunContext, spec: WorkerSpec, stage: str, params: dict,
                         artifacts: dict[str, str], validator=None) -> dict[str, str]:
    req = StageRequest(request_id=uuid.uuid4().hex, stage=stage, params=params, artifacts=artifacts)
    with open_worker(spec, ctx.ws.root) as worker:
        resp = worker.invoke(req, workspace_root=ctx.ws.root, validator=validator)
    return resp.artifacts


# ---------------------------------------------------------------------------
# stage executors: (ctx, node, tmp dir) -> artifact id of the node's output


def _exec_segment_track(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("segment_track")
    scene = ctx.scene()
    if isinstance(worker, str):
        masks = stubs.stub_segment_track(scene, ctx.config.prompt, tau=ctx.config.segment_tau)
    else:
        out_rel = ctx.rel(tmp / "masks.json")
        _invoke_stage_worker(
            ctx,
            worker,
            "segment_track",
            {"prompt": ctx.config.prompt.to_dict(), "tau": ctx.config.segment_tau},
            {"frames": f"seq/{ctx.plan.scene}", "out_masks": out_rel},
            validator=lambda arts: _validate_masks(ctx, arts["masks"], scene),
        )
        masks = sequence_from_json((tmp / "masks.json").read_text(encoding="utf-8"))
    _, artifact_id = _masks_output(tmp, masks)
    return artifact_id


def _validate_masks(ctx: _RunContext, rel: str, scene: FrameSequence) -> None:
    masks = sequence_from_json((ctx.ws.root / rel).read_text(encoding="utf-8"))
    if len(masks) != len(scene):
        raise ContractViolationError(f"mask sequence length {len(masks)} != clip length {len(scene)}")
    if (masks.width, masks.height) != (scene.width, scene.height):
        raise ContractViolationError(
            f"mask dims {masks.width}x{masks.height} != clip dims {scene.width}x{scene.height}"
        )


def _validate_frames_dir(ctx: _RunContext, rel: str, n: int, width: int, height: int, channels: int) -> FrameSequence:
    seq = read_frame_dir(ctx.ws.root / rel)
    if len(seq) != n or (seq.width, seq.height) != (width, height) or seq.channels != channels:
        raise ContractViolationError(
            f"frames at {rel}: got {len(seq)}x{seq.width}x{seq.height}x{seq.channels}, "
            f"expected {n}x{width}x{height}x{channels}"
        )
    return seq


def _exec_remove(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("remove")
    scene = ctx.scene()
    masks = ctx.masks_of("segment_track")
    if isinstance(worker, str):
        cleaned = stubs.stub_inpaint(scene, masks, iters=ctx.config.removal_iters)
    else:
        out_rel = ctx.rel(tmp / "frames")
        masks_rel = ctx.rel(ctx.entry_dirs["segment_track"] / "masks.json")
        _invoke_stage_worker(
            ctx,
            worker,
            "inpaint",
            {"iters": ctx.config.removal_iters},
            {"frames": f"seq/{ctx.plan.scene}", "masks": masks_rel, "out_frames": out_rel},
            validator=lambda arts: _validate_frames_dir(
                ctx, arts["frames"], len(scene), scene.width, scene.height, 3
            ),
        )
        cleaned = read_frame_dir(tmp / "frames")
    _, artifact_id = _frames_output(tmp, cleaned)
    ctx.put_frames("remove", cleaned)
    return artifact_id


def _exec_pose(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("pose_estimate")
    masks = ctx.masks_of("segment_track")
    if isinstance(worker, str):
        poses = stubs.stub_pose(masks)
    else:
        out_rel = ctx.rel(tmp / "poses.json")
        masks_rel = ctx.rel(ctx.entry_dirs["segment_track"] / "masks.json")
        _invoke_stage_worker(
            ctx,
            worker,
            "pose_estimate",
            {},
            {"frames": f"seq/{ctx.plan.scene}", "masks": masks_rel, "out_poses": out_rel},
            validator=lambda arts: _validate_poses(ctx, arts["poses"], len(masks)),
        )
        poses = PoseSequence.from_json((tmp / "poses.json").read_text(encoding="utf-8"))
    text = poses.to_json()
    (tmp / "poses.json").write_text(text, encoding="utf-8")
    return artifact_hash(text.encode("utf-8"))


def _validate_poses(ctx: _RunContext, rel: str, n: int) -> None:
    try:
        poses = PoseSequence.from_json((ctx.ws.root / rel).read_text(encoding="utf-8"))
    except (ValueError, KeyError) as exc:
        raise ContractViolationError(f"pose artifact malformed: {exc}") from exc
    if len(poses) != n:
        raise ContractViolationError(f"pose count {len(poses)} != clip length {n}")


def _exec_animate(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("animate")
    scene = ctx.scene()
    poses = ctx.poses_of("pose_estimate")
    if isinstance(worker, str):
        rgba = stubs.stub_animate(ctx.reference(), poses, (scene.width, scene.height))
    else:
        # reference travels as a content-addressed blob inside the workspace
        ref_blob = ctx.ws.cache_dir(ctx.plan.reference_id) / "reference.png"
        if not ref_blob.exists():
            ref_blob.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(ctx.plan.reference_path, ref_blob)
        out_rel = ctx.rel(tmp / "frames")
        _invoke_stage_worker(
            ctx,
            worker,
            "animate",
            {
                "scene_width": scene.width,
                "scene_height": scene.height,
                "anchors": ctx.config.reference_anchors,
            },
            {
                "reference": ctx.rel(ref_blob),
                "poses": ctx.rel(ctx.entry_dirs["pose_estimate"] / "poses.json"),
                "out_frames": out_rel,
            },
            validator=lambda arts: _validate_frames_dir(
                ctx, arts["frames"], len(poses), scene.width, scene.height, 4
            ),
        )
        rgba = read_frame_dir(tmp / "frames")
    _, artifact_id = _frames_output(tmp, rgba)
    ctx.put_frames("animate", rgba)
    return artifact_id


def _exec_composite(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    fg = ctx.frames_of("animate")
    bg = ctx.frames_of("remove") if "remove" in ctx.plan.nodes else ctx.scene()
    comp = composite_sequence(fg, bg)
    _, artifact_id = _frames_output(tmp, comp)
    ctx.put_frames("composite", comp)
    return artifact_id


def _exec_harmonize(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("harmonize")
    comp = ctx.frames_of("composite")
    masks = ctx.alpha_masks()
    schedule = partition_blocks(len(comp), ctx.config.block_len, ctx.config.overlap)
    stride = ctx.config.stride

    if isinstance(worker, str) and worker == "identity":
        params_fn = lambda k, s, e: identity_grid(comp.width, comp.height, stride)
    elif isinstance(worker, str):
        params_fn = lambda k, s, e: stubs.stub_harmonize_params(
            comp, masks, ring_width=ctx.config.ring_width, stride=stride, start=s, end=e
        )
    else:
        comp_rel = ctx.rel(ctx.entry_dirs["composite"] / "frames")
        masks_path = tmp / "alpha_masks.json"
        masks_path.write_text(sequence_to_json(masks), encoding="utf-8")

        def params_fn(k, s, e):
            out_rel = ctx.rel(tmp / f"grids_{k}.json")
            _invoke_stage_worker(
                ctx,
                worker,
                "harmonize_params",
                {"start": s, "end": e, "stride": stride, "ring_width": ctx.config.ring_width},
                {"frames": comp_rel, "masks": ctx.rel(masks_path), "out_grids": out_rel},
            )
            doc = json.loads((tmp / f"grids_{k}.json").read_text(encoding="utf-8"))
            grids = [
                ColorTransformGrid(stride=int(g["stride"]), params=np.asarray(g["grid"], dtype=np.float64))
                for g in doc["grids"]
            ]
            need_w, need_h = grid_cells_for(comp.width, comp.height, stride)
            for g in grids:
                if g.grid_w < need_w or g.grid_h < need_h:
                    raise ContractViolationError(
                        f"grid {g.grid_w}x{g.grid_h} does not cover {comp.width}x{comp.height}"
                    )
            if doc.get("granularity") == "frame":
                return grids
            return grids[0]

    out = harmonize_sequence(comp, masks, params_fn, schedule, stride=stride)
    _, artifact_id = _frames_output(tmp, out)
    ctx.put_frames("harmonize", out)
    return artifact_id


def _exec_edge_refine(ctx: _RunContext, node: PlanNode, tmp: Path) -> str:
    worker = ctx.worker_for("edge_refine")
    harmonized = ctx.frames_of("harmonize")
    bands = edge_band_sequence(ctx.alpha_masks(), ctx.config.edge)

    if isinstance(worker, str):
        inpaint = lambda frames, masks: stubs.stub_inpaint(frames, masks, iters=ctx.config.edge_inpaint_iters)
    else:
        def inpaint(frames, masks):
            bands_path = tmp / "bands.json"
            bands_path.write_text(sequence_to_json(masks), encoding="utf-8")
            out_rel = ctx.rel(tmp / "worker_frames")
            _invoke_stage_worker(
                ctx,
                worker,
                "inpaint",
                {"iters": ctx.config.edge_inpaint_iters},
                {
                    "frames": ctx.rel(ctx.entry_dirs["harmonize"] / "frames"),
                    "masks": ctx.rel(bands_path),
                    "out_frames": out_rel,
                },
                validator=lambda arts: _validate_frames_dir(
                    ctx, arts["frames"], len(frames), frames.width, frames.height, frames.channels
                ),
            )
            return read_frame_dir(tmp / "worker_frames")

    refined = refine_edges(harmonized, bands, inpaint)
    _, artifact_id = _frames_output(tmp, refined)
    ctx.put_frames("edge_refine", refined)
    return artifact_id


_EXECUTORS: dict[str, Callable[[_RunContext, PlanNode, Path], str]] = {
    "segment_track": _exec_segment_track,
    "remove": _exec_remove,
    "pose_estimate": _exec_pose,
    "animate": _exec_animate,
    "composite": _exec_composite,
    "harmonize": _exec_harmonize,
    "edge_refine": _exec_edge_refine,
}

_PRIMARY_OUTPUT = {
    "segment_track": "masks.json",
    "remove": "frames",
    "pose_estimate": "poses.json",
    "animate": "frames",
    "composite": "frames",
    "harmonize": "frames",
    "edge_refine": "frames",
}


def node_cache_key(plan_: StagePlan, node: PlanNode, resolved: dict[str, str]) -> str:
    inputs = list(node.external_inputs) + [resolved[d] for d in node.deps]
    return cache_key(node.name, canonical_params(node.params), inputs)


def run(
    plan_: StagePlan,
    workspace: Workspace,
    progress: Callable[[dict], None] | None = None,
    max_workers: int = 2,
) -> RunResult:
    """Execute the plan, skipping cache hits; returns the final sequence id.

    A stage failure aborts its dependents but lets independent in-flight and
    pending stages finish, so completed work stays cached for the next run.
    """
    ctx = _RunContext(plan_, workspace)
    events: list[dict] = []
    node_keys: dict[str, str] = {}
    node_ids: dict[str, str] = {}
    failure: StageError | None = None
    events_lock = threading.Lock()
    stamp = datetime.datetime.now().strftime("%Y%m%dT%H%M%S%f")
    log_path = workspace.root / "logs" / f"run-{stamp}-{uuid.uuid4().hex[:8]}.jsonl"

    def emit(event: dict) -> None:
        with events_lock:
            events.append(event)
            with log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
        if progress is not None:
            progress(event)

    def execute(name: str) -> None:
        node = plan_.nodes[name]
        key = node_cache_key(plan_, node, node_ids)
        node_keys[name] = key
        entry_dir = workspace.cache_dir(key)
        entry_file = entry_dir / "entry.json"
        if entry_file.exists():
            entry = json.loads(entry_file.read_text(encoding="utf-8"))
            ctx.entry_dirs[name] = entry_dir
            node_ids[name] = entry["output"]["id"]
            emit({"event": "cache_hit", "stage": name, "key": key})
            return
        emit({"event": "stage_start", "stage": name})
        started = time.perf_counter()
        tmp = workspace.root / "cache" / f"{key}.tmp.{os.getpid()}.{threading.get_ident()}"
        tmp.mkdir(parents=True, exist_ok=True)
        try:
            artifact_id = _EXECUTORS[name](ctx, node, tmp)
            entry = {
                "key": key,
                "stage": name,
                "engine_version": ENGINE_VERSION,
                "output": {"path": _PRIMARY_OUTPUT[name], "id": artifact_id},
            }
            (tmp / "entry.json").write_text(json.dumps(entry, sort_keys=True, indent=2), encoding="utf-8")
            try:
                os.rename(tmp, entry_dir)
            except OSError:
                # lost a benign race: an identical entry landed first
                shutil.rmtree(tmp, ignore_errors=True)
            ctx.entry_dirs[name] = entry_dir
            node_ids[name] = artifact_id
            elapsed_ms = int((time.perf_counter() - started) * 1000)
            emit({"event": "stage_done", "stage": name, "ms": elapsed_ms, "key": key})
        except Exception:
            shutil.rmtree(tmp, ignore_errors=True)
            raise

    # schedule nodes as their dependencies complete; failures poison dependents
    pending = set(plan_.order)
    done: set[str] = set()
    poisoned: set[str] = set()
    futures = {}

    def eligible() -> list[str]:
        out = []
        for name in plan_.order:
            if name in pending and name not in poisoned and name not in {f for f in futures.values()}:
                if all(d in done for d in plan_.nodes[name].deps):
                    out.append(name)
        return out

    def poison(name: str) -> None:
        for node in plan_.nodes.values():
            if name in node.deps and node.name in pending:
                poisoned.add(node.name)
                poison(node.name)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        while pending - poisoned or futures:
            for name in eligible():
                futures[pool.submit(execute, name)] = name
                pending.discard(name)
            if not futures:
                break
            finished, _ = wait(futures, return_when=FIRST_COMPLETED)
            for fut in finished:
                name = futures.pop(fut)
                exc = fut.exception()
                if exc is None:
                    done.add(name)
                    continue
                poison(name)
                stage_exc = exc if isinstance(exc, StageError) else StageError(name, str(exc))
                emit({"event": "stage_failed", "stage": name, "error": str(exc)})
                if failure is None:
                    failure = stage_exc

    if failure is not None:
        raise failure

    final_id = node_ids["edge_refine"]
    final_seq = ctx.frames_of("edge_refine")
    workspace.write_sequence(plan_.output, final_seq)
    emit({"event": "run_done", "output": plan_.output, "artifact_id": final_id})
    return RunResult(
        final_artifact_id=final_id,
        events=events,
        node_keys=node_keys,
        node_ids=node_ids,
        log_path=log_path,
    )


def verify_cache(plan_: StagePlan, workspace: Workspace) -> dict[str, bool]:
    """Re-execute every cached stage and compare output ids against the cache.

    Returns stage -> True when the cached output matches re-execution. Stages
    without a cache entry are skipped.
    """
    ctx = _RunContext(plan_, workspace)
    resolved: dict[str, str] = {}
    results: dict[str, bool] = {}
    for name in plan_.order:
        node = plan_.nodes[name]
        if any(d not in resolved for d in node.deps):
            break
        key = node_cache_key(plan_, node, resolved)
        entry_dir = workspace.cache_dir(key)
        entry_file = entry_dir / "entry.json"
        if not entry_file.exists():
            break
        entry = json.loads(entry_file.read_text(encoding="utf-8"))
        ctx.entry_dirs[name] = entry_dir
        tmp = workspace.root / "cache" / f"verify.{key}.{os.getpid()}"
        tmp.mkdir(parents=True, exist_ok=True)
        try:
            fresh_id = _EXECUTORS[name](ctx, node, tmp)
            results[name] = fresh_id == entry["output"]["id"]
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
        resolved[name] = entry["output"]["id"]
    return results
