"""Wire-level domain types for the worker protocol."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import PromptError, ProtocolError
from ..masks import RleMask, rle_decode

PROTOCOL_VERSION = 1

STAGE_NAMES = ("segment_track", "inpaint", "pose_estimate", "animate", "harmonize_params")

# The 17 standard human joints, in canonical serialization order.
COCO_JOINTS = (
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)


@dataclass
class Prompt:
    """User spatial hint anchored to one frame: points, a box, or a mask."""

    frame_index: int
    kind: str  # point | box | mask
    points: list[tuple[float, float, str]] = field(default_factory=list)  # (x, y, positive|negative)
    box: tuple[float, float, float, float] | None = None  # x_min, y_min, x_max, y_max
    mask: RleMask | None = None

    def validate(self, width: int, height: int, n_frames: int) -> None:
        if not 0 <= self.frame_index < n_frames:
            raise PromptError(f"frame_index {self.frame_index} outside [0, {n_frames})")
        if self.kind == "point":
            if not self.points:
                raise PromptError("point prompt requires at least one point")
            for x, y, label in self.points:
                if label not in ("positive", "negative"):
                    raise PromptError(f"unknown point label {label!r}")
                if not (0 <= x < width and 0 <= y < height):
                    raise PromptError(f"point ({x}, {y}) outside {width}x{height} frame")
        elif self.kind == "box":
            if self.box is None:
                raise PromptError("box prompt requires a box")
            x0, y0, x1, y1 = self.box
            if x0 > x1 or y0 > y1:
                raise PromptError(f"box {self.box} has min > max")
            if not (0 <= x0 and x1 < width and 0 <= y0 and y1 < height):
                raise PromptError(f"box {self.box} outside {width}x{height} frame")
        elif self.kind == "mask":
            if self.mask is None:
                raise PromptError("mask prompt requires a mask")
            if (self.mask.width, self.mask.height) != (width, height):
                raise PromptError(
                    f"prompt mask is {self.mask.width}x{self.mask.height}, frame is {width}x{height}"
                )
        else:
            raise PromptError(f"unknown prompt kind {self.kind!r}")

    def seed(self, frame_width: int, frame_height: int) -> tuple[int, int]:
        """Seed pixel: first positive point, box center, or mask centroid."""
        if self.kind == "point":
            for x, y, label in self.points:
                if label == "positive":
                    return int(x), int(y)
            raise PromptError("point prompt has no positive point to seed from")
        if self.kind == "box":
            x0, y0, x1, y1 = self.box
            return int((x0 + x1) // 2), int((y0 + y1) // 2)
        bits = rle_decode(self.mask)
        ys, xs = np.nonzero(bits)
        if ys.size == 0:
            raise PromptError("prompt mask is empty")
        return int(np.floor(xs.mean() + 0.5)), int(np.floor(ys.mean() + 0.5))

    def to_dict(self) -> dict:
        doc: dict = {"frame_index": self.frame_index, "kind": self.kind}
        if self.points:
            doc["points"] = [[x, y, label] for x, y, label in self.points]
        if self.box is not None:
            doc["box"] = list(self.box)
        if self.mask is not None:
            doc["mask"] = {
                "dims": [self.mask.width, self.mask.height],
                "counts": list(self.mask.counts),
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Prompt":
        mask = None
        if doc.get("mask"):
            w, h = doc["mask"]["dims"]
            mask = RleMask(width=w, height=h, counts=tuple(doc["mask"]["counts"]))
        return cls(
            frame_index=int(doc["frame_index"]),
            kind=doc["kind"],
            points=[(float(p[0]), float(p[1]), p[2]) for p in doc.get("points", [])],
            box=tuple(doc["box"]) if doc.get("box") else None,
            mask=mask,
        )


@dataclass(frozen=True)
class Keypoint:
    name: str
    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass
class PoseSequence:
    """One 17-keypoint set per driving frame."""

    frames: list[tuple[Keypoint, ...]]
    dims: tuple[int, int]  # (w, h)

    def __post_init__(self):
        w, h = self.dims
        for i, kps in enumerate(self.frames):
            if len(kps) != len(COCO_JOINTS):
                raise ValueError(f"pose frame {i} has {len(kps)} keypoints, expected {len(COCO_JOINTS)}")
            for k in kps:
                # off-frame joints are only legal when explicitly unconfident
                if k.confidence > 0 and not (0 <= k.x < w and 0 <= k.y < h):
                    raise ValueError(
                        f"pose frame {i}: joint {k.name} at ({k.x}, {k.y}) outside {w}x{h}"
                    )

    def __len__(self) -> int:
        return len(self.frames)

    def joint(self, i: int, name: str) -> Keypoint:
        return self.frames[i][COCO_JOINTS.index(name)]

    def to_json(self) -> str:
        doc = {
            "dims": list(self.dims),
            "frames": [
                [
                    {"name": k.name, "x": k.x, "y": k.y, "confidence": k.confidence}
                    for k in kps
                ]
                for kps in self.frames
            ],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "PoseSequence":
        doc = json.loads(text)
        frames = [
            tuple(
                Keypoint(name=k["name"], x=float(k["x"]), y=float(k["y"]), confidence=float(k["confidence"]))
                for k in kps
            )
            for kps in doc["frames"]
        ]
        return cls(frames=frames, dims=(int(doc["dims"][0]), int(doc["dims"][1])))


@dataclass
class StageRequest:
    request_id: str
    stage: str
    params: dict
    artifacts: dict[str, str]  # name -> workspace-relative path
    protocol_version: int = PROTOCOL_VERSION

    def to_wire(self) -> dict:
        return {
            "protocol_version": self.protocol_version,
            "request_id": self.request_id,
            "stage": self.stage,
            "params": self.params,
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "StageRequest":
        try:
            return cls(
                request_id=doc["request_id"],
                stage=doc["stage"],
                params=doc.get("params", {}),
                artifacts=doc.get("artifacts", {}),
                protocol_version=int(doc.get("protocol_version", 0)),
            )
        except KeyError as exc:
            raise ProtocolError(f"request missing field {exc}") from exc


@dataclass
class StageResponse:
    """Exactly one of ok-with-artifacts or error-with-code-and-message."""

    request_id: str
    artifacts: dict[str, str] | None = None
    error_code: str | None = None
    error_message: str | None = None

    @property
    def ok(self) -> bool:
        return self.artifacts is not None

    def to_wire(self) -> dict:
        if self.ok:
            return {"request_id": self.request_id, "ok": {"artifacts": self.artifacts}}
        return {
            "request_id": self.request_id,
            "error": {"code": self.error_code or "error", "message": self.error_message or ""},
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "StageResponse":
        if "request_id" not in doc:
            raise ProtocolError("response missing request_id")
        has_ok = "ok" in doc
        has_err = "error" in doc
        if has_ok == has_err:
            raise ProtocolError("response must carry exactly one of 'ok' or 'error'")
        if has_ok:
            return cls(request_id=doc["request_id"], artifacts=dict(doc["ok"].get("artifacts", {})))
        err = doc["error"]
        return cls(
            request_id=doc["request_id"],
            error_code=str(err.get("code", "error")),
            error_message=str(err.get("message", "")),
        )


@dataclass
class WorkerSpec:
    """How to reach one worker: a subprocess command line or an HTTP base URL."""

    transport: str  # subprocess-stdio | http
    command: str | None = None
    base_url: str | None = None
    timeout: float = 600.0
    max_batch: int = 16

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.transport == "subprocess-stdio" and not self.command:
            raise ValueError("subprocess-stdio transport requires a command")
        if self.transport == "http" and not self.base_url:
            raise ValueError("http transport requires a base URL")
        if self.transport not in ("subprocess-stdio", "http"):
            raise ValueError(f"unknown transport {self.transport!r}")

    @classmethod
    def from_dict(cls, doc: dict) -> "WorkerSpec":
        return cls(
            transport=doc["transport"],
            command=doc.get("command"),
            base_url=doc.get("base_url"),
            timeout=float(doc.get("timeout", 600.0)),
            max_batch=int(doc.get("max_batch", 16)),
        )
