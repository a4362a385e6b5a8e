"""Adapter boundary for the five replaceable stages plus deterministic stubs."""

from .types import (  # noqa: F401
    PROTOCOL_VERSION,
    STAGE_NAMES,
    COCO_JOINTS,
    Keypoint,
    PoseSequence,
    Prompt,
    StageRequest,
    StageResponse,
    WorkerSpec,
)
