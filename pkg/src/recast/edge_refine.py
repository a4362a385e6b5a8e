"""Edge-aware refinement: re-inpaint a thin band straddling the character contour.

The band is derived morphologically from the tracked masks (dilation minus
erosion, radii scaled to frame width). Worker output is only ever merged
through the band, and a worker that touches out-of-band pixels is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractViolationError, DimensionError, LengthError, StageError
from .masks import MaskSequence
from .morphology import edge_band, scaled_radius
from .workspace import FrameSequence, frame_sequence

__all__ = ["EdgeBandConfig", "edge_band_sequence", "refine_edges"]


@dataclass(frozen=True)
class EdgeBandConfig:
    """Band radii, defined at scale_reference_width and scaled per clip."""

    r_out: int = 6
    r_in: int = 2
    scale_reference_width: int = 1024

    def __post_init__(self):
        if self.r_out < 1:
            raise ConfigError(f"r_out must be >= 1, got {self.r_out}")
        if self.r_in < 0:
            raise ConfigError(f"r_in must be >= 0, got {self.r_in}")
        if self.scale_reference_width < 1:
            raise ConfigError("scale_reference_width must be >= 1")

    def radii_for(self, width: int) -> tuple[int, int]:
        r_out = scaled_radius(self.r_out, width, self.scale_reference_width, minimum=1)
        r_in = scaled_radius(self.r_in, width, self.scale_reference_width, minimum=0)
        return r_out, r_in


def edge_band_sequence(masks: MaskSequence, cfg: EdgeBandConfig) -> MaskSequence:
    """Per-frame contour band; empty masks yield empty bands."""
    r_out, r_in = cfg.radii_for(masks.width)
    bands = np.stack([edge_band(masks[i], r_out, r_in) for i in range(len(masks))])
    return MaskSequence(masks=bands)


InpaintWorker = Callable[[FrameSequence, MaskSequence], FrameSequence]


def refine_edges(frames: FrameSequence, bands: MaskSequence, worker: InpaintWorker) -> FrameSequence:
    """Fill band pixels from the worker, keeping everything else byte-identical.

    The worker is not invoked at all when every band is empty. Worker output
    that differs outside the bands raises ContractViolationError.
    """
    if len(frames) != len(bands):
        raise LengthError(f"frames {len(frames)} vs bands {len(bands)}")
    if (frames.height, frames.width) != (bands.height, bands.width):
        raise DimensionError("frame and band dims differ")
    if not bands.masks.any():
        return frames

    try:
        refined = worker(frames, bands)
    except (ContractViolationError, StageError):
        raise
    except Exception as exc:
        raise StageError("edge_refine", f"inpaint worker failed: {exc}") from exc

    if len(refined) != len(frames):
        raise ContractViolationError(
            f"worker returned {len(refined)} frames for {len(frames)} inputs"
        )
    if refined.frames.shape != frames.frames.shape:
        raise ContractViolationError(
            f"worker changed frame shape: {refined.frames.shape} vs {frames.frames.shape}"
        )
    outside = ~bands.masks
    if not np.array_equal(refined.frames[outside], frames.frames[outside]):
        raise ContractViolationError("worker modified pixels outside the edge band")

    merged = np.where(bands.masks[:, :, :, None], refined.frames, frames.frames)
    return frame_sequence(merged, fps=frames.fps)
