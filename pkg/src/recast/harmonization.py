"""Lighting-aware harmonization: per-pixel affine color transforms.

A worker supplies one 3x4 affine matrix per grid cell (stride-8 cells by
default) in linear RGB. The engine lifts the grid to a per-pixel parameter
field with bilinear interpolation, applies it inside the character mask, and
crossfades parameters (not pixels) across overlapping temporal blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .compositing import linear_to_srgb_bytes, srgb_bytes_to_linear
from .errors import ConfigError, ParamError, StageError
from .masks import Mask, MaskSequence, _require_mask
from .workspace import FrameSequence, frame_sequence

__all__ = [
    "ColorTransformGrid",
    "BlockSchedule",
    "partition_blocks",
    "grid_cells_for",
    "identity_grid",
    "upsample_grid",
    "apply_field_linear",
    "apply_pct",
    "blend_params",
    "assemble_block_params",
    "harmonize_sequence",
]

DEFAULT_STRIDE = 8
DEFAULT_BLOCK_LEN = 16
DEFAULT_OVERLAP = 4

IDENTITY_PARAMS = np.array(
    [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
)


@dataclass
class ColorTransformGrid:
    """Grid of per-cell 3x4 affine matrices in linear RGB.

    ``params[j, i, c, k]`` maps input channel k (k=3 is the bias term) to
    output channel c for grid cell (i, j). Cell centers sit at
    ``((i + 0.5) * stride, (j + 0.5) * stride)`` in pixel coordinates.
    """

    stride: int
    params: np.ndarray  # (grid_h, grid_w, 3, 4) float64

    def __post_init__(self):
        p = np.asarray(self.params, dtype=np.float64)
        if p.ndim != 4 or p.shape[2:] != (3, 4):
            raise ParamError(f"grid params must be (gh, gw, 3, 4), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ParamError("grid contains non-finite parameters")
        self.params = p

    @property
    def grid_w(self) -> int:
        return self.params.shape[1]

    @property
    def grid_h(self) -> int:
        return self.params.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {"stride": self.stride, "grid": self.params.tolist()},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ColorTransformGrid":
        doc = json.loads(text)
        return cls(stride=int(doc["stride"]), params=np.asarray(doc["grid"], dtype=np.float64))


def grid_cells_for(width: int, height: int, stride: int) -> tuple[int, int]:
    """(grid_w, grid_h) covering a frame at this stride."""
    return (-(-width // stride), -(-height // stride))


def identity_grid(width: int, height: int, stride: int = DEFAULT_STRIDE) -> ColorTransformGrid:
    gw, gh = grid_cells_for(width, height, stride)
    params = np.broadcast_to(IDENTITY_PARAMS, (gh, gw, 3, 4)).copy()
    return ColorTransformGrid(stride=stride, params=params)


@dataclass(frozen=True)
class BlockSchedule:
    """Contiguous, overlapping frame blocks covering [0, n)."""

    entries: tuple[tuple[int, int], ...]  # (start inclusive, end exclusive)
    block_len: int
    overlap: int


def partition_blocks(
    n_frames: int, block_len: int = DEFAULT_BLOCK_LEN, overlap: int = DEFAULT_OVERLAP
) -> BlockSchedule:
    """Blocks start every (block_len - overlap) frames; the last may be short."""
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    if overlap < 0 or overlap >= block_len:
        raise ConfigError(f"overlap must satisfy 0 <= overlap < block_len, got {overlap} vs {block_len}")
    entries = []
    step = block_len - overlap
    start = 0
    while True:
        end = min(start + block_len, n_frames)
        entries.append((start, end))
        if end >= n_frames:
            break
        start += step
    return BlockSchedule(entries=tuple(entries), block_len=block_len, overlap=overlap)


def upsample_grid(grid: ColorTransformGrid, dims: tuple[int, int]) -> np.ndarray:
    """Bilinearly lift cell parameters to a per-pixel (h, w, 3, 4) field.

    Pixel x maps to grid coordinate x / stride - 0.5 (cell centers land on
    integers), clamped at the borders.
    """
    w, h = dims
    need_w, need_h = grid_cells_for(w, h, grid.stride)
    if grid.grid_w < need_w or grid.grid_h < need_h:
        raise ParamError(
            f"grid {grid.grid_w}x{grid.grid_h} does not cover {w}x{h} at stride {grid.stride}"
        )
    gx = np.clip(np.arange(w, dtype=np.float64) / grid.stride - 0.5, 0.0, grid.grid_w - 1.0)
    gy = np.clip(np.arange(h, dtype=np.float64) / grid.stride - 0.5, 0.0, grid.grid_h - 1.0)
    x0 = np.floor(gx).astype(int)
    y0 = np.floor(gy).astype(int)
    x1 = np.minimum(x0 + 1, grid.grid_w - 1)
    y1 = np.minimum(y0 + 1, grid.grid_h - 1)
    fx = (gx - x0)[None, :, None, None]
    fy = (gy - y0)[:, None, None, None]
    p = grid.params
    field = (
        p[np.ix_(y0, x0)] * (1 - fy) * (1 - fx)
        + p[np.ix_(y0, x1)] * (1 - fy) * fx
        + p[np.ix_(y1, x0)] * fy * (1 - fx)
        + p[np.ix_(y1, x1)] * fy * fx
    )
    return field


def apply_field_linear(linear_rgb: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Apply the per-pixel affine to linear RGB, without clamping or quantizing."""
    return np.einsum("hwck,hwk->hwc", field[:, :, :, :3], linear_rgb) + field[:, :, :, 3]


def apply_pct(frame: np.ndarray, field: np.ndarray, mask: Mask) -> np.ndarray:
    """Parametric color transform inside the mask; byte passthrough outside."""
    frame = np.asarray(frame)
    m = _require_mask(mask)
    if frame.shape[:2] != m.shape or frame.shape[:2] != field.shape[:2]:
        raise ParamError(
            f"dims disagree: frame {frame.shape[:2]}, field {field.shape[:2]}, mask {m.shape}"
        )
    if not np.all(np.isfinite(field)):
        raise ParamError("parameter field contains non-finite values")
    if not m.any():
        return frame.copy()
    lin = srgb_bytes_to_linear(frame[:, :, :3])
    out_lin = np.clip(apply_field_linear(lin, field), 0.0, 1.0)
    out = frame.copy()
    transformed = linear_to_srgb_bytes(out_lin)
    out[:, :, :3] = np.where(m[:, :, None], transformed, frame[:, :, :3])
    return out


def blend_params(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Element-wise crossfade of two parameter sets."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"blend weight must be in [0, 1], got {t}")
    return (1.0 - t) * np.asarray(a, dtype=np.float64) + t * np.asarray(b, dtype=np.float64)


# A params worker maps (block_index, start, end) to one grid for the whole
# block or one grid per frame in it.
ParamsWorker = Callable[[int, int, int], "ColorTransformGrid | Sequence[ColorTransformGrid]"]


def harmonize_sequence(
    frames: FrameSequence,
    masks: MaskSequence,
    worker: ParamsWorker,
    schedule: BlockSchedule,
    stride: int = DEFAULT_STRIDE,
) -> FrameSequence:
    """Harmonize a clip block by block, crossfading parameters in overlaps.

    In the overlap between consecutive blocks of width w, frame j blends the
    incoming block's parameters with weight t = (j - overlap_start + 1) / (w + 1).
    """
    n = len(frames)
    if len(masks) != n:
        raise StageError("harmonize", f"mask count {len(masks)} != frame count {n}")
    gw, gh = grid_cells_for(frames.width, frames.height, stride)

    blocks = []
    for k, (start, end) in enumerate(schedule.entries):
        try:
            got = worker(k, start, end)
        except StageError:
            raise
        except Exception as exc:
            err = StageError("harmonize", f"worker failed on block {k}: {exc}")
            err.block_index = k
            raise err from exc
        blocks.append(_block_params(got, k, start, end, gw, gh, stride))
    per_frame = assemble_block_params(schedule, blocks)

    out = np.empty_like(frames.frames)
    for i in range(n):
        grid = ColorTransformGrid(stride=stride, params=per_frame[i])
        field = upsample_grid(grid, (frames.width, frames.height))
        out[i] = apply_pct(frames.frames[i], field, masks[i])
    return frame_sequence(out, fps=frames.fps)


def assemble_block_params(schedule: BlockSchedule, blocks: list[np.ndarray]) -> np.ndarray:
    """Per-frame parameters from per-block stacks, crossfaded in overlaps.

    ``blocks[k]`` holds one (gh, gw, 3, 4) array per frame of schedule entry
    k. Where entry k+1 overlaps entry k over w frames, overlap frame j takes
    blend weight t = (j - overlap_start + 1) / (w + 1) toward the newer block.
    """
    n = schedule.entries[-1][1]
    first = blocks[0]
    per_frame = np.empty((n,) + first.shape[1:], dtype=np.float64)
    prev_end = None
    for k, (start, end) in enumerate(schedule.entries):
        block = blocks[k]
        if prev_end is None or start >= prev_end:
            per_frame[start:end] = block
        else:
            w_overlap = prev_end - start
            for j in range(start, end):
                if j < prev_end:
                    t = (j - start + 1) / (w_overlap + 1)
                    per_frame[j] = blend_params(per_frame[j], block[j - start], t)
                else:
                    per_frame[j] = block[j - start]
        prev_end = end
    return per_frame


def _block_params(got, k, start, end, gw, gh, stride) -> np.ndarray:
    """Normalize a worker reply to per-frame (gh, gw, 3, 4) arrays for the block."""
    n_block = end - start
    if isinstance(got, ColorTransformGrid):
        grids = [got] * n_block
    else:
        grids = list(got)
        if len(grids) != n_block:
            err = StageError(
                "harmonize", f"block {k}: worker returned {len(grids)} grids for {n_block} frames"
            )
            err.block_index = k
            raise err
    stack = np.empty((n_block, gh, gw, 3, 4), dtype=np.float64)
    for i, g in enumerate(grids):
        if g.stride != stride or (g.grid_h, g.grid_w) != (gh, gw):
            err = StageError(
                "harmonize",
                f"block {k}: grid {g.grid_w}x{g.grid_h}@{g.stride} does not match "
                f"required {gw}x{gh}@{stride}",
            )
            err.block_index = k
            raise err
        stack[i] = g.params
    return stack
