"""Alpha-over composition in linear light.

All blending happens on linear-light floats; sRGB bytes are decoded once on
the way in and re-quantized (round half up) once on the way out. Alpha is
straight (non-premultiplied) and linear.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, LengthError
from .masks import MaskSequence
from .workspace import FrameSequence, frame_sequence

__all__ = [
    "srgb_to_linear",
    "linear_to_srgb",
    "srgb_bytes_to_linear",
    "linear_to_srgb_bytes",
    "composite_over",
    "composite_sequence",
    "mask_to_alpha",
]


def srgb_to_linear(u: int | np.ndarray) -> float | np.ndarray:
    """sRGB 8-bit code value(s) to linear light in [0, 1]."""
    c = np.asarray(u, dtype=np.float64) / 255.0
    out = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    return float(out) if np.isscalar(u) or np.ndim(u) == 0 else out


def linear_to_srgb(v: float | np.ndarray) -> int | np.ndarray:
    """Linear light to 8-bit sRGB code value(s), round half up."""
    v_arr = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    c = np.where(v_arr <= 0.0031308, v_arr * 12.92, 1.055 * v_arr ** (1.0 / 2.4) - 0.055)
    out = np.floor(c * 255.0 + 0.5).astype(np.uint8)
    return int(out) if np.isscalar(v) or np.ndim(v) == 0 else out


# Decoding is a pure per-code function; a 256-entry table makes frame
# conversion a single take().
_LINEAR_LUT = np.array([srgb_to_linear(u) for u in range(256)], dtype=np.float64)


def srgb_bytes_to_linear(img: np.ndarray) -> np.ndarray:
    """Vectorized byte -> linear conversion via lookup table."""
    return _LINEAR_LUT[img]


def linear_to_srgb_bytes(img: np.ndarray) -> np.ndarray:
    return linear_to_srgb(img)


def composite_over(fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Alpha-over one RGBA frame onto one RGB frame, returning RGB bytes."""
    fg = np.asarray(fg)
    bg = np.asarray(bg)
    if fg.ndim != 3 or fg.shape[2] != 4:
        raise DimensionError(f"foreground must be RGBA, got shape {fg.shape}")
    if bg.ndim != 3 or bg.shape[2] != 3:
        raise DimensionError(f"background must be RGB, got shape {bg.shape}")
    if fg.shape[:2] != bg.shape[:2]:
        raise DimensionError(f"dims differ: fg {fg.shape[:2]} vs bg {bg.shape[:2]}")
    alpha = fg[:, :, 3:4].astype(np.float64) / 255.0
    fg_lin = srgb_bytes_to_linear(fg[:, :, :3])
    bg_lin = srgb_bytes_to_linear(bg)
    out_lin = fg_lin * alpha + bg_lin * (1.0 - alpha)
    return linear_to_srgb_bytes(out_lin)


def composite_sequence(fg: FrameSequence, bg: FrameSequence) -> FrameSequence:
    """Frame-wise composite_over; deterministic output id."""
    if len(fg) != len(bg):
        raise LengthError(f"length mismatch: fg {len(fg)} vs bg {len(bg)}")
    out = np.stack([composite_over(fg.frames[i], bg.frames[i]) for i in range(len(fg))])
    return frame_sequence(out, fps=bg.fps)


def mask_to_alpha(frames: FrameSequence, masks: MaskSequence) -> FrameSequence:
    """Attach binary masks as a straight alpha channel (255 inside, 0 outside)."""
    if frames.channels != 3:
        raise DimensionError("mask_to_alpha expects RGB input frames")
    if len(frames) != len(masks):
        raise LengthError(f"length mismatch: frames {len(frames)} vs masks {len(masks)}")
    if (frames.height, frames.width) != (masks.height, masks.width):
        raise DimensionError(
            f"dims differ: frames {frames.width}x{frames.height}"
            f" vs masks {masks.width}x{masks.height}"
        )
    alpha = masks.masks.astype(np.uint8) * 255
    rgba = np.concatenate([frames.frames, alpha[:, :, :, None]], axis=3)
    return frame_sequence(rgba, fps=frames.fps)
