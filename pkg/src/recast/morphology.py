"""Binary morphology with Euclidean disk structuring elements.

Dilation and erosion treat everything outside the image as unset, so dilation
never fabricates off-image support and erosion shrinks at borders. The edge
band (dilation minus erosion) is the region re-filled by edge refinement.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .masks import Mask, _require_mask

__all__ = ["disk_offsets", "dilate", "erode", "edge_band", "scaled_radius"]


@lru_cache(maxsize=64)
def disk_offsets(radius: int) -> tuple[tuple[int, int], ...]:
    """All (dx, dy) with dx^2 + dy^2 <= radius^2; includes (0, 0), negation-symmetric."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r2 = radius * radius
    offs = [
        (dx, dy)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dx * dx + dy * dy <= r2
    ]
    return tuple(offs)


def _shifted(mask: np.ndarray, dx: int, dy: int, fill: bool) -> np.ndarray:
    """Mask translated by (dx, dy), with off-image positions set to `fill`."""
    h, w = mask.shape
    out = np.full((h, w), fill, dtype=bool)
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def dilate(mask: Mask, radius: int) -> Mask:
    """Set (x, y) iff any input bit within the disk translated to (x, y) is set."""
    m = _require_mask(mask)
    if radius == 0:
        return m.copy()
    out = np.zeros_like(m)
    for dx, dy in disk_offsets(radius):
        out |= _shifted(m, dx, dy, fill=False)
    return out


def erode(mask: Mask, radius: int) -> Mask:
    """Set (x, y) iff every disk position is set; off-image counts as unset."""
    m = _require_mask(mask)
    if radius == 0:
        return m.copy()
    out = np.ones_like(m)
    for dx, dy in disk_offsets(radius):
        out &= _shifted(m, dx, dy, fill=False)
    return out


def edge_band(mask: Mask, r_out: int, r_in: int) -> Mask:
    """Band straddling the contour: dilate(mask, r_out) AND NOT erode(mask, r_in)."""
    return dilate(mask, r_out) & ~erode(mask, r_in)


def scaled_radius(radius: int, width: int, reference_width: int, minimum: int = 0) -> int:
    """Scale a radius defined at reference_width to this frame width.

    Round-half-up keeps the band the same visual thickness across resolutions.
    """
    scaled = int(np.floor(radius * width / reference_width + 0.5))
    return max(minimum, scaled)
