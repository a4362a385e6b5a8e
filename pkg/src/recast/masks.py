"""Binary mask sequences, run-length serialization, and mask measurements.

A mask is a boolean ndarray of shape (h, w). A mask sequence stacks one mask
per frame into an (n, h, w) boolean array and is content-addressed like every
other artifact. Run-length encoding is row-major with a leading zero-run
(which may be empty), the usual segmentation interchange convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptRleError, DimensionError, LengthError
from .hashing import artifact_hash

__all__ = [
    "Mask",
    "MaskSequence",
    "RleMask",
    "rle_encode",
    "rle_decode",
    "mask_iou",
    "mask_bbox",
    "mask_from_gray",
    "sequence_to_json",
    "sequence_from_json",
]

# A mask is any (h, w) bool ndarray; the alias is documentation, not a wrapper.
Mask = np.ndarray

GRAY_THRESHOLD = 128  # grayscale imports binarize at value >= 128


@dataclass(frozen=True)
class RleMask:
    """Row-major run-length encoding; runs alternate starting with zeros."""

    width: int
    height: int
    counts: tuple[int, ...]


@dataclass
class MaskSequence:
    """Per-frame binary masks sharing one (width, height)."""

    masks: np.ndarray  # (n, h, w) bool
    artifact_id: str = field(default="")

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=bool)
        if masks.ndim != 3:
            raise DimensionError(f"mask stack must be (n, h, w), got shape {masks.shape}")
        masks.flags.writeable = False
        self.masks = masks
        if not self.artifact_id:
            self.artifact_id = artifact_hash(sequence_to_json(self).encode("utf-8"))

    def __len__(self) -> int:
        return self.masks.shape[0]

    @property
    def width(self) -> int:
        return self.masks.shape[2]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    def __getitem__(self, i: int) -> Mask:
        return self.masks[i]


def _require_mask(mask: Mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool, copy=False)


def rle_encode(mask: Mask) -> RleMask:
    """Encode a mask as alternating run lengths, first run counting zeros."""
    m = _require_mask(mask)
    h, w = m.shape
    flat = m.ravel()
    counts: list[int] = []
    if flat.size == 0:
        return RleMask(width=w, height=h, counts=())
    # boundaries between runs, plus the leading zero-run convention
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    edges = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(edges)
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return RleMask(width=w, height=h, counts=tuple(counts))


def rle_decode(rle: RleMask) -> Mask:
    """Exact inverse of rle_encode; raises CorruptRleError on a size mismatch."""
    total = rle.width * rle.height
    if sum(rle.counts) != total:
        raise CorruptRleError(
            f"counts sum {sum(rle.counts)} != {rle.width}x{rle.height} = {total}"
        )
    if any(c < 0 for c in rle.counts):
        raise CorruptRleError("negative run length")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for count in rle.counts:
        if value:
            flat[pos : pos + count] = True
        pos += count
        value = not value
    return flat.reshape(rle.height, rle.width)


def mask_iou(a: Mask, b: Mask) -> float:
    """Intersection over union; both-empty is 1.0 by convention."""
    ma, mb = _require_mask(a), _require_mask(b)
    if ma.shape != mb.shape:
        raise DimensionError(f"mask dims differ: {ma.shape} vs {mb.shape}")
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 1.0
    return np.count_nonzero(ma & mb) / union


def mask_bbox(mask: Mask) -> tuple[int, int, int, int] | None:
    """Tight inclusive (x_min, y_min, x_max, y_max) over set bits; None if empty."""
    m = _require_mask(mask)
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())


def mask_from_gray(gray: np.ndarray) -> Mask:
    """Binarize an 8-bit grayscale image at the fixed import threshold."""
    return np.asarray(gray) >= GRAY_THRESHOLD


def sequence_to_json(seq: MaskSequence) -> str:
    """Canonical one-document serialization, bit-exact across platforms."""
    frames = [{"counts": list(rle_encode(m).counts)} for m in seq.masks]
    doc = {"dims": [seq.width, seq.height], "frames": frames}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def sequence_from_json(text: str, expected_frames: int | None = None) -> MaskSequence:
    """Parse the canonical document back into a MaskSequence."""
    doc = json.loads(text)
    w, h = doc["dims"]
    masks = []
    for frame in doc["frames"]:
        rle = RleMask(width=w, height=h, counts=tuple(frame["counts"]))
        masks.append(rle_decode(rle))
    if not masks:
        masks_arr = np.zeros((0, h, w), dtype=bool)
    else:
        masks_arr = np.stack(masks)
    if expected_frames is not None and masks_arr.shape[0] != expected_frames:
        raise LengthError(
            f"mask sequence has {masks_arr.shape[0]} frames, expected {expected_frames}"
        )
    return MaskSequence(masks=masks_arr)
