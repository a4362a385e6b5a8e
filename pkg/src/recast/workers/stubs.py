"""Deterministic in-process stand-ins for the five neural stages.

Each stub is a pure function of its inputs (no clocks, no RNG) so pipeline
outputs hash identically across runs and platforms. They are not meant to be
pretty, only lawful: they honor the same artifact contracts a real tracker,
inpainter, pose estimator, animator, or harmonizer must satisfy.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import ndimage

from ..compositing import linear_to_srgb_bytes, srgb_bytes_to_linear
from ..errors import (
    DegeneratePoseError,
    DimensionError,
    LengthError,
    UninpaintableError,
)
from ..harmonization import ColorTransformGrid, grid_cells_for
from ..masks import MaskSequence, mask_bbox
from ..morphology import dilate
from ..workspace import FrameSequence, ReferenceCharacter, frame_sequence
from .types import COCO_JOINTS, Keypoint, PoseSequence, Prompt

log = logging.getLogger(__name__)

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _flood_fill(frame: np.ndarray, seed: tuple[int, int], tau: float) -> np.ndarray:
    """4-connected region around seed whose color distance to the seed pixel <= tau."""
    sx, sy = seed
    rgb = frame[:, :, :3].astype(np.int64)
    seed_color = rgb[sy, sx]
    dist2 = ((rgb - seed_color) ** 2).sum(axis=2)
    eligible = dist2 <= tau * tau
    labels, _ = ndimage.label(eligible, structure=FOUR_CONNECTED)
    return labels == labels[sy, sx]


def _centroid(mask: np.ndarray) -> tuple[int, int] | None:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return int(np.floor(xs.mean() + 0.5)), int(np.floor(ys.mean() + 0.5))


def stub_segment_track(frames: FrameSequence, prompt: Prompt, tau: float = 30.0) -> MaskSequence:
    """Color flood-fill tracker: segment at the prompt, re-seed at centroids.

    The prompt frame floods from the prompt seed; every other frame re-seeds
    at the previous frame's mask centroid. Frames whose predecessor lost the
    target stay empty.
    """
    prompt.validate(frames.width, frames.height, len(frames))
    seed = prompt.seed(frames.width, frames.height)
    n = len(frames)
    masks = np.zeros((n, frames.height, frames.width), dtype=bool)
    k = prompt.frame_index
    masks[k] = _flood_fill(frames.frames[k], seed, tau)

    for i in range(k + 1, n):
        prev = _centroid(masks[i - 1])
        if prev is None:
            continue
        masks[i] = _flood_fill(frames.frames[i], prev, tau)
    for i in range(k - 1, -1, -1):
        nxt = _centroid(masks[i + 1])
        if nxt is None:
            continue
        masks[i] = _flood_fill(frames.frames[i], nxt, tau)
    return MaskSequence(masks=masks)


def _inpaint_frame(frame: np.ndarray, mask: np.ndarray, iters: int) -> np.ndarray:
    if not mask.any():
        return frame.copy()
    if mask.all():
        raise UninpaintableError("mask covers the entire frame")
    # iterate only on the mask's bbox plus a 1-px rim: masked pixels never
    # touch anything further out, so the crop is exact, not approximate
    h, w = mask.shape
    x0, y0, x1, y1 = mask_bbox(mask)
    ys = slice(max(0, y0 - 1), min(h, y1 + 2))
    xs = slice(max(0, x0 - 1), min(w, x1 + 2))
    sub_mask = mask[ys, xs]

    ring = dilate(mask, 1) & ~mask
    lin = srgb_bytes_to_linear(frame[:, :, :3])
    cur = lin[ys, xs].copy()
    cur[sub_mask] = lin[ring].mean(axis=0)

    # in-image 4-neighbor count; crop borders either coincide with image
    # borders or are unmasked rim pixels whose counts are never read
    count = np.full(sub_mask.shape, 4.0)
    count[0, :] -= 1
    count[-1, :] -= 1
    count[:, 0] -= 1
    count[:, -1] -= 1
    for _ in range(iters):
        acc = np.zeros_like(cur)
        acc[1:, :] += cur[:-1, :]
        acc[:-1, :] += cur[1:, :]
        acc[:, 1:] += cur[:, :-1]
        acc[:, :-1] += cur[:, 1:]
        cur[sub_mask] = (acc / count[:, :, None])[sub_mask]

    out = frame.copy()
    out[:, :, :3][mask] = linear_to_srgb_bytes(cur[sub_mask])
    return out


def stub_inpaint(frames: FrameSequence, masks: MaskSequence, iters: int = 200) -> FrameSequence:
    """Jacobi diffusion fill: masked pixels relax toward their neighbor average.

    Runs in linear RGB, initialized to the mean of the mask's outer 1-px
    ring; unmasked pixels are untouched byte-for-byte.
    """
    if len(frames) != len(masks):
        raise LengthError(f"frames {len(frames)} vs masks {len(masks)}")
    if (frames.height, frames.width) != (masks.height, masks.width):
        raise DimensionError("frame and mask dims differ")
    out = np.stack([
        _inpaint_frame(frames.frames[i], masks[i], iters) for i in range(len(frames))
    ])
    return frame_sequence(out, fps=frames.fps)


def _skeleton_from_bbox(bbox: tuple[int, int, int, int]) -> dict[str, tuple[float, float]]:
    """Deterministic 17-joint layout from a character bounding box."""
    x_min, y_min, x_max, y_max = bbox
    cx = (x_min + x_max) / 2.0
    w_box = float(x_max - x_min)
    h = float(y_max - y_min)
    joints: dict[str, tuple[float, float]] = {}
    joints["nose"] = (cx, y_min + 0.08 * h)
    for side, sign in (("left", +1.0), ("right", -1.0)):
        shoulder = (cx + sign * 0.2 * w_box, y_min + 0.2 * h)
        hip = (cx + sign * 0.12 * w_box, y_min + 0.55 * h)
        ankle = (cx + sign * 0.12 * w_box, float(y_max))
        nose = joints["nose"]
        joints[f"{side}_shoulder"] = shoulder
        joints[f"{side}_hip"] = hip
        joints[f"{side}_ankle"] = ankle
        # remaining joints sit on line segments between the anchors above
        joints[f"{side}_eye"] = _lerp(nose, shoulder, 1 / 3)
        joints[f"{side}_ear"] = _lerp(nose, shoulder, 2 / 3)
        joints[f"{side}_elbow"] = _lerp(shoulder, hip, 0.5)
        joints[f"{side}_wrist"] = _lerp(shoulder, hip, 0.75)
        joints[f"{side}_knee"] = _lerp(hip, ankle, 0.5)
    return joints


def _lerp(a: tuple[float, float], b: tuple[float, float], t: float) -> tuple[float, float]:
    return (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)


def stub_pose(masks: MaskSequence) -> PoseSequence:
    """Bounding-box skeleton: joints at fixed fractions of each mask's bbox."""
    frames = []
    for i in range(len(masks)):
        bbox = mask_bbox(masks[i])
        if bbox is None:
            frames.append(tuple(Keypoint(name, 0.0, 0.0, 0.0) for name in COCO_JOINTS))
            continue
        joints = _skeleton_from_bbox(bbox)
        frames.append(
            tuple(Keypoint(name, joints[name][0], joints[name][1], 1.0) for name in COCO_JOINTS)
        )
    return PoseSequence(frames=frames, dims=(masks.width, masks.height))


def _midpoint(a: Keypoint, b: Keypoint) -> np.ndarray:
    return np.array([(a.x + b.x) / 2.0, (a.y + b.y) / 2.0])


def _reference_anchors(ref: ReferenceCharacter) -> tuple[np.ndarray, np.ndarray]:
    """(hip midpoint, shoulder midpoint) of the reference character."""
    names = ("left_shoulder", "right_shoulder", "left_hip", "right_hip")
    if ref.anchors and all(n in ref.anchors for n in names):
        a = {n: np.array(ref.anchors[n], dtype=np.float64) for n in names}
        return (a["left_hip"] + a["right_hip"]) / 2.0, (a["left_shoulder"] + a["right_shoulder"]) / 2.0
    alpha_mask = ref.image[:, :, 3] >= 128
    bbox = mask_bbox(alpha_mask)
    if bbox is None:
        raise DegeneratePoseError("reference character has an empty alpha matte")
    joints = _skeleton_from_bbox(bbox)
    hip = (np.array(joints["left_hip"]) + np.array(joints["right_hip"])) / 2.0
    shoulder = (np.array(joints["left_shoulder"]) + np.array(joints["right_shoulder"])) / 2.0
    return hip, shoulder


def _bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample (h_src, w_src, c) at float coords; outside the image is transparent."""
    h, w = img.shape[:2]
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0)[:, :, None]
    fy = (yc - y0)[:, :, None]
    src = img.astype(np.float64)
    out = (
        src[y0, x0] * (1 - fy) * (1 - fx)
        + src[y0, x1] * (1 - fy) * fx
        + src[y1, x0] * fy * (1 - fx)
        + src[y1, x1] * fy * fx
    )
    out[~valid] = 0.0
    return out


def stub_animate(
    ref: ReferenceCharacter, poses: PoseSequence, scene_dims: tuple[int, int]
) -> FrameSequence:
    """Place the reference onto the scene by similarity transform per frame.

    The reference's hip-to-shoulder segment is mapped onto the target pose's
    (translation, uniform scale, rotation); pixels are bilinearly resampled.
    Zero-confidence pose frames come out fully transparent.
    """
    if ref.image[:, :, 3].max() == 0:
        raise DegeneratePoseError("reference character has an empty alpha matte")
    if len(poses) == 0:
        raise LengthError("pose sequence is empty")
    hip_ref, shoulder_ref = _reference_anchors(ref)
    v_ref = shoulder_ref - hip_ref
    norm_ref = float(np.hypot(*v_ref))
    if norm_ref == 0.0:
        raise DegeneratePoseError("reference hip and shoulder midpoints coincide")

    scene_w, scene_h = scene_dims
    out = np.zeros((len(poses), scene_h, scene_w, 4), dtype=np.uint8)
    gx, gy = np.meshgrid(np.arange(scene_w, dtype=np.float64), np.arange(scene_h, dtype=np.float64))

    for i, kps in enumerate(poses.frames):
        if all(k.confidence == 0.0 for k in kps):
            continue
        by_name = {k.name: k for k in kps}
        hip_tgt = _midpoint(by_name["left_hip"], by_name["right_hip"])
        shoulder_tgt = _midpoint(by_name["left_shoulder"], by_name["right_shoulder"])
        v_tgt = shoulder_tgt - hip_tgt
        norm_tgt = float(np.hypot(*v_tgt))
        if norm_tgt == 0.0:
            raise DegeneratePoseError(f"pose frame {i}: hip and shoulder midpoints coincide")
        scale = norm_tgt / norm_ref
        theta = np.arctan2(v_tgt[1], v_tgt[0]) - np.arctan2(v_ref[1], v_ref[0])
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        # inverse map: scene pixel -> reference coordinates
        dx = gx - hip_tgt[0]
        dy = gy - hip_tgt[1]
        src_x = (cos_t * dx + sin_t * dy) / scale + hip_ref[0]
        src_y = (-sin_t * dx + cos_t * dy) / scale + hip_ref[1]
        sampled = _bilinear_sample(ref.image, src_x, src_y)
        out[i] = np.floor(sampled + 0.5).astype(np.uint8)
    return frame_sequence(out)


STAT_EPSILON = 1e-4


def stub_harmonize_params(
    composite: FrameSequence,
    masks: MaskSequence,
    ring_width: int = 3,
    stride: int = 8,
    start: int = 0,
    end: int | None = None,
) -> ColorTransformGrid:
    """Statistics matcher: diagonal gains and biases aligning foreground
    linear mean/std with the background ring over one block of frames.

    Gains are sigma_bg / max(sigma_fg, epsilon) per channel; biases then land
    the foreground mean exactly on the ring mean. Empty foreground falls back
    to the identity grid with a warning.
    """
    end = len(composite) if end is None else end
    if len(composite) != len(masks):
        raise LengthError(f"frames {len(composite)} vs masks {len(masks)}")
    gw, gh = grid_cells_for(composite.width, composite.height, stride)

    fg_vals = []
    ring_vals = []
    for i in range(start, end):
        m = masks[i]
        if not m.any():
            continue
        ring = dilate(m, ring_width) & ~m
        lin = srgb_bytes_to_linear(composite.frames[i][:, :, :3])
        fg_vals.append(lin[m])
        if ring.any():
            ring_vals.append(lin[ring])

    identity = np.broadcast_to(
        np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0]]), (gh, gw, 3, 4)
    ).copy()
    if not fg_vals or not ring_vals:
        log.warning("harmonize block [%d, %d): empty foreground or ring, identity fallback", start, end)
        return ColorTransformGrid(stride=stride, params=identity)

    fg = np.concatenate(fg_vals)
    ring = np.concatenate(ring_vals)
    mu_f, sigma_f = fg.mean(axis=0), fg.std(axis=0)
    mu_b, sigma_b = ring.mean(axis=0), ring.std(axis=0)
    gains = sigma_b / np.maximum(sigma_f, STAT_EPSILON)
    biases = mu_b - gains * mu_f

    params = np.zeros((gh, gw, 3, 4))
    for c in range(3):
        params[:, :, c, c] = gains[c]
        params[:, :, c, 3] = biases[c]
    return ColorTransformGrid(stride=stride, params=params)
