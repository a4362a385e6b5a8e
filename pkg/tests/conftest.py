"""Shared fixtures: synthetic clips with known ground truth."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from recast.masks import MaskSequence
from recast.workspace import FrameSequence, ReferenceCharacter, Workspace, frame_sequence


def textured_background(width: int = 128, height: int = 128, seed: int = 7) -> np.ndarray:
    """Green-dominant texture with no pixel anywhere near pure red."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    base = np.empty((height, width, 3), dtype=np.float64)
    base[:, :, 0] = 70 + 30 * np.sin(xx / 9.0)
    base[:, :, 1] = 150 + 40 * np.cos(yy / 7.0)
    base[:, :, 2] = 110 + 25 * np.sin((xx + yy) / 11.0)
    noise = rng.integers(-12, 13, size=(height, width, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def moving_square_clip(
    n_frames: int = 16,
    width: int = 128,
    height: int = 128,
    square: int = 24,
    origin: tuple[int, int] = (20, 52),
    color: tuple[int, int, int] = (255, 0, 0),
    seed: int = 7,
) -> tuple[FrameSequence, MaskSequence]:
    """Clip of a solid square sliding 1 px/frame, with ground-truth masks."""
    bg = textured_background(width, height, seed)
    frames = np.empty((n_frames, height, width, 3), dtype=np.uint8)
    masks = np.zeros((n_frames, height, width), dtype=bool)
    x0, y0 = origin
    for t in range(n_frames):
        frames[t] = bg
        x = x0 + t
        frames[t, y0 : y0 + square, x : x + square] = color
        masks[t, y0 : y0 + square, x : x + square] = True
    return frame_sequence(frames), MaskSequence(masks=masks)


def blue_reference(canvas: int = 32, diameter: int = 16) -> ReferenceCharacter:
    """RGBA reference character: centered blue disk matte, lightly textured.

    A disk never covers its own bounding box, so the inserted character is
    strictly smaller than a boxy original it replaces.
    """
    img = np.zeros((canvas, canvas, 4), dtype=np.uint8)
    yy, xx = np.mgrid[0:canvas, 0:canvas]
    c = (canvas - 1) / 2.0
    r = diameter / 2.0
    disk = (xx - c) ** 2 + (yy - c) ** 2 <= r * r
    img[:, :, 0] = np.where(disk, 30 + (xx * 3) % 17, 0)
    img[:, :, 1] = np.where(disk, 60 + (yy * 5) % 23, 0)
    img[:, :, 2] = np.where(disk, 200 + (xx + yy) % 11, 0)
    img[:, :, 3] = np.where(disk, 255, 0)
    return ReferenceCharacter(image=img)


@pytest.fixture
def workspace(tmp_path) -> Workspace:
    return Workspace(tmp_path / "ws")


@pytest.fixture
def fixture_clip() -> tuple[FrameSequence, MaskSequence]:
    return moving_square_clip()
