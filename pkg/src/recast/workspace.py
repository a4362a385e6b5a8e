"""Frame storage, ingestion, and the on-disk workspace layout.

Canonical frame format is 8-bit sRGB PNG named ``frame_%06d.png``. Artifact
identity is a SHA-256 over raw pixel bytes (frames in index order, rows top
to bottom), so PNG recompression never changes an id. Layout:

    <root>/manifest.json
    <root>/seq/<name>/frame_%06d.png
    <root>/cache/<artifact id>/...
    <root>/logs/run-*.jsonl
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DecoderError, DimensionError, EmptyError, GapError
from .hashing import artifact_hash

__all__ = [
    "FrameSequence",
    "ReferenceCharacter",
    "Workspace",
    "frame_sequence",
    "load_frame",
    "save_frame",
    "load_reference",
    "decode_video",
    "artifact_hash",
    "FRAME_PATTERN",
    "DEFAULT_REFERENCE_SIZE",
    "DEFAULT_SCENE_SIZE",
]

FRAME_PATTERN = "frame_%06d.png"
_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")

# Default working resolutions (width, height); tests run at 64-128 px.
DEFAULT_REFERENCE_SIZE = (1024, 768)
DEFAULT_SCENE_SIZE = (1024, 2048)


def _validate_frames_array(frames: np.ndarray) -> np.ndarray:
    arr = np.asarray(frames)
    if arr.ndim != 4:
        raise DimensionError(f"frame stack must be (n, h, w, c), got shape {arr.shape}")
    n, h, w, c = arr.shape
    if n < 1:
        raise EmptyError("sequence must contain at least one frame")
    if h < 1 or w < 1:
        raise DimensionError(f"frames must be at least 1x1, got {w}x{h}")
    if c not in (3, 4):
        raise DimensionError(f"channels must be 3 (RGB) or 4 (RGBA), got {c}")
    if arr.dtype != np.uint8:
        raise DimensionError(f"samples must be uint8, got {arr.dtype}")
    return arr


@dataclass
class FrameSequence:
    """Ordered uniform-dimension frames plus playback metadata.

    The pixel array is frozen after construction; derive new sequences
    instead of mutating.
    """

    frames: np.ndarray  # (n, h, w, c) uint8
    fps: Fraction = Fraction(24)
    artifact_id: str = field(default="")

    def __post_init__(self):
        arr = _validate_frames_array(self.frames)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self.frames = arr
        self.fps = Fraction(self.fps)
        if not self.artifact_id:
            self.artifact_id = artifact_hash(arr.tobytes())

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def channels(self) -> int:
        return self.frames.shape[3]


def frame_sequence(frames: np.ndarray, fps: Fraction | int | str = Fraction(24)) -> FrameSequence:
    """Build a sequence from a stacked array, computing its artifact id."""
    return FrameSequence(frames=np.asarray(frames, dtype=np.uint8), fps=_parse_fps(fps))


def _parse_fps(fps) -> Fraction:
    if isinstance(fps, str):
        if "/" in fps:
            num, den = fps.split("/", 1)
            return Fraction(int(num), int(den))
        return Fraction(fps)
    if isinstance(fps, (list, tuple)):
        return Fraction(fps[0], fps[1])
    return Fraction(fps)


@dataclass
class ReferenceCharacter:
    """Replacement character: RGBA image whose alpha is the matte, plus optional anchors."""

    image: np.ndarray  # (h, w, 4) uint8
    anchors: dict[str, tuple[float, float]] | None = None

    def __post_init__(self):
        img = np.asarray(self.image)
        if img.ndim != 3 or img.shape[2] != 4:
            raise DimensionError(f"reference image must be RGBA, got shape {img.shape}")
        img = np.ascontiguousarray(img.astype(np.uint8, copy=False))
        img.flags.writeable = False
        self.image = img

    @property
    def artifact_id(self) -> str:
        return artifact_hash(self.image.tobytes())


def load_frame(path: Path | str) -> np.ndarray:
    """Load one PNG as an (h, w, 3|4) uint8 array."""
    with Image.open(path) as img:
        if img.mode in ("RGBA", "LA", "PA"):
            img = img.convert("RGBA")
        elif img.mode != "RGB":
            img = img.convert("RGB")
        return np.asarray(img)


def save_frame(path: Path | str, frame: np.ndarray) -> None:
    arr = np.asarray(frame, dtype=np.uint8)
    Image.fromarray(arr, mode="RGBA" if arr.shape[2] == 4 else "RGB").save(path, format="PNG")


def load_reference(path: Path | str, anchors: dict | None = None) -> ReferenceCharacter:
    """Load a reference character image; must carry an alpha matte."""
    with Image.open(path) as img:
        if img.mode != "RGBA":
            if "A" in img.mode or img.mode == "P":
                img = img.convert("RGBA")
            else:
                raise DimensionError(f"reference image {path} has no alpha channel")
        arr = np.asarray(img)
    parsed = None
    if anchors:
        parsed = {name: (float(x), float(y)) for name, (x, y) in anchors.items()}
    return ReferenceCharacter(image=arr, anchors=parsed)


def _scan_frame_dir(dir: Path) -> list[Path]:
    """Frame files in index order; raises on gaps or an empty directory."""
    entries = {}
    for p in dir.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            entries[int(m.group(1))] = p
    if not entries:
        raise EmptyError(f"no frame_%06d.png files in {dir}")
    indices = sorted(entries)
    expected = list(range(len(entries)))
    if indices != expected:
        missing = sorted(set(expected) - set(indices))
        raise GapError(f"frame index gap in {dir}: first missing index {missing[0] if missing else indices[0]}")
    return [entries[i] for i in indices]


def read_frame_dir(dir: Path | str, fps: Fraction | int | str = Fraction(24)) -> FrameSequence:
    """Load a frame directory into memory without touching any workspace."""
    dir = Path(dir)
    paths = _scan_frame_dir(dir)
    frames = []
    dims = None
    for p in paths:
        arr = load_frame(p)
        if dims is None:
            dims = arr.shape
        elif arr.shape != dims:
            raise DimensionError(f"{p.name} is {arr.shape[1]}x{arr.shape[0]}, expected {dims[1]}x{dims[0]}")
        frames.append(arr)
    return frame_sequence(np.stack(frames), fps=fps)


def decode_video(decoder_cmd_template: str, video_path: Path | str, out_dir: Path | str) -> Path:
    """Run the configured external decoder to explode a video into frames.

    The template must contain ``{in}`` and ``{out}`` placeholders; on success
    out_dir satisfies the ingest preconditions.
    """
    if "{in}" not in decoder_cmd_template or "{out}" not in decoder_cmd_template:
        raise ConfigError("decoder template must contain {in} and {out} placeholders")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    argv = [
        tok.replace("{in}", str(video_path)).replace("{out}", str(out_dir))
        for tok in shlex.split(decoder_cmd_template)
    ]
    proc = subprocess.run(argv, capture_output=True, text=True)
    if proc.returncode != 0:
        raise DecoderError(
            f"decoder exited {proc.returncode}: {' '.join(argv)}",
            exit_code=proc.returncode,
            diagnostics=(proc.stderr or proc.stdout or "")[-4000:],
        )
    return out_dir


class Workspace:
    """Directory-rooted store for sequences and cached stage outputs.

    Frames are immutable once written; the manifest is single-writer and
    guarded by an advisory lock file.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "seq").mkdir(exist_ok=True)
        (self.root / "cache").mkdir(exist_ok=True)
        (self.root / "logs").mkdir(exist_ok=True)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def read_manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {"created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(), "sequences": {}}
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def _write_manifest(self, manifest: dict) -> None:
        tmp = self.manifest_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest, sort_keys=True, indent=2), encoding="utf-8")
        os.replace(tmp, self.manifest_path)

    def lock(self, timeout: float = 30.0):
        return _AdvisoryLock(self.root / ".manifest.lock", timeout)

    def seq_dir(self, name: str) -> Path:
        return self.root / "seq" / name

    def cache_dir(self, artifact_id: str) -> Path:
        return self.root / "cache" / artifact_id

    def sequence_names(self) -> list[str]:
        return sorted(self.read_manifest()["sequences"])

    def sequence_info(self, name: str) -> dict:
        seqs = self.read_manifest()["sequences"]
        if name not in seqs:
            raise KeyError(f"sequence {name!r} not in workspace")
        return seqs[name]

    def ingest_frames(self, dir: Path | str, expected_fps: Fraction | int | str, name: str | None = None) -> FrameSequence:
        """Copy a frame directory into the workspace and register it.

        Source files are only read. Re-ingesting identical frames yields the
        identical artifact id.
        """
        dir = Path(dir)
        seq = read_frame_dir(dir, fps=expected_fps)
        name = name or dir.name
        self.write_sequence(name, seq)
        return seq

    def write_sequence(self, name: str, seq: FrameSequence) -> FrameSequence:
        """Write frames as canonical PNGs and record them in the manifest."""
        out = self.seq_dir(name)
        out.mkdir(parents=True, exist_ok=True)
        for i in range(len(seq)):
            save_frame(out / (FRAME_PATTERN % i), seq.frames[i])
        # drop stale higher-numbered frames from a previous, longer write
        for p in _extra_frames(out, len(seq)):
            p.unlink()
        with self.lock():
            manifest = self.read_manifest()
            manifest["sequences"][name] = {
                "frames": len(seq),
                "width": seq.width,
                "height": seq.height,
                "channels": seq.channels,
                "fps": f"{seq.fps.numerator}/{seq.fps.denominator}",
                "id": seq.artifact_id,
            }
            self._write_manifest(manifest)
        return seq

    def read_sequence(self, name: str) -> FrameSequence:
        info = self.sequence_info(name)
        seq = read_frame_dir(self.seq_dir(name), fps=_parse_fps(info["fps"]))
        if len(seq) != info["frames"] or (seq.width, seq.height) != (info["width"], info["height"]):
            raise DimensionError(f"sequence {name!r} on disk does not match its manifest entry")
        return seq

    def write_masks(self, masks) -> str:
        """Store a mask sequence content-addressed; returns its artifact id."""
        from .masks import sequence_to_json

        out = self.cache_dir(masks.artifact_id)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "masks.json"
        if not path.exists():
            path.write_text(sequence_to_json(masks), encoding="utf-8")
        return masks.artifact_id

    def read_masks(self, artifact_id: str):
        from .masks import sequence_from_json

        path = self.cache_dir(artifact_id) / "masks.json"
        if not path.exists():
            raise KeyError(f"no mask sequence {artifact_id!r} in workspace")
        return sequence_from_json(path.read_text(encoding="utf-8"))


def _extra_frames(dir: Path, count: int) -> list[Path]:
    extras = []
    for p in dir.iterdir():
        m = _FRAME_RE.match(p.name)
        if m and int(m.group(1)) >= count:
            extras.append(p)
    return extras


class _AdvisoryLock:
    """Lock-file guard for manifest writes; cooperative, crash-tolerant via timeout."""

    def __init__(self, path: Path, timeout: float):
        self.path = path
        self.timeout = timeout

    def __enter__(self):
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.close(fd)
                return self
            except FileExistsError:
                if time.monotonic() > deadline:
                    raise TimeoutError(f"could not acquire {self.path} within {self.timeout}s")
                time.sleep(0.01)

    def __exit__(self, *exc):
        try:
            os.unlink(self.path)
        except FileNotFoundError:
            pass
        return False
