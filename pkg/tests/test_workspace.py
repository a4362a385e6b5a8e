import hashlib
import io
import json
import sys
from fractions import Fraction

import numpy as np
import pytest

from recast.errors import ConfigError, DecoderError, DimensionError, EmptyError, GapError
from recast.workspace import (
    FRAME_PATTERN,
    artifact_hash,
    decode_video,
    frame_sequence,
    load_frame,
    load_reference,
    read_frame_dir,
    save_frame,
)


def write_frames(dir, arrays, indices=None):
    dir.mkdir(parents=True, exist_ok=True)
    indices = indices if indices is not None else range(len(arrays))
    for idx, arr in zip(indices, arrays):
        save_frame(dir / (FRAME_PATTERN % idx), arr)


def rand_frames(n, h=16, w=16, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return list(rng.integers(0, 256, size=(n, h, w, c), dtype=np.uint8))


class TestArtifactHash:
    def test_empty_stream_is_published_sha256_vector(self):
        assert artifact_hash(b"") == hashlib.sha256(b"").hexdigest()
        assert artifact_hash(b"") == (
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        )

    def test_same_payload_same_digest(self):
        rng = np.random.default_rng(42)
        payload = rng.integers(0, 256, size=1 << 20, dtype=np.uint8).tobytes()
        assert artifact_hash(payload) == artifact_hash(payload)

    def test_one_byte_difference(self):
        a = bytes(1000)
        b = bytes(999) + b"\x01"
        assert artifact_hash(a) != artifact_hash(b)

    def test_streaming_matches_buffered(self):
        payload = b"x" * (3 << 20)
        assert artifact_hash(io.BytesIO(payload)) == artifact_hash(payload)


class TestIngest:
    def test_three_frames(self, tmp_path, workspace):
        frames = rand_frames(3, 64, 64)
        write_frames(tmp_path / "clip", frames)
        seq = workspace.ingest_frames(tmp_path / "clip", expected_fps=24, name="scene")
        assert len(seq) == 3
        assert (seq.width, seq.height) == (64, 64)
        assert workspace.sequence_info("scene")["frames"] == 3

    def test_gap_detection(self, tmp_path, workspace):
        frames = rand_frames(2)
        write_frames(tmp_path / "clip", frames, indices=[0, 2])
        with pytest.raises(GapError):
            workspace.ingest_frames(tmp_path / "clip", expected_fps=24)

    def test_empty_dir(self, tmp_path, workspace):
        (tmp_path / "clip").mkdir()
        with pytest.raises(EmptyError):
            workspace.ingest_frames(tmp_path / "clip", expected_fps=24)

    def test_dimension_mismatch(self, tmp_path, workspace):
        write_frames(tmp_path / "clip", [rand_frames(1, 8, 8)[0], rand_frames(1, 8, 9)[0]])
        with pytest.raises(DimensionError):
            workspace.ingest_frames(tmp_path / "clip", expected_fps=24)

    def test_hash_determinism(self, tmp_path, workspace):
        frames = rand_frames(3, seed=5)
        write_frames(tmp_path / "clip", frames)
        a = workspace.ingest_frames(tmp_path / "clip", expected_fps=24, name="a")
        b = workspace.ingest_frames(tmp_path / "clip", expected_fps=24, name="b")
        assert a.artifact_id == b.artifact_id

    def test_ingest_does_not_mutate_source(self, tmp_path, workspace):
        frames = rand_frames(2, seed=9)
        write_frames(tmp_path / "clip", frames)
        before = [(p.name, p.read_bytes()) for p in sorted((tmp_path / "clip").iterdir())]
        workspace.ingest_frames(tmp_path / "clip", expected_fps=24, name="scene")
        after = [(p.name, p.read_bytes()) for p in sorted((tmp_path / "clip").iterdir())]
        assert before == after

    def test_id_is_pixels_not_png_bytes(self, tmp_path, workspace):
        frames = rand_frames(2, seed=11)
        write_frames(tmp_path / "clip", frames)
        seq = workspace.ingest_frames(tmp_path / "clip", expected_fps=24, name="scene")
        raw = np.stack(frames).tobytes()
        assert seq.artifact_id == artifact_hash(raw)


class TestRoundTrip:
    def test_write_then_read_identity(self, workspace):
        rng = np.random.default_rng(21)
        frames = rng.integers(0, 256, size=(4, 12, 10, 3), dtype=np.uint8)
        seq = frame_sequence(frames, fps=Fraction(30, 1))
        workspace.write_sequence("clip", seq)
        back = workspace.read_sequence("clip")
        assert np.array_equal(back.frames, seq.frames)
        assert back.artifact_id == seq.artifact_id
        assert back.fps == Fraction(30, 1)

    def test_rgba_roundtrip(self, workspace):
        rng = np.random.default_rng(22)
        frames = rng.integers(0, 256, size=(2, 6, 6, 4), dtype=np.uint8)
        seq = frame_sequence(frames)
        workspace.write_sequence("fg", seq)
        back = workspace.read_sequence("fg")
        assert np.array_equal(back.frames, seq.frames)

    def test_rewrite_shorter_drops_stale_frames(self, workspace):
        seq5 = frame_sequence(np.zeros((5, 4, 4, 3), dtype=np.uint8))
        seq2 = frame_sequence(np.ones((2, 4, 4, 3), dtype=np.uint8))
        workspace.write_sequence("clip", seq5)
        workspace.write_sequence("clip", seq2)
        back = workspace.read_sequence("clip")
        assert len(back) == 2


class TestManifest:
    def test_stable_key_order(self, workspace):
        workspace.write_sequence("b", frame_sequence(np.zeros((1, 4, 4, 3), dtype=np.uint8)))
        workspace.write_sequence("a", frame_sequence(np.ones((1, 4, 4, 3), dtype=np.uint8)))
        text = workspace.manifest_path.read_text(encoding="utf-8")
        doc = json.loads(text)
        assert list(doc["sequences"]) == sorted(doc["sequences"])

    def test_frames_are_write_protected(self, workspace):
        seq = workspace.write_sequence("clip", frame_sequence(np.zeros((1, 4, 4, 3), dtype=np.uint8)))
        with pytest.raises(ValueError):
            seq.frames[0, 0, 0, 0] = 1


class TestDecodeVideo:
    def fake_decoder(self, tmp_path, exit_code=0, frames=2):
        script = tmp_path / "fake_decoder.py"
        script.write_text(
            "import sys\n"
            "from pathlib import Path\n"
            "import numpy as np\n"
            "from recast.workspace import save_frame\n"
            f"out = Path(sys.argv[2])\n"
            f"for i in range({frames}):\n"
            "    save_frame(out / ('frame_%06d.png' % i), np.full((8, 8, 3), i, dtype=np.uint8))\n"
            f"sys.exit({exit_code})\n",
            encoding="utf-8",
        )
        return f"{sys.executable} {script} {{in}} {{out}}"

    def test_missing_placeholder(self, tmp_path):
        with pytest.raises(ConfigError):
            decode_video("ffmpeg -i {in} frames/", "in.mp4", tmp_path / "out")

    def test_nonzero_exit(self, tmp_path):
        template = self.fake_decoder(tmp_path, exit_code=1)
        with pytest.raises(DecoderError) as err:
            decode_video(template, tmp_path / "in.mp4", tmp_path / "out")
        assert err.value.exit_code == 1

    def test_fake_decoder_frames_ingest(self, tmp_path, workspace):
        template = self.fake_decoder(tmp_path, frames=2)
        out = decode_video(template, tmp_path / "in.mp4", tmp_path / "out")
        seq = workspace.ingest_frames(out, expected_fps=24, name="scene")
        assert len(seq) == 2


class TestReference:
    def test_requires_alpha(self, tmp_path):
        save_frame(tmp_path / "ref.png", np.zeros((8, 8, 3), dtype=np.uint8))
        with pytest.raises(DimensionError):
            load_reference(tmp_path / "ref.png")

    def test_loads_rgba_with_anchors(self, tmp_path):
        img = np.zeros((8, 8, 4), dtype=np.uint8)
        img[2:6, 2:6] = (10, 20, 30, 255)
        save_frame(tmp_path / "ref.png", img)
        ref = load_reference(tmp_path / "ref.png", anchors={"left_hip": (3, 4)})
        assert np.array_equal(ref.image, img)
        assert ref.anchors == {"left_hip": (3.0, 4.0)}


def test_read_frame_dir_matches_saved(tmp_path):
    frames = rand_frames(3, seed=33)
    write_frames(tmp_path / "d", frames)
    seq = read_frame_dir(tmp_path / "d")
    assert np.array_equal(seq.frames, np.stack(frames))


def test_load_frame_converts_palette(tmp_path):
    from PIL import Image

    img = Image.new("P", (4, 4))
    img.putpixel((0, 0), 1)
    img.save(tmp_path / "p.png")
    arr = load_frame(tmp_path / "p.png")
    assert arr.shape[2] in (3, 4)
