import numpy as np
import pytest

from recast.edge_refine import EdgeBandConfig, edge_band_sequence, refine_edges
from recast.errors import ConfigError, ContractViolationError, StageError
from recast.masks import MaskSequence
from recast.morphology import dilate, edge_band, erode
from recast.workers.stubs import stub_inpaint
from recast.workspace import frame_sequence

from conftest import moving_square_clip


class TestConfig:
    def test_defaults(self):
        cfg = EdgeBandConfig()
        assert (cfg.r_out, cfg.r_in, cfg.scale_reference_width) == (6, 2, 1024)

    def test_invalid_r_out(self):
        with pytest.raises(ConfigError):
            EdgeBandConfig(r_out=0)

    def test_scaling_at_desk_resolution(self):
        assert EdgeBandConfig().radii_for(128) == (1, 0)
        assert EdgeBandConfig().radii_for(1024) == (6, 2)
        assert EdgeBandConfig().radii_for(512) == (3, 1)


class TestBandSequence:
    def test_empty_masks_empty_bands(self):
        masks = MaskSequence(masks=np.zeros((3, 16, 16), bool))
        bands = edge_band_sequence(masks, EdgeBandConfig())
        assert not bands.masks.any()

    def test_matches_morphology_oracle(self):
        _, truth = moving_square_clip(n_frames=3, width=64, height=64, square=10, origin=(8, 20))
        cfg = EdgeBandConfig(r_out=6, r_in=2, scale_reference_width=64)
        bands = edge_band_sequence(truth, cfg)
        for i in range(3):
            assert np.array_equal(bands[i], edge_band(truth[i], 6, 2))
            assert np.array_equal(bands[i], dilate(truth[i], 6) & ~erode(truth[i], 2))

    def test_band_nonempty_for_proper_masks(self):
        rng = np.random.default_rng(61)
        stack = []
        for _ in range(20):
            m = rng.random((24, 24)) < 0.4
            if not m.any() or m.all():
                continue
            stack.append(m)
        masks = MaskSequence(masks=np.stack(stack))
        bands = edge_band_sequence(masks, EdgeBandConfig(r_out=1, r_in=1, scale_reference_width=24))
        for i in range(len(bands)):
            assert bands[i].any()

    def test_min_radius_one_for_outward(self):
        # even at tiny widths r_out never collapses to zero
        _, truth = moving_square_clip(n_frames=1, width=32, height=32, square=8, origin=(10, 10))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=6, r_in=2, scale_reference_width=4096))
        assert bands[0].any()


def stub_worker(iters=30):
    def worker(frames, bands):
        return stub_inpaint(frames, bands, iters=iters)

    return worker


class TestRefineEdges:
    def test_all_empty_bands_short_circuit(self):
        clip, _ = moving_square_clip(n_frames=2, width=32, height=32, square=8, origin=(4, 4))
        bands = MaskSequence(masks=np.zeros((2, 32, 32), bool))
        calls = []

        def exploding(frames, masks):
            calls.append(1)
            raise AssertionError("must not be invoked")

        out = refine_edges(clip, bands, exploding)
        assert out.artifact_id == clip.artifact_id
        assert calls == []

    def test_constant_frame_unchanged(self):
        frames = frame_sequence(np.full((2, 16, 16, 3), 99, dtype=np.uint8))
        band = np.zeros((2, 16, 16), dtype=bool)
        band[:, 6:10, 6:10] = True
        out = refine_edges(frames, MaskSequence(masks=band), stub_worker())
        assert out.artifact_id == frames.artifact_id

    def test_out_of_band_pixels_byte_identical(self):
        clip, truth = moving_square_clip(n_frames=3, width=48, height=48, square=10, origin=(10, 18))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=2, r_in=1, scale_reference_width=48))
        out = refine_edges(clip, bands, stub_worker())
        outside = ~bands.masks
        assert np.array_equal(out.frames[outside], clip.frames[outside])
        # and the band actually changed something on this textured fixture
        assert not np.array_equal(out.frames, clip.frames)

    def test_determinism(self):
        clip, truth = moving_square_clip(n_frames=2, width=32, height=32, square=8, origin=(8, 12))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=2, r_in=1, scale_reference_width=32))
        a = refine_edges(clip, bands, stub_worker())
        b = refine_edges(clip, bands, stub_worker())
        assert a.artifact_id == b.artifact_id

    def test_out_of_band_write_rejected(self):
        clip, truth = moving_square_clip(n_frames=2, width=32, height=32, square=8, origin=(8, 12))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=1, r_in=1, scale_reference_width=32))

        def vandal(frames, masks):
            out = frames.frames.copy()
            out[0, 0, 0] = (1, 2, 3)  # far away from any band
            return frame_sequence(out)

        with pytest.raises(ContractViolationError):
            refine_edges(clip, bands, vandal)

    def test_wrong_length_rejected(self):
        clip, truth = moving_square_clip(n_frames=3, width=32, height=32, square=8, origin=(8, 12))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=1, r_in=1, scale_reference_width=32))

        def truncating(frames, masks):
            return frame_sequence(frames.frames[:2].copy())

        with pytest.raises(ContractViolationError):
            refine_edges(clip, bands, truncating)

    def test_worker_crash_becomes_stage_error(self):
        clip, truth = moving_square_clip(n_frames=1, width=32, height=32, square=8, origin=(8, 12))
        bands = edge_band_sequence(truth, EdgeBandConfig(r_out=1, r_in=1, scale_reference_width=32))

        def broken(frames, masks):
            raise RuntimeError("gpu fell off")

        with pytest.raises(StageError):
            refine_edges(clip, bands, broken)
