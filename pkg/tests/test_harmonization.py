import numpy as np
import pytest

from recast.compositing import srgb_bytes_to_linear
from recast.errors import ConfigError, ParamError, StageError
from recast.harmonization import (
    ColorTransformGrid,
    apply_field_linear,
    apply_pct,
    blend_params,
    grid_cells_for,
    harmonize_sequence,
    identity_grid,
    partition_blocks,
    upsample_grid,
)
from recast.masks import MaskSequence
from recast.workspace import frame_sequence


def gain_grid(width, height, gain, stride=8):
    g = identity_grid(width, height, stride)
    params = g.params.copy()
    params[:, :, 0, 0] = gain
    params[:, :, 1, 1] = gain
    params[:, :, 2, 2] = gain
    return ColorTransformGrid(stride=stride, params=params)


class TestPartition:
    def test_stated_recurrence(self):
        sched = partition_blocks(10, block_len=4, overlap=2)
        assert sched.entries == ((0, 4), (2, 6), (4, 8), (6, 10))

    def test_single_short_block(self):
        assert partition_blocks(3, block_len=16, overlap=4).entries == ((0, 3),)

    def test_overlap_equal_block_rejected(self):
        with pytest.raises(ConfigError):
            partition_blocks(10, block_len=4, overlap=4)

    def test_full_cover_and_exact_overlap(self):
        for n in (1, 5, 16, 33, 100):
            sched = partition_blocks(n, block_len=16, overlap=4)
            covered = np.zeros(n, dtype=bool)
            for s, e in sched.entries:
                covered[s:e] = True
            assert covered.all()
            for (s0, e0), (s1, e1) in zip(sched.entries, sched.entries[1:]):
                assert e0 - s1 == 4 or e0 == n
                assert not (s1 >= s0 and e1 <= e0)  # never a subset


class TestUpsample:
    def test_uniform_grid_everywhere_exact(self):
        g = gain_grid(16, 16, 1.75)
        field = upsample_grid(g, (16, 16))
        assert np.allclose(field, g.params[0, 0], atol=0)

    def test_identity_grid_identity_field(self):
        field = upsample_grid(identity_grid(20, 12), (20, 12))
        expected = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]], dtype=np.float64)
        assert np.array_equal(field, np.broadcast_to(expected, field.shape))

    def test_midway_pixel_blends_half(self):
        # cells centered at x=4 and x=12 (stride 8); pixel 8 sits midway
        params = np.zeros((1, 2, 3, 4))
        for c in range(3):
            params[0, 0, c, c] = 1.0
            params[0, 1, c, c] = 3.0
        g = ColorTransformGrid(stride=8, params=params)
        field = upsample_grid(g, (16, 8))
        assert field[0, 4, 0, 0] == pytest.approx(1.0)
        assert field[0, 12, 0, 0] == pytest.approx(3.0)
        assert field[0, 8, 0, 0] == pytest.approx(2.0)

    def test_grid_too_small_rejected(self):
        with pytest.raises(ParamError):
            upsample_grid(identity_grid(16, 16), (64, 64))


class TestApply:
    def test_identity_field_byte_identical(self):
        rng = np.random.default_rng(31)
        frame = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        field = upsample_grid(identity_grid(16, 16), (16, 16))
        mask = np.ones((16, 16), dtype=bool)
        assert np.array_equal(apply_pct(frame, field, mask), frame)

    def test_gain_two_on_quarter(self):
        field = upsample_grid(gain_grid(8, 8, 2.0), (8, 8))
        lin = np.full((8, 8, 3), 0.25)
        out = apply_field_linear(lin, field)
        assert np.allclose(out, 0.5)

    def test_empty_mask_passthrough(self):
        rng = np.random.default_rng(37)
        frame = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        field = upsample_grid(gain_grid(8, 8, 3.0), (8, 8))
        out = apply_pct(frame, field, np.zeros((8, 8), dtype=bool))
        assert np.array_equal(out, frame)

    def test_outside_mask_passthrough(self):
        rng = np.random.default_rng(41)
        frame = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        field = upsample_grid(gain_grid(8, 8, 0.5), (8, 8))
        mask = np.zeros((8, 8), dtype=bool)
        mask[2:5, 3:6] = True
        out = apply_pct(frame, field, mask)
        assert np.array_equal(out[~mask], frame[~mask])
        assert not np.array_equal(out[mask], frame[mask])

    def test_non_finite_rejected(self):
        field = upsample_grid(identity_grid(4, 4), (4, 4)).copy()
        field[0, 0, 0, 0] = np.nan
        with pytest.raises(ParamError):
            apply_pct(np.zeros((4, 4, 3), np.uint8), field, np.ones((4, 4), bool))

    def test_affine_composition_matches_sequential(self):
        rng = np.random.default_rng(43)
        h = w = 16
        lin = rng.random((h, w, 3))
        f1 = rng.uniform(-0.2, 0.6, size=(h, w, 3, 4))
        f2 = rng.uniform(-0.2, 0.6, size=(h, w, 3, 4))
        seq = apply_field_linear(apply_field_linear(lin, f1), f2)
        composed = np.empty_like(f1)
        composed[..., :3] = np.einsum("hwij,hwjk->hwik", f2[..., :3], f1[..., :3])
        composed[..., 3] = np.einsum("hwij,hwj->hwi", f2[..., :3], f1[..., 3]) + f2[..., 3]
        assert np.allclose(apply_field_linear(lin, composed), seq, atol=1e-5)


class TestBlend:
    def test_endpoints_exact(self):
        a = np.full((3, 4), 1.0)
        b = np.full((3, 4), 3.0)
        assert np.array_equal(blend_params(a, b, 0.0), a)
        assert np.array_equal(blend_params(a, b, 1.0), b)

    def test_halfway(self):
        a = np.full((3, 4), 1.0)
        b = np.full((3, 4), 3.0)
        assert np.array_equal(blend_params(a, b, 0.5), np.full((3, 4), 2.0))

    def test_out_of_range_weight(self):
        with pytest.raises(ValueError):
            blend_params(np.zeros((3, 4)), np.zeros((3, 4)), 1.5)


def constant_gain_worker(gains_by_block, width, height, stride=8):
    def worker(k, start, end):
        return gain_grid(width, height, gains_by_block[k], stride)

    return worker


class TestHarmonizeSequence:
    def _clip(self, n=10, w=16, h=16, value=120):
        frames = np.full((n, h, w, 3), value, dtype=np.uint8)
        masks = np.ones((n, h, w), dtype=bool)
        return frame_sequence(frames), MaskSequence(masks=masks)

    def test_identity_worker_byte_identity(self):
        rng = np.random.default_rng(47)
        frames = frame_sequence(rng.integers(0, 256, size=(10, 16, 16, 3), dtype=np.uint8))
        masks = MaskSequence(masks=np.ones((10, 16, 16), dtype=bool))
        sched = partition_blocks(10, block_len=4, overlap=2)
        out = harmonize_sequence(frames, masks, lambda k, s, e: identity_grid(16, 16), sched)
        assert out.artifact_id == frames.artifact_id

    def test_single_block_equals_framewise_apply(self):
        frames, masks = self._clip(n=3)
        sched = partition_blocks(3, block_len=16, overlap=4)
        grid = gain_grid(16, 16, 1.5)
        out = harmonize_sequence(frames, masks, lambda k, s, e: grid, sched)
        field = upsample_grid(grid, (16, 16))
        for i in range(3):
            assert np.array_equal(out.frames[i], apply_pct(frames.frames[i], field, masks[i]))

    def test_overlap_gains_interpolate(self):
        # blocks (0,5) and (2,7) overlap on frames {2,3,4}: t = 1/4, 2/4, 3/4
        captured = {}

        def spy_apply(k, s, e):
            captured[k] = (s, e)
            return gain_grid(16, 16, [1.0, 3.0][k])

        frames, masks = self._clip(n=7, value=60)
        sched = partition_blocks(7, block_len=5, overlap=3)
        assert sched.entries == ((0, 5), (2, 7))
        out = harmonize_sequence(frames, masks, spy_apply, sched)
        lin_in = srgb_bytes_to_linear(frames.frames[0])[0, 0, 0]
        expected_gains = [1.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]
        got_lin = srgb_bytes_to_linear(out.frames[:, 0, 0, 0])
        for j, gain in enumerate(expected_gains):
            # quantization tolerance: one output code step
            assert abs(got_lin[j] - gain * lin_in) < 0.004, f"frame {j}"

    def test_temporal_continuity_bound(self):
        frames, masks = self._clip(n=12)
        sched = partition_blocks(12, block_len=6, overlap=3)
        gains = {0: 1.0, 1: 3.0, 2: 1.0}
        grids = lambda k, s, e: gain_grid(16, 16, gains[k])

        # reconstruct blended per-frame parameters through a probe worker
        tracked = []

        def probing(k, s, e):
            g = grids(k, s, e)
            tracked.append((k, s, e))
            return g

        harmonize_sequence(frames, masks, probing, sched)
        # bound check on the parameter sequence itself
        w = 3
        max_jump = 2.0 / (w + 1)
        params = _blended_params(sched, gains, 16, 16)
        diffs = np.abs(np.diff(params, axis=0)).max()
        assert diffs <= max_jump + 1e-9

    def test_worker_failure_carries_block(self):
        frames, masks = self._clip(n=6)
        sched = partition_blocks(6, block_len=4, overlap=2)

        def broken(k, s, e):
            if k == 1:
                raise RuntimeError("boom")
            return identity_grid(16, 16)

        with pytest.raises(StageError) as err:
            harmonize_sequence(frames, masks, broken, sched)
        assert err.value.block_index == 1

    def test_per_frame_granularity(self):
        frames, masks = self._clip(n=4)
        sched = partition_blocks(4, block_len=4, overlap=1)

        def per_frame(k, s, e):
            return [gain_grid(16, 16, 1.0 + 0.1 * j) for j in range(s, e)]

        out = harmonize_sequence(frames, masks, per_frame, sched)
        assert len(out) == 4


def _blended_params(sched, gains, width, height):
    """Reference parameter assembly for the continuity bound."""
    n = sched.entries[-1][1]
    gw, gh = grid_cells_for(width, height, 8)
    params = np.zeros((n,))
    prev_end = None
    for k, (s, e) in enumerate(sched.entries):
        g = gains[k]
        if prev_end is None:
            params[s:e] = g
        else:
            for j in range(s, e):
                if j < prev_end:
                    t = (j - s + 1) / (prev_end - s + 1)
                    params[j] = (1 - t) * params[j] + t * g
                else:
                    params[j] = g
        prev_end = e
    return params
