import itertools

import numpy as np

from recast.morphology import dilate, disk_offsets, edge_band, erode, scaled_radius


def oracle_dilate(mask: np.ndarray, r: int) -> np.ndarray:
    """Brute-force double loop over pixels; independent of the implementation."""
    h, w = mask.shape
    offs = disk_offsets_list(r)
    rows = mask.tolist()
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            for dx, dy in offs:
                xx, yy = x + dx, y + dy
                if 0 <= xx < w and 0 <= yy < h and rows[yy][xx]:
                    out[y, x] = True
                    break
    return out


def oracle_erode(mask: np.ndarray, r: int) -> np.ndarray:
    h, w = mask.shape
    offs = disk_offsets_list(r)
    rows = mask.tolist()
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            ok = True
            for dx, dy in offs:
                xx, yy = x + dx, y + dy
                if not (0 <= xx < w and 0 <= yy < h) or not rows[yy][xx]:
                    ok = False
                    break
            out[y, x] = ok
    return out


def disk_offsets_list(r: int) -> list[tuple[int, int]]:
    return [
        (dx, dy)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy <= r * r
    ]


def all_masks_3x3():
    for bits in itertools.product([0, 1], repeat=9):
        yield np.array(bits, dtype=bool).reshape(3, 3)


class TestDiskElement:
    def test_contains_origin_and_symmetric(self):
        for r in range(0, 5):
            offs = set(disk_offsets(r))
            assert (0, 0) in offs
            assert offs == {(-dx, -dy) for dx, dy in offs}

    def test_radius_one_is_cross(self):
        assert set(disk_offsets(1)) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


class TestDilate:
    def test_radius_zero_identity(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1, 2] = True
        assert np.array_equal(dilate(m, 0), m)

    def test_single_center_bit_r1(self):
        m = np.zeros((5, 5), dtype=bool)
        m[2, 2] = True
        expected = oracle_dilate(m, 1)
        got = dilate(m, 1)
        assert got.sum() == 5
        assert np.array_equal(got, expected)

    def test_all_ones_fixed(self):
        m = np.ones((6, 4), dtype=bool)
        for r in (1, 2, 3):
            assert dilate(m, r).all()

    def test_extensive(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            m = rng.random((10, 10)) < 0.3
            for r in (1, 2):
                assert (m & ~dilate(m, r)).sum() == 0


class TestErode:
    def test_radius_zero_identity(self):
        m = np.zeros((4, 4), dtype=bool)
        m[3, 0] = True
        assert np.array_equal(erode(m, 0), m)

    def test_single_bit_erodes_away(self):
        m = np.zeros((5, 5), dtype=bool)
        m[2, 2] = True
        assert not erode(m, 1).any()

    def test_all_ones_shrinks_at_border(self):
        m = np.ones((5, 5), dtype=bool)
        got = erode(m, 1)
        expected = oracle_erode(m, 1)
        assert np.array_equal(got, expected)
        assert got.sum() == 9  # 3x3 interior
        assert got[1:4, 1:4].all()

    def test_anti_extensive(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            m = rng.random((10, 10)) < 0.7
            for r in (1, 2):
                assert (erode(m, r) & ~m).sum() == 0


class TestOracleEquivalence:
    def test_exhaustive_3x3(self):
        for m in all_masks_3x3():
            for r in (0, 1, 2):
                assert np.array_equal(dilate(m, r), oracle_dilate(m, r))
                assert np.array_equal(erode(m, r), oracle_erode(m, r))

    def test_random_larger(self):
        rng = np.random.default_rng(9)
        for i in range(60):
            m = rng.random((16, 16)) < rng.random()
            r = (1, 2, 3)[i % 3]
            assert np.array_equal(dilate(m, r), oracle_dilate(m, r))
            assert np.array_equal(erode(m, r), oracle_erode(m, r))


class TestDuality:
    def test_interior_duality(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            m = rng.random((12, 12)) < 0.5
            for r in (1, 2):
                lhs = erode(m, r)
                rhs = ~dilate(~m, r)
                assert np.array_equal(lhs[r:-r, r:-r], rhs[r:-r, r:-r])

    def test_monotone(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            a = rng.random((10, 10)) < 0.3
            b = a | (rng.random((10, 10)) < 0.2)
            for r in (1, 2):
                assert not (dilate(a, r) & ~dilate(b, r)).any()
                assert not (erode(a, r) & ~erode(b, r)).any()


class TestEdgeBand:
    def test_empty_mask_empty_band(self):
        m = np.zeros((8, 8), dtype=bool)
        assert not edge_band(m, 2, 1).any()

    def test_square_band_matches_oracle(self):
        m = np.zeros((8, 8), dtype=bool)
        m[2:6, 2:6] = True
        expected = oracle_dilate(m, 1) & ~oracle_erode(m, 1)
        assert np.array_equal(edge_band(m, 1, 1), expected)
        # 4x4 square: dilation adds the rounded 6x6 ring, erosion keeps a 2x2 core
        assert erode(m, 1).sum() == 4

    def test_band_monotone_in_radius(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            m = rng.random((12, 12)) < 0.4
            for r in (1, 2):
                inner = edge_band(m, r - 1, r - 1)
                outer = edge_band(m, r, r)
                assert not (inner & ~outer).any()

    def test_band_positive_when_mask_proper(self):
        rng = np.random.default_rng(29)
        hits = 0
        for _ in range(200):
            m = rng.random((10, 10)) < 0.5
            if not m.any() or m.all():
                continue
            hits += 1
            assert edge_band(m, 1, 1).any()
        assert hits > 100

    def test_band_covers_contour_crossing_pixels(self):
        # any pixel whose 4-neighborhood holds both set and unset bits must
        # fall inside band(m, 1, 1)
        rng = np.random.default_rng(31)
        for _ in range(100):
            m = rng.random((12, 12)) < 0.5
            band = edge_band(m, 1, 1)
            h, w = m.shape
            for y in range(h):
                for x in range(w):
                    neighborhood = [m[y, x]]
                    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        if 0 <= x + dx < w and 0 <= y + dy < h:
                            neighborhood.append(m[y + dy, x + dx])
                    if any(neighborhood) and not all(neighborhood):
                        assert band[y, x], f"contour pixel ({x},{y}) outside band"


def test_scaled_radius_round_half_up():
    # 6 px at 1024 maps to 0.75 px at 128: rounds up to 1
    assert scaled_radius(6, 128, 1024, minimum=1) == 1
    # 2 px at 1024 maps to 0.25 px at 128: rounds to 0
    assert scaled_radius(2, 128, 1024, minimum=0) == 0
    assert scaled_radius(6, 1024, 1024, minimum=1) == 6
    assert scaled_radius(4, 512, 1024, minimum=0) == 2
    assert scaled_radius(1, 2048, 1024, minimum=1) == 2
