import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from ctxrestore.masking import (
    combine_masks,
    composite,
    corrupt,
    load_mask,
    make_outpaint_mask,
    make_random_mask,
    zero_fraction,
)
from oracles import disc_pixel_count


class TestOutpaintMask:
    def test_twenty_percent_of_200_columns(self):
        mask = make_outpaint_mask(64, 200, 0.2)
        zero_cols = np.where(mask[0] == 0)[0]
        assert zero_cols.tolist() == list(range(0, 20)) + list(range(180, 200))
        assert np.array_equal(mask, np.tile(mask[0], (64, 1)))

    def test_degenerate_fraction_errors(self):
        with pytest.raises(ValueError, match="degenerate outpaint"):
            make_outpaint_mask(64, 64, 0.01)

    def test_small_image_exact_fraction(self):
        mask = make_outpaint_mask(8, 10, 0.2)
        # one column per side; zero count checked by direct enumeration
        assert int((mask == 0).sum()) == 8 * 2
        assert mask[:, 0].max() == 0 and mask[:, 9].max() == 0
        assert zero_fraction(mask) == pytest.approx(0.2)


class TestRandomMask:
    def test_exact_count_and_determinism(self):
        m1 = make_random_mask(100, 100, 50, seed=7)
        m2 = make_random_mask(100, 100, 50, seed=7)
        assert int((m1 == 0).sum()) == 5000
        assert np.array_equal(m1, m2)

    def test_extreme_corruption_regime(self):
        mask = make_random_mask(10, 10, 90, seed=3)
        assert int((mask == 0).sum()) == 90
        assert int((mask == 1).sum()) == 10

    def test_different_seeds_differ(self):
        m1 = make_random_mask(32, 32, 25, seed=1)
        m2 = make_random_mask(32, 32, 25, seed=2)
        assert not np.array_equal(m1, m2)

    def test_r_bounds(self):
        with pytest.raises(ValueError):
            make_random_mask(10, 10, 0, seed=0)
        with pytest.raises(ValueError):
            make_random_mask(10, 10, 100, seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        h=st.integers(4, 60), w=st.integers(4, 60),
        r=st.floats(1.0, 99.0), seed=st.integers(0, 2 ** 30),
    )
    def test_zero_count_is_exact_not_probabilistic(self, h, w, r, seed):
        mask = make_random_mask(h, w, r, seed)
        assert int((mask == 0).sum()) == int(round(h * w * r / 100.0))


class TestLoadMask:
    def _save_gray(self, arr, path):
        Image.fromarray(arr.astype(np.uint8), mode="L").save(path)

    def test_all_white_is_identity(self, tmp_path):
        p = tmp_path / "white.png"
        self._save_gray(np.full((16, 16), 255), p)
        assert load_mask(p, (16, 16)).min() == 1.0

    def test_all_black_warns(self, tmp_path):
        p = tmp_path / "black.png"
        self._save_gray(np.zeros((16, 16)), p)
        with pytest.warns(UserWarning, match="no known pixels"):
            mask = load_mask(p, (16, 16))
        assert mask.max() == 0.0

    def test_disc_zero_count_matches_enumeration(self, tmp_path):
        h = w = 64
        yy, xx = np.mgrid[0:h, 0:w]
        inside = (yy - 32) ** 2 + (xx - 32) ** 2 <= 10 ** 2
        raster = np.where(inside, 0, 255)
        p = tmp_path / "disc.png"
        self._save_gray(raster, p)
        mask = load_mask(p, (h, w))
        assert int((mask == 0).sum()) == disc_pixel_count(h, w, 32, 32, 10)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "m.png"
        self._save_gray(np.full((8, 8), 255), p)
        with pytest.raises(ValueError, match="dims"):
            load_mask(p, (16, 16))

    def test_unreadable_file(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"not a png")
        with pytest.raises(ValueError, match="unreadable"):
            load_mask(p, (8, 8))

    def test_antialiased_edges_binarized(self, tmp_path):
        p = tmp_path / "soft.png"
        self._save_gray(np.array([[0, 100, 127, 128, 200, 255]] * 8), p)
        mask = load_mask(p, (8, 6))
        assert mask[0].tolist() == [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]


class TestCorruptComposite:
    def test_identity_mask(self, texture64):
        mask = np.ones((64, 64), np.float32)
        assert np.array_equal(corrupt(texture64, mask), texture64)

    def test_annihilating_mask(self, texture64):
        mask = np.zeros((64, 64), np.float32)
        assert corrupt(texture64, mask).max() == 0.0

    def test_elementwise_product_by_hand(self):
        img = np.full((4, 10, 3), 0.5, np.float32)
        mask = make_outpaint_mask(4, 10, 0.2)
        out = corrupt(img, mask)
        assert np.all(out[:, 0] == 0.0) and np.all(out[:, 9] == 0.0)
        assert np.all(out[:, 1:9] == 0.5)

    def test_corrupt_does_not_modify_input(self, texture64):
        mask = make_random_mask(64, 64, 50, seed=0)
        before = texture64.copy()
        corrupt(texture64, mask)
        assert np.array_equal(texture64, before)

    def test_corrupt_is_idempotent(self, texture64):
        mask = make_random_mask(64, 64, 30, seed=4)
        once = corrupt(texture64, mask)
        assert np.array_equal(corrupt(once, mask), once)

    def test_composite_identity_cases(self, texture64):
        ones = np.ones((64, 64), np.float32)
        zeros = np.zeros((64, 64), np.float32)
        other = np.clip(texture64 * 0.5, 0, 1)
        assert np.array_equal(composite(other, texture64, ones), texture64)
        assert np.array_equal(composite(other, texture64, zeros), other)

    def test_composite_checkerboard_formula(self):
        mask = np.indices((8, 8)).sum(axis=0) % 2
        mask = mask.astype(np.float32)
        source = np.ones((8, 8, 3), np.float32)
        restored = np.zeros((8, 8, 3), np.float32)
        out = composite(restored, source, mask)
        assert np.array_equal(out, np.repeat(mask[:, :, None], 3, axis=2))

    def test_known_pixels_never_altered(self, texture64):
        mask = make_random_mask(64, 64, 40, seed=9)
        x = corrupt(texture64, mask)
        y = np.clip(1.0 - texture64, 0, 1)  # any generator output
        assert np.array_equal(corrupt(composite(y, x, mask), mask), x)

    def test_dim_mismatch_raises(self, texture64):
        with pytest.raises(ValueError):
            corrupt(texture64, np.ones((32, 32), np.float32))


def test_combine_masks_and_zero_fraction():
    a = np.ones((4, 4), np.float32)
    a[0] = 0.0
    b = np.ones((4, 4), np.float32)
    b[:, 0] = 0.0
    both = combine_masks(a, b)
    assert int((both == 0).sum()) == 7
    assert zero_fraction(both) == pytest.approx(7 / 16)
