import numpy as np
import pytest

from nucleitk import binarize
from nucleitk.errors import DegenerateHistogramError, ValidationError

from oracles import exhaustive_otsu


def bimodal_half_image():
    img = np.empty((8, 8), dtype=np.uint8)
    img.ravel()[:32] = 50
    img.ravel()[32:] = 200
    return img


class TestOtsuThreshold:
    def test_two_level_image_smallest_tie(self):
        # every t in [50, 199] separates identically; smallest must win
        assert binarize.otsu_threshold(bimodal_half_image()) == 50

    def test_constant_image_degenerate(self):
        with pytest.raises(DegenerateHistogramError):
            binarize.otsu_threshold(np.full((5, 5), 128, np.uint8))

    def test_random_image_matches_exhaustive_search(self):
        rng = np.random.default_rng(21)
        img = rng.integers(0, 256, (8, 8)).astype(np.uint8)
        assert binarize.otsu_threshold(img) == exhaustive_otsu(img)

    def test_oracle_agreement_many(self):
        rng = np.random.default_rng(22)
        for _ in range(150):
            h = int(rng.integers(2, 20))
            w = int(rng.integers(2, 20))
            if rng.random() < 0.5:
                img = rng.integers(0, 256, (h, w)).astype(np.uint8)
            else:
                # clustered intensities exercise tie handling
                lo, hi = sorted(rng.integers(0, 256, 2).tolist())
                img = rng.choice([lo, hi, min(hi + 1, 255)], size=(h, w)).astype(np.uint8)
            if np.unique(img).size < 2:
                continue
            assert binarize.otsu_threshold(img) == exhaustive_otsu(img)

    def test_histogram_permutation_invariance(self):
        rng = np.random.default_rng(23)
        img = rng.integers(0, 256, (12, 12)).astype(np.uint8)
        t = binarize.otsu_threshold(img)
        shuffled = img.ravel().copy()
        rng.shuffle(shuffled)
        assert binarize.otsu_threshold(shuffled.reshape(9, 16)) == t


class TestApplyThreshold:
    def test_t255_bright_is_empty(self):
        rng = np.random.default_rng(24)
        img = rng.integers(0, 256, (6, 6)).astype(np.uint8)
        assert not binarize.apply_threshold(img, 255, binarize.BRIGHT_FOREGROUND).any()

    def test_two_level_selects_bright_pixels(self):
        img = bimodal_half_image()
        out = binarize.apply_threshold(img, 50, binarize.BRIGHT_FOREGROUND)
        assert (out == (img == 200)).all()

    def test_polarities_partition_pixels(self):
        rng = np.random.default_rng(25)
        img = rng.integers(0, 256, (10, 10)).astype(np.uint8)
        for t in (0, 57, 255):
            bright = binarize.apply_threshold(img, t, binarize.BRIGHT_FOREGROUND)
            dark = binarize.apply_threshold(img, t, binarize.DARK_FOREGROUND)
            assert (bright ^ dark).all()

    def test_bad_threshold_and_polarity(self):
        img = bimodal_half_image()
        with pytest.raises(ValidationError):
            binarize.apply_threshold(img, 300, binarize.BRIGHT_FOREGROUND)
        with pytest.raises(ValidationError):
            binarize.apply_threshold(img, 10, "sideways")


class TestOtsuSegment:
    def test_two_level_image(self):
        img = bimodal_half_image()
        out = binarize.otsu_segment(img, binarize.BRIGHT_FOREGROUND)
        assert (out == (img == 200)).all()

    def test_gaussian_mixture_recovers_weight(self):
        rng = np.random.default_rng(26)
        weight = 0.4  # fraction of bright-mode pixels
        n = 128 * 128
        bright = rng.random(n) < weight
        vals = np.where(bright, rng.normal(190, 10, n), rng.normal(60, 10, n))
        img = np.clip(np.round(vals), 0, 255).astype(np.uint8).reshape(128, 128)
        mask = binarize.otsu_segment(img, binarize.BRIGHT_FOREGROUND)
        assert abs(mask.mean() - weight) <= 0.02

    def test_constant_image_propagates_error(self):
        with pytest.raises(DegenerateHistogramError):
            binarize.otsu_segment(np.zeros((4, 4), np.uint8), binarize.DARK_FOREGROUND)
