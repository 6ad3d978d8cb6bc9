from __future__ import print_function, division, absolute_import

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recist2vol.errors import RoiError, AnnotationError, DimensionMismatchError
from recist2vol.imaging import BBox, Volume, crop_roi
from recist2vol.recist import RecistAnnotation, rasterize, bbox_of
from recist2vol.seedgen import (
    BG, FG, PBG, PFG, UNKNOWN, PLAIN, INNER, seeds_from_recist,
    recist_d_mask, padded_bbox, seeds_bbox_variant, with_center_seed,
    seeds_off_slice, save_seeds)

from . import SEED
from .utils import make_roi


def _cross(dx=0, dy=0):
    return RecistAnnotation([(10 + dx, 20 + dy), (30 + dx, 20 + dy)],
                            [(20 + dx, 15 + dy), (20 + dx, 25 + dy)], 0,
                            (1, 1, 1))


def _small_cross():
    return RecistAnnotation([(5, 8), (11, 8)], [(8, 6), (8, 10)], 0,
                            (1, 1, 1))


ROI = make_roi(np.zeros((40, 40)))


def _random_crop(rng, image=Volume(np.zeros((1, 128, 128), dtype=np.int16),
                                   (1, 1, 1), (0, 1))):
    """A random oblique RECIST and its (2w, 2h) ROI of at least 32x32."""
    while True:
        long_semi = rng.uniform(9.0, 20.0)
        short_semi = long_semi * rng.uniform(0.6, 1.0)
        angle = rng.uniform(0.0, np.pi)
        c, s = np.cos(angle), np.sin(angle)
        cx, cy = rng.uniform(50.0, 78.0, size=2)
        r = RecistAnnotation(
            [(cx - long_semi * c, cy - long_semi * s),
             (cx + long_semi * c, cy + long_semi * s)],
            [(cx + short_semi * s, cy - short_semi * c),
             (cx - short_semi * s, cy + short_semi * c)], 0, (1, 1, 1))
        roi = crop_roi(image, bbox_of(r), 0)
        if min(roi.shape) >= 32:
            return roi, r


class SeedsFromRecistTest(object):

    def test_area_fractions(self):
        seeds = seeds_from_recist(ROI, _cross())
        assert (seeds == BG).sum() == 800
        assert (seeds == FG).sum() == 160
        assert not (seeds == UNKNOWN).any()
        assert set(np.unique(seeds)) <= {BG, FG, PBG, PFG}

    def test_recist_is_foreground(self):
        seeds = seeds_from_recist(ROI, _cross())
        assert (seeds[rasterize(_cross(), ROI.shape)] == FG).all()

    def test_background_on_border(self):
        seeds = seeds_from_recist(ROI, _cross())
        assert (seeds[0, :] == BG).all() and (seeds[:, -1] == BG).all()
        assert seeds[20, 20] == FG

    def test_probable_labels_follow_nearest_seed(self):
        seeds = seeds_from_recist(ROI, _cross())
        # just outside FG, towards the center, vs. just inside the BG ring
        column = seeds[:, 20]
        fg_rows = np.nonzero(column == FG)[0]
        assert column[fg_rows.min() - 1] == PFG
        bg_rows = np.nonzero(column[:20] == BG)[0]
        assert column[bg_rows.max() + 1] == PBG

    def test_origin_is_honored(self):
        roi = make_roi(np.zeros((40, 40)), origin=(100, 50, 3))
        a = seeds_from_recist(roi, _cross(100, 50))
        b = seeds_from_recist(ROI, _cross())
        assert np.array_equal(a, b)

    def test_endpoint_outside_roi(self):
        with pytest.raises(RoiError):
            seeds_from_recist(make_roi(np.zeros((20, 20))), _cross())

    def test_foreground_inside_recist_ellipse(self):
        # the (2w, 2h) crop around the 20x10 cross
        roi = make_roi(np.zeros((20, 40)), origin=(0, 10, 0))
        seeds = seeds_from_recist(roi, _cross())
        fg = seeds == FG
        assert fg.sum() == 80
        recist = rasterize(_cross(), roi.shape, roi.origin)
        ys, xs = np.nonzero(fg & ~recist)
        assert (((xs - 20) / 10.0) ** 2 + ((ys - 10) / 5.0) ** 2 <= 1).all()
        # the long axis ends in a one pixel wide tip
        assert fg[10, 10] and fg[10, 30]
        assert not fg[9, 10] and not fg[11, 10]
        assert not fg[9, 30] and not fg[11, 30]

    def test_random_oblique_rois(self):
        rng = np.random.default_rng(SEED)
        for _ in range(50):
            roi, r = _random_crop(rng)
            n = roi.shape[0] * roi.shape[1]
            seeds = seeds_from_recist(roi, r)
            assert (seeds == BG).sum() == n - int(round(n * 0.5))
            assert abs((seeds == FG).sum() / n - 0.10) <= 0.01
            probable = np.isin(seeds, (PFG, PBG)).sum() / n
            assert abs(probable - 0.40) <= 0.02
            assert (seeds[rasterize(r, roi.shape, roi.origin)] == FG).all()
            area = recist_d_mask(roi, r).sum() / bbox_of(r).area
            assert abs(area - 0.20) <= 0.01


class RecistDTest(object):

    def test_area(self):
        mask = recist_d_mask(ROI, _cross())
        # 20% of the 20x10 bounding box
        assert mask.sum() == 40
        assert mask[rasterize(_cross(), ROI.shape)].all()

    def test_degenerate_axis(self):
        r = RecistAnnotation([(10, 20), (30, 20)], [(20, 20), (20, 20)], 0,
                             (1, 1, 1), validate=False)
        with pytest.raises(AnnotationError):
            recist_d_mask(ROI, r)


class BBoxVariantTest(object):

    def test_padded_bbox(self):
        assert padded_bbox(_cross()) == BBox(5, 12, 30, 15)

    def test_plain(self):
        seeds = seeds_bbox_variant(ROI, _cross(), PLAIN)
        assert (seeds == PFG).sum() == 30 * 15
        assert (seeds[12:27, 5:35] == PFG).all()
        assert not (seeds == FG).any()
        assert (seeds == BG).sum() == 1600 - 450

    def test_plain_gets_center_seed(self):
        seeds = with_center_seed(seeds_bbox_variant(ROI, _cross()), ROI,
                                 _cross())
        assert (seeds == FG).sum() == 1
        assert seeds[20, 20] == FG

    def test_center_seed_keeps_existing_fg(self):
        seeds = seeds_bbox_variant(ROI, _cross(), INNER)
        assert np.array_equal(with_center_seed(seeds, ROI, _cross()), seeds)

    def test_inner(self):
        seeds = seeds_bbox_variant(ROI, _cross(), INNER)
        fg = seeds == FG
        assert fg.sum() == 90
        assert (seeds[fg] == FG).all()
        ys, xs = np.nonzero(fg)
        assert 5 <= xs.min() and xs.max() < 35
        assert 12 <= ys.min() and ys.max() < 27
        assert (seeds == PFG).sum() == 450 - 90

    def test_clipped_by_roi(self):
        roi = make_roi(np.zeros((20, 30)), origin=(5, 10, 0))
        seeds = seeds_bbox_variant(roi, _cross(), PLAIN)
        assert seeds.shape == (20, 30)
        assert (seeds == PFG).sum() == 30 * 15

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            seeds_bbox_variant(ROI, _cross(), 'fancy')


class SeedsOffSliceTest(object):

    roi = make_roi(np.zeros((16, 16)))

    def test_empty_map_falls_back_to_recist_seeds(self):
        rhat = _small_cross()
        seeds = seeds_off_slice(self.roi, np.zeros((16, 16)), rhat)
        assert np.array_equal(seeds, seeds_from_recist(self.roi, rhat))

    def test_blob(self):
        prob = np.zeros((16, 16))
        prob[4:12, 4:12] = 1.0
        prob[14:, 14:] = 0.9
        seeds = seeds_off_slice(self.roi, prob, _small_cross())
        assert (seeds[4:12, 4:12] == FG).all()
        assert (seeds == FG).sum() == 64
        # the detached bright corner lies in the outer half: BG
        assert (seeds[14:, 14:] == BG).all()
        assert (seeds == BG).sum() == 256 - 64

    def test_no_clear_background(self):
        prob = np.full((16, 16), 0.5)
        prob[6:11, 5:12] = 0.95
        seeds = seeds_off_slice(self.roi, prob, _small_cross())
        assert (seeds[6:11, 5:12] == FG).all()
        # no prob < 0.2 component: the outer half of the ROI is BG
        assert (seeds == BG).sum() == 128
        assert (seeds[0, :] == BG).all()

    def test_saturated_map_keeps_background(self):
        prob = np.full((16, 16), 0.95)
        seeds = seeds_off_slice(self.roi, prob, _small_cross())
        # FG stops at the outer half of the ROI, which stays BG
        assert (seeds == BG).sum() == 128
        assert (seeds == FG).sum() == 128
        assert (seeds[0, :] == BG).all() and (seeds[:, 0] == BG).all()

    def test_recist_kept_without_confident_component(self):
        prob = np.zeros((16, 16))
        prob[8, 5:12] = 0.7
        seeds = seeds_off_slice(self.roi, prob, _small_cross())
        assert (seeds[8, 5:12] == FG).all()

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            seeds_off_slice(self.roi, np.zeros((16, 15)), _small_cross())

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1))
    def test_valid_seed_mask(self, seed):
        rng = np.random.default_rng(seed)
        prob = rng.random((16, 16))
        rhat = _small_cross()
        seeds = seeds_off_slice(self.roi, prob, rhat)
        assert seeds.dtype == np.uint8
        assert set(np.unique(seeds)) <= {BG, FG, PBG, PFG}
        assert (seeds[rasterize(rhat, (16, 16))] == FG).all()
        assert (seeds == BG).any()


class SaveSeedsTest(object):

    def test_raw_codes(self, tmpdir):
        seeds = np.array([[BG, FG], [PBG, PFG]], dtype=np.uint8)
        path = save_seeds(seeds, str(tmpdir / "seeds.raw"))
        with open(path, 'rb') as fp:
            assert fp.read() == bytes([BG, FG, PBG, PFG])
