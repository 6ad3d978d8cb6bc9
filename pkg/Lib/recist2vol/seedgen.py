# Copyright 2026 The recist2vol Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


"""Seed masks for GrabCut.

A seed mask is a uint8 array over an ROI holding one of the codes BG, FG,
PBG (probable background), PFG (probable foreground) or UNKNOWN per pixel.

Area targets (the inner half of the ROI, the FG region, the RECIST-D
dilation, the central region of a padded box) are met exactly: pixels are
ranked by their distance to the grown shape and the first n are taken, ties
on the outer ring being broken by distance to the center, then by raster
order. FG ranks pixels by their radius in the ellipse through the four
RECIST endpoints, so it never reaches past the tips of the long axis
before covering the inside of that ellipse.
"""


from __future__ import print_function, division, absolute_import

import logging
import math

import numpy as np
from scipy import ndimage

from recist2vol.errors import RoiError, AnnotationError, DimensionMismatchError
from recist2vol.imaging import BBox
from recist2vol.recist import bbox_of, rasterize


__all__ = [
    'BG', 'FG', 'PBG', 'PFG', 'UNKNOWN', 'PLAIN', 'INNER',
    'seeds_from_recist', 'recist_d_mask', 'seeds_bbox_variant',
    'seeds_off_slice', 'padded_bbox', 'with_center_seed', 'save_seeds']

BG = 0
FG = 1
PBG = 2
PFG = 3
UNKNOWN = 4

PLAIN = 'plain'
INNER = 'inner'

BG_FRACTION = 0.5
FG_FRACTION = 0.10
RECIST_D_FRACTION = 0.20
INNER_FRACTION = 0.20
BBOX_PADDING = 0.25

FG_PROBABILITY = 0.8
BG_PROBABILITY = 0.2

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

logger = logging.getLogger(__name__)


def _check_endpoints(roi, r):
    w, h = roi.dims
    for x, y in roi.to_local(r.endpoints):
        if not (-0.5 <= x < w - 0.5 and -0.5 <= y < h - 0.5):
            raise RoiError("RECIST endpoint (%g, %g) lies outside the %dx%d "
                           "ROI at %r" % (x + roi.origin[0], y + roi.origin[1],
                                          w, h, roi.origin))


def _grid(shape):
    ys, xs = np.indices(shape, dtype=np.float64)
    return xs, ys


def _take_closest(dist, tie, n):
    """Boolean mask of the n pixels with the smallest (dist, tie) keys."""
    order = np.lexsort((tie.ravel(), dist.ravel()))
    mask = np.zeros(dist.size, dtype=bool)
    mask[order[:max(int(n), 0)]] = True
    return mask.reshape(dist.shape)


def _centered_region(shape, n, box=None):
    """The n pixels closest (in box-normalized Chebyshev distance) to the
    center of box, a (x0, y0, w, h) rectangle in local pixel coordinates
    defaulting to the whole grid. The result is a centered rectangle with
    the box's aspect ratio."""
    xs, ys = _grid(shape)
    if box is None:
        box = (0, 0, shape[1], shape[0])
    x0, y0, w, h = box
    cx = x0 + (w - 1) / 2.0
    cy = y0 + (h - 1) / 2.0
    dx = np.abs(xs - cx) / w
    dy = np.abs(ys - cy) / h
    return _take_closest(np.maximum(dx, dy), np.hypot(dx, dy), n)


def _distance_to(mask):
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


def _split_probable(seeds, fg, bg):
    """Label the pixels that are neither FG nor BG by their nearest seed."""
    rest = ~(fg | bg)
    closer_fg = _distance_to(fg) < _distance_to(bg)
    seeds[rest & closer_fg] = PFG
    seeds[rest & ~closer_fg] = PBG
    return seeds


def _center_distance(shape, center):
    xs, ys = _grid(shape)
    return np.hypot(xs - center[0], ys - center[1])


def _geometric_background(roi, recist_pixels):
    n = roi.shape[0] * roi.shape[1]
    inner = _centered_region(roi.shape, int(round(n * (1 - BG_FRACTION))))
    return ~inner & ~recist_pixels


def _unit(p, q):
    d = np.subtract(q, p, dtype=np.float64)
    norm = math.hypot(*d)
    return d / norm if norm > 0 else np.array([1.0, 0.0])


def _elliptic_radius(roi, r):
    """Per-pixel radius in the ellipse spanned by the RECIST endpoints.

    The long axis gives the u direction and its perpendicular the v
    direction; each half-plane uses the semi-length of the endpoint on its
    side, so that all four endpoints lie on the level 1 contour.
    """
    (p1, p2), (q1, q2) = (roi.to_local(axis)
                          for axis in (r.long_axis, r.short_axis))
    center = np.array(roi.to_local([r.center()])[0])
    u = _unit(p1, p2)
    v = np.array([-u[1], u[0]])
    semi = {}
    for name, ends, axis in (('u', (p1, p2), u), ('v', (q1, q2), v)):
        for end in ends:
            d = np.subtract(end, center)
            # half a pixel keeps collapsed axes finite
            length = max(abs(np.dot(d, axis)), 0.5)
            semi[name, np.dot(d, axis) >= 0] = length
        semi.setdefault((name, True), semi[name, False])
        semi.setdefault((name, False), semi[name, True])
    xs, ys = _grid(roi.shape)
    s = (xs - center[0]) * u[0] + (ys - center[1]) * u[1]
    t = (xs - center[0]) * v[0] + (ys - center[1]) * v[1]
    a = np.where(s >= 0, semi['u', True], semi['u', False])
    b = np.where(t >= 0, semi['v', True], semi['v', False])
    return np.hypot(s / a, t / b)


def seeds_from_recist(roi, r):
    """Seed mask S(R) of an ROI from RECIST diameters.

    The outer 50% of the ROI (outside a centered rectangle of half its area)
    is BG. FG is the RECIST plus the pixels of smallest elliptic radius,
    10% of the ROI in all. The remaining pixels are PFG when closer to FG
    than to BG, PBG otherwise.
    """
    _check_endpoints(roi, r)
    shape = roi.shape
    n = shape[0] * shape[1]
    recist_pixels = rasterize(r, shape, roi.origin)
    bg = _geometric_background(roi, recist_pixels)

    rho = _elliptic_radius(roi, r)
    rho[bg | recist_pixels] = np.inf
    center = roi.to_local([r.center()])[0]
    grown = int(round(n * FG_FRACTION)) - int(recist_pixels.sum())
    fg = _take_closest(rho, _center_distance(shape, center), grown)
    fg = (fg & ~bg & ~recist_pixels) | recist_pixels

    seeds = np.full(shape, UNKNOWN, dtype=np.uint8)
    seeds[bg] = BG
    seeds[fg] = FG
    return _split_probable(seeds, fg, bg)


def recist_d_mask(roi, r):
    """The RECIST-D label: RECIST diameters dilated to 20% of the area of
    their bounding box."""
    _check_endpoints(roi, r)
    if min(r.lengths()) <= 0:
        raise AnnotationError("RECIST-D needs two non-degenerate axes")
    box = bbox_of(r)
    recist_pixels = rasterize(r, roi.shape, roi.origin)
    center = roi.to_local([r.center()])[0]
    mask = _take_closest(_distance_to(recist_pixels),
                         _center_distance(roi.shape, center),
                         int(round(box.area * RECIST_D_FRACTION)))
    return mask | recist_pixels


def padded_bbox(r, padding=BBOX_PADDING):
    """bbox_of(r) grown by 'padding' times its side on every side."""
    box = bbox_of(r)
    w = int(round(box.w * (1 + 2 * padding)))
    h = int(round(box.h * (1 + 2 * padding)))
    cx, cy = box.center
    return BBox(int(round(cx - w / 2.0)), int(round(cy - h / 2.0)), w, h)


def seeds_bbox_variant(roi, r, variant=PLAIN):
    """Baseline seeds from the 25%-padded RECIST bounding box.

    PLAIN marks the inside PFG and the outside BG; it has no FG, so callers
    pass it through with_center_seed before GrabCut. INNER additionally marks
    the central 20% of the padded box as FG.
    """
    if variant not in (PLAIN, INNER):
        raise ValueError("unknown bbox seed variant %r" % (variant,))
    box = padded_bbox(r)
    x0 = box.x - roi.origin[0]
    y0 = box.y - roi.origin[1]
    inside = np.zeros(roi.shape, dtype=bool)
    h, w = roi.shape
    inside[max(y0, 0):max(min(y0 + box.h, h), 0),
           max(x0, 0):max(min(x0 + box.w, w), 0)] = True

    seeds = np.full(roi.shape, BG, dtype=np.uint8)
    seeds[inside] = PFG
    if variant == INNER:
        n = int(round(INNER_FRACTION * inside.sum()))
        center = _centered_region(roi.shape, n, (x0, y0, box.w, box.h))
        seeds[center & inside] = FG
    return seeds


def with_center_seed(seeds, roi, r):
    """Return seeds with one FG pixel at the RECIST bbox center when the mask
    has no FG at all."""
    seeds = np.array(seeds, dtype=np.uint8)
    if (seeds == FG).any():
        return seeds
    cx, cy = roi.to_local([bbox_of(r).center])[0]
    h, w = seeds.shape
    x = min(max(int(math.floor(cx)), 0), w - 1)
    y = min(max(int(math.floor(cy)), 0), h - 1)
    seeds[y, x] = FG
    return seeds


def _coverage_threshold(prob, recist_pixels):
    """Largest t such that prob >= t on at least half the RECIST pixels."""
    values = np.sort(prob[recist_pixels])[::-1]
    return values[int(math.ceil(len(values) / 2.0)) - 1]


def _components(mask):
    labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    return labels, count


def seeds_off_slice(roi, prob, rhat):
    """Seed mask S(Y, R', R) from a probability map and propagated RECIST.

    The map is binarized at the larger of 0.5 and the threshold covering
    half the RECIST pixels; an empty binarization falls back to
    seeds_from_recist. FG is the RECIST plus every prob > 0.8 component
    touching it, within the inner half of the ROI. BG is the geometric
    outer half of the ROI plus every prob < 0.2 component clear of the
    RECIST, so a map that is confident everywhere still leaves BG seeds.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.shape != roi.shape:
        raise DimensionMismatchError(prob.shape, roi.shape)
    _check_endpoints(roi, rhat)
    recist_pixels = rasterize(rhat, roi.shape, roi.origin)
    if not recist_pixels.any():
        return seeds_from_recist(roi, rhat)

    level = max(_coverage_threshold(prob, recist_pixels), 0.5)
    if not (prob >= level).any():
        logger.debug("Empty binarized map on slice %d; using RECIST seeds",
                     rhat.slice_index)
        return seeds_from_recist(roi, rhat)

    outer = _geometric_background(roi, recist_pixels)
    labels, _ = _components(prob > FG_PROBABILITY)
    touching = np.unique(labels[recist_pixels & (labels > 0)])
    fg = recist_pixels | (np.isin(labels, touching[touching > 0]) & ~outer)

    labels, _ = _components(prob < BG_PROBABILITY)
    crossing = np.unique(labels[recist_pixels])
    bg = (labels > 0) & ~np.isin(labels, crossing[crossing > 0])
    bg = (bg | outer) & ~fg

    seeds = np.full(roi.shape, UNKNOWN, dtype=np.uint8)
    seeds[bg] = BG
    seeds[fg] = FG
    return _split_probable(seeds, fg, bg)


def save_seeds(seeds, path):
    """Write a seed mask as raw uint8 codes, rows of x fastest."""
    seeds = np.asarray(seeds, dtype=np.uint8)
    with open(path, 'wb') as fp:
        fp.write(seeds.tobytes())
    return path
