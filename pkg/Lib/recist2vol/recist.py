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


"""RECIST diameters: geometry, extraction from masks and slice propagation.

A RECIST annotation is a long axis and a perpendicular short axis drawn on
one axial slice. Endpoints are (x, y) pixel coordinates of that slice.

Off-slice diameters are estimated by treating every endpoint as lying on a
sphere centered on the axes' crossing point, whose radius is the endpoint's
own in-plane distance from that point. At a physical offset d the endpoint
moves towards the center to sqrt(l**2 - d**2).
"""


from __future__ import print_function, division, absolute_import

import collections
import csv
import logging
import math
import os

import numpy as np
from scipy import ndimage

from recist2vol.errors import AnnotationError, EmptyMaskError
from recist2vol.imaging import BBox


__all__ = [
    'RecistAnnotation', 'PropagatedRecist', 'AnnotationRecord', 'bbox_of',
    'rasterize', 'extract_recist_from_mask', 'propagate', 'read_annotations',
    'write_annotations']

# how far (in pixels) the crossing point may lie outside either segment
CROSS_TOLERANCE = 2.0
# allowed deviation of the short axis from perpendicular, in degrees
PERPENDICULAR_TOLERANCE = 10.0

ANNOTATION_COLUMNS = [
    'lesion_id', 'volume_path', 'slice_index',
    'x1', 'y1', 'x2', 'y2', 'x3', 'y3', 'x4', 'y4']

logger = logging.getLogger(__name__)


def _point(p):
    x, y = p
    return float(x), float(y)


def _segment_params(p1, p2, q1, q2):
    """Return the parameters (s, t) at which the lines p1p2 and q1q2 meet,
    or None if they are parallel."""
    dpx, dpy = p2[0] - p1[0], p2[1] - p1[1]
    dqx, dqy = q2[0] - q1[0], q2[1] - q1[1]
    denom = dpx * dqy - dpy * dqx
    if denom == 0:
        return None
    rx, ry = q1[0] - p1[0], q1[1] - p1[1]
    s = (rx * dqy - ry * dqx) / denom
    t = (rx * dpy - ry * dpx) / denom
    return s, t


def _crosses(p1, p2, q1, q2, tolerance):
    params = _segment_params(p1, p2, q1, q2)
    if params is None:
        return False
    s, t = params
    len_p = math.hypot(p2[0] - p1[0], p2[1] - p1[1])
    len_q = math.hypot(q2[0] - q1[0], q2[1] - q1[1])
    tol_s = tolerance / len_p if len_p else 0.0
    tol_t = tolerance / len_q if len_q else 0.0
    return -tol_s <= s <= 1 + tol_s and -tol_t <= t <= 1 + tol_t


class RecistAnnotation(object):
    """Long and short RECIST diameters on axial slice 'slice_index'.

    long_axis, short_axis: pairs of (x, y) pixel endpoints.
    spacing: (sx, sy, sz) voxel spacing in mm.
    """

    offset = 0

    def __init__(self, long_axis, short_axis, slice_index, spacing,
                 validate=True):
        self.long_axis = tuple(_point(p) for p in long_axis)
        self.short_axis = tuple(_point(p) for p in short_axis)
        if len(self.long_axis) != 2 or len(self.short_axis) != 2:
            raise AnnotationError("each axis needs exactly two endpoints")
        self.slice_index = int(slice_index)
        self.spacing = tuple(float(s) for s in spacing)
        if validate:
            self._validate()

    def _validate(self):
        long_len, short_len = self.lengths()
        if not short_len > 0:
            raise AnnotationError("degenerate short axis %r"
                                  % (self.short_axis,))
        if long_len < short_len:
            raise AnnotationError(
                "long axis (%.3f mm) is shorter than short axis (%.3f mm)"
                % (long_len, short_len))
        if not _crosses(self.long_axis[0], self.long_axis[1],
                        self.short_axis[0], self.short_axis[1],
                        CROSS_TOLERANCE):
            raise AnnotationError("RECIST axes do not intersect")

    def __repr__(self):
        return "<%s slice=%d long=%r short=%r>" % (
            type(self).__name__, self.slice_index, self.long_axis,
            self.short_axis)

    def __eq__(self, other):
        if not isinstance(other, RecistAnnotation):
            return NotImplemented
        return (self.long_axis == other.long_axis and
                self.short_axis == other.short_axis and
                self.slice_index == other.slice_index and
                self.spacing == other.spacing and
                self.offset == other.offset)

    def __ne__(self, other):
        return not (self == other)

    @property
    def endpoints(self):
        return self.long_axis + self.short_axis

    def physical_length(self, p, q):
        sx, sy = self.spacing[:2]
        return math.hypot((q[0] - p[0]) * sx, (q[1] - p[1]) * sy)

    def lengths(self):
        """Return the (long, short) physical axis lengths in mm."""
        return (self.physical_length(*self.long_axis),
                self.physical_length(*self.short_axis))

    def center(self):
        """Crossing point of the two axes, or the long-axis midpoint when the
        segments do not cross."""
        (p1, p2), (q1, q2) = self.long_axis, self.short_axis
        params = _segment_params(p1, p2, q1, q2)
        if params is not None:
            s, t = params
            if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
                return (p1[0] + s * (p2[0] - p1[0]),
                        p1[1] + s * (p2[1] - p1[1]))
        return (p1[0] + p2[0]) / 2.0, (p1[1] + p2[1]) / 2.0

    def semi_lengths(self):
        """Physical distance (mm) of each of the four endpoints from the
        center, in endpoint order."""
        c = self.center()
        return [self.physical_length(c, p) for p in self.endpoints]


class PropagatedRecist(RecistAnnotation):
    """RECIST estimate on slice 'slice_index', 'offset' slices away from the
    annotated slice. Propagated axes may be shorter than the short axis or
    collapse to a point, so they are not validated."""

    def __init__(self, long_axis, short_axis, slice_index, spacing, offset):
        super(PropagatedRecist, self).__init__(
            long_axis, short_axis, slice_index, spacing, validate=False)
        self.offset = int(offset)


def bbox_of(r):
    """Minimal axis-aligned box containing the four endpoints.

    >>> r = RecistAnnotation([(10, 10), (30, 10)], [(20, 5), (20, 15)], 0,
    ...                      (1, 1, 1))
    >>> bbox_of(r)
    BBox(x=10, y=5, w=20, h=10)
    """
    xs = [p[0] for p in r.endpoints]
    ys = [p[1] for p in r.endpoints]
    x = int(math.floor(min(xs)))
    y = int(math.floor(min(ys)))
    w = max(int(math.ceil(max(xs))) - x, 1)
    h = max(int(math.ceil(max(ys))) - y, 1)
    return BBox(x, y, w, h)


def _segment_pixels(p, q):
    n = int(math.ceil(2 * max(abs(q[0] - p[0]), abs(q[1] - p[1])))) + 1
    xs = np.rint(np.linspace(p[0], q[0], n)).astype(int)
    ys = np.rint(np.linspace(p[1], q[1], n)).astype(int)
    return xs, ys


def rasterize(r, shape, origin=(0, 0)):
    """Return a boolean (ny, nx) mask of the pixels the two diameters pass
    through. 'origin' is subtracted from the endpoints first, so ROI-local
    masks are obtained with origin=roi.origin.
    """
    x0, y0 = origin[:2]
    mask = np.zeros(shape, dtype=bool)
    for p, q in (r.long_axis, r.short_axis):
        xs, ys = _segment_pixels((p[0] - x0, p[1] - y0),
                                 (q[0] - x0, q[1] - y0))
        inside = (xs >= 0) & (ys >= 0) & (xs < shape[1]) & (ys < shape[0])
        mask[ys[inside], xs[inside]] = True
    return mask


def _chord_inside(mask, p, q):
    xs, ys = _segment_pixels(p, q)
    return bool(mask[ys, xs].all())


def _longest_chord(mask, points, candidates):
    """Return the longest (i, j) pair of 'candidates' whose chord stays inside
    the mask, or None."""
    for i, j in candidates:
        if _chord_inside(mask, points[i], points[j]):
            return i, j
    return None


def extract_recist_from_mask(mask, spacing, noise_frac=0.0, rng=None):
    """Measure RECIST diameters on the largest axial section of a 3D mask.

    The long axis is the longest chord between boundary pixels that stays
    inside the mask; the short axis is the longest inside chord crossing it
    within 90 +/- 10 degrees. With noise_frac > 0 each of the four
    semi-lengths is scaled by (1 + u), u ~ Uniform(-noise_frac, noise_frac).
    """
    mask = np.asarray(mask, dtype=bool)
    if not 0.0 <= noise_frac <= 0.5:
        raise AnnotationError("noise fraction %r outside [0, 0.5]"
                              % noise_frac)
    areas = mask.reshape(mask.shape[0], -1).sum(axis=1)
    if not areas.any():
        raise EmptyMaskError("cannot measure RECIST on an empty mask")
    z = int(np.argmax(areas))
    section = mask[z]

    boundary = section & ~ndimage.binary_erosion(section)
    ys, xs = np.nonzero(boundary)
    points = [(float(x), float(y)) for x, y in zip(xs, ys)]
    sx, sy = spacing[0], spacing[1]
    px = xs * sx
    py = ys * sy
    dist = np.hypot(px[:, None] - px[None, :], py[:, None] - py[None, :])
    i_idx, j_idx = np.triu_indices(len(points), k=1)
    lengths = dist[i_idx, j_idx]
    order = np.argsort(-lengths, kind='stable')

    if len(points) == 1:
        raise AnnotationError("mask section is a single pixel")
    pairs = ((i_idx[k], j_idx[k]) for k in order)
    found = _longest_chord(section, points, pairs)
    if found is None:
        raise AnnotationError("no inside chord found on slice %d" % z)
    p1, p2 = points[found[0]], points[found[1]]

    lx, ly = (p2[0] - p1[0]) * sx, (p2[1] - p1[1]) * sy
    dx, dy = (px[j_idx] - px[i_idx]), (py[j_idx] - py[i_idx])
    cos = np.abs(lx * dx + ly * dy) / (math.hypot(lx, ly) * lengths)
    perpendicular = cos <= math.sin(math.radians(PERPENDICULAR_TOLERANCE))
    short_pairs = (
        (i_idx[k], j_idx[k]) for k in order if perpendicular[k] and
        _crosses(p1, p2, points[i_idx[k]], points[j_idx[k]], 0.0))
    found = _longest_chord(section, points, short_pairs)
    if found is None:
        raise AnnotationError("no perpendicular chord found on slice %d" % z)
    q1, q2 = points[found[0]], points[found[1]]

    r = RecistAnnotation((p1, p2), (q1, q2), z, spacing, validate=False)
    if noise_frac > 0:
        r = _perturb(r, noise_frac, rng)
    long_len, short_len = r.lengths()
    if long_len < short_len:
        r = RecistAnnotation(r.short_axis, r.long_axis, z, spacing,
                             validate=False)
    r._validate()
    return r


def _perturb(r, noise_frac, rng):
    if rng is None:
        raise ValueError("a random generator is required when noise_frac > 0")
    c = r.center()
    scales = 1.0 + rng.uniform(-noise_frac, noise_frac, size=4)
    moved = [(c[0] + (p[0] - c[0]) * s, c[1] + (p[1] - c[1]) * s)
             for p, s in zip(r.endpoints, scales)]
    return RecistAnnotation(moved[:2], moved[2:], r.slice_index, r.spacing,
                            validate=False)


def propagate(r, offset):
    """Estimate the RECIST diameters 'offset' slices away from r.

    Each endpoint at in-plane distance l (mm) from the center moves towards
    it so its new distance is sqrt(max(l**2 - (offset * sz)**2, 0)).
    Returns None once the long axis has collapsed to a point.
    """
    offset = int(offset)
    if offset == 0:
        return PropagatedRecist(r.long_axis, r.short_axis, r.slice_index,
                                r.spacing, r.offset)
    c = r.center()
    dz = offset * r.spacing[2]
    moved = []
    for p, l in zip(r.endpoints, r.semi_lengths()):
        if l == 0:
            moved.append(c)
            continue
        new_l = math.sqrt(max(l * l - dz * dz, 0.0))
        f = new_l / l
        moved.append((c[0] + (p[0] - c[0]) * f, c[1] + (p[1] - c[1]) * f))
    if moved[0] == c and moved[1] == c:
        return None
    return PropagatedRecist(moved[:2], moved[2:], r.slice_index + offset,
                            r.spacing, r.offset + offset)


class AnnotationRecord(collections.namedtuple(
        'AnnotationRecord',
        'lesion_id volume_path slice_index long_axis short_axis extra')):
    """One row of an annotation CSV. 'volume_path' is resolved against the
    CSV's directory; 'extra' holds any additional columns."""

    __slots__ = ()

    def annotation(self, spacing):
        return RecistAnnotation(self.long_axis, self.short_axis,
                                self.slice_index, spacing)

    @property
    def category(self):
        return self.extra.get('category') or None


def _parse_number(row, key, line):
    try:
        return float(row[key])
    except (TypeError, ValueError):
        raise AnnotationError("line %d: invalid value %r for %s"
                              % (line, row[key], key))


def read_annotations(path):
    """Parse a DeepLesion-style annotation CSV into AnnotationRecords.

    Columns: lesion_id, volume_path, slice_index, x1..y4 (long axis, then
    short axis). Extra columns are kept in AnnotationRecord.extra.
    """
    base_dir = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, 'r') as fp:
        reader = csv.DictReader(fp)
        missing = [c for c in ANNOTATION_COLUMNS
                   if c not in (reader.fieldnames or [])]
        if missing:
            raise AnnotationError("%s: missing columns %s"
                                  % (path, ", ".join(missing)))
        for line, row in enumerate(reader, start=2):
            coords = [_parse_number(row, c, line)
                      for c in ANNOTATION_COLUMNS[3:]]
            slice_index = _parse_number(row, 'slice_index', line)
            if slice_index != int(slice_index):
                raise AnnotationError("line %d: non-integer slice index"
                                      % line)
            extra = dict((k, v) for k, v in row.items()
                         if k not in ANNOTATION_COLUMNS)
            records.append(AnnotationRecord(
                row['lesion_id'],
                os.path.join(base_dir, row['volume_path']),
                int(slice_index),
                ((coords[0], coords[1]), (coords[2], coords[3])),
                ((coords[4], coords[5]), (coords[6], coords[7])),
                extra))
    logger.debug("Read %d annotations from %s", len(records), path)
    return records


def write_annotations(path, rows, extra_columns=()):
    """Write (lesion_id, volume_path, RecistAnnotation, extra dict) rows."""
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(ANNOTATION_COLUMNS + list(extra_columns))
        for lesion_id, volume_path, r, extra in rows:
            coords = [repr(float(v)) for p in r.endpoints for v in p]
            writer.writerow(
                [lesion_id, volume_path, r.slice_index] + coords +
                [extra.get(c, '') for c in extra_columns])
