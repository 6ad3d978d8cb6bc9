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


"""Synthetic single-lesion CT volumes with exact ground truth.

A phantom is an ellipsoidal lesion, optionally turned in the axial plane,
of intensity fg_mean in a background of bg_mean (both in normalized [0, 1]
units), optionally modulated by a smooth random texture, blurred to mimic
partial volume effects and overlaid with Gaussian noise. Intensities are
stored as int16 in the units of the phantom's window, so windowing maps
them back to [0, 1].
"""


from __future__ import print_function, division, absolute_import

import collections
import logging
import math
import os

import numpy as np
from scipy import ndimage

from recist2vol.errors import PhantomSpecError
from recist2vol.imaging import Volume, save_volume, save_mask
from recist2vol.recist import extract_recist_from_mask, write_annotations


__all__ = ['PhantomSpec', 'generate_phantom', 'phantom_suite',
           'write_phantom_suite']

SPHERE = 'sphere'
ELLIPSOID = 'ellipsoid'
TEXTURED = 'textured'
CATEGORIES = (SPHERE, ELLIPSOID, TEXTURED)

TEXTURE_SCALE = 4.0

logger = logging.getLogger(__name__)


def _extents(semi_axes, angle):
    """Half-extents (mm) of the lesion along x, y and z."""
    a, b, c = semi_axes
    cos, sin = math.cos(angle), math.sin(angle)
    return math.hypot(a * cos, b * sin), math.hypot(a * sin, b * cos), c


class PhantomSpec(collections.namedtuple(
        'PhantomSpec', 'dims spacing semi_axes center fg_mean bg_mean '
                       'noise_sigma texture blur_sigma window category angle')):
    """Parameters of one phantom.

    dims (nx, ny, nz) and spacing (sx, sy, sz) in mm; semi_axes (a, b, c) of
    the lesion in mm; center (x, y, z) in voxels, defaulting to the middle
    of the volume; blur_sigma in voxels; angle (radians) turns the first
    semi-axis away from the x axis towards y.
    """

    __slots__ = ()

    def __new__(cls, dims=(40, 40, 24), spacing=(1.0, 1.0, 1.5),
                semi_axes=(8.0, 8.0, 8.0), center=None, fg_mean=0.7,
                bg_mean=0.3, noise_sigma=0.05, texture=0.0, blur_sigma=0.5,
                window=(-160.0, 240.0), category=SPHERE, angle=0.0):
        dims = tuple(int(n) for n in dims)
        spacing = tuple(float(s) for s in spacing)
        semi_axes = tuple(float(a) for a in semi_axes)
        if center is None:
            center = tuple((n - 1) / 2.0 for n in dims)
        center = tuple(float(c) for c in center)
        if len(dims) != 3 or min(dims) < 1:
            raise PhantomSpecError("dims must be three positive sizes")
        if len(spacing) != 3 or min(spacing) <= 0:
            raise PhantomSpecError("spacing must be three positive values")
        if len(semi_axes) != 3 or min(semi_axes) <= 0:
            raise PhantomSpecError("semi-axes must be positive")
        if fg_mean == bg_mean:
            raise PhantomSpecError("lesion and background intensities must "
                                   "differ")
        if noise_sigma < 0 or texture < 0 or blur_sigma < 0:
            raise PhantomSpecError("noise, texture and blur must be >= 0")
        for n, s, extent, c in zip(dims, spacing,
                                   _extents(semi_axes, angle), center):
            if c - extent / s < 0 or c + extent / s > n - 1:
                raise PhantomSpecError(
                    "lesion (semi-axes %r mm at %r) does not fit in %r voxels"
                    % (semi_axes, center, dims))
        if category not in CATEGORIES:
            raise PhantomSpecError("unknown category %r" % (category,))
        return super(PhantomSpec, cls).__new__(
            cls, dims, spacing, semi_axes, center, float(fg_mean),
            float(bg_mean), float(noise_sigma), float(texture),
            float(blur_sigma), tuple(float(w) for w in window), category,
            float(angle))


def _ellipsoid(spec):
    nx, ny, nz = spec.dims
    zs, ys, xs = np.indices((nz, ny, nx), dtype=np.float64)
    dx, dy, dz = ((coords - c) * s for coords, s, c in
                  zip((xs, ys, zs), spec.spacing, spec.center))
    cos, sin = math.cos(spec.angle), math.sin(spec.angle)
    u = dx * cos + dy * sin
    v = dy * cos - dx * sin
    a, b, c = spec.semi_axes
    return (u / a) ** 2 + (v / b) ** 2 + (dz / c) ** 2 <= 1.0


def generate_phantom(spec, rng):
    """Return (Volume, mask): an int16 volume and its boolean [z, y, x]
    lesion mask. The same spec and rng state give the same volume."""
    mask = _ellipsoid(spec)
    values = np.where(mask, spec.fg_mean, spec.bg_mean)
    if spec.texture > 0:
        field = ndimage.gaussian_filter(rng.normal(size=mask.shape),
                                        TEXTURE_SCALE)
        peak = np.abs(field).max()
        if peak > 0:
            values = values + spec.texture * field / peak
    if spec.blur_sigma > 0:
        values = ndimage.gaussian_filter(values, spec.blur_sigma)
    if spec.noise_sigma > 0:
        values = values + rng.normal(0.0, spec.noise_sigma, mask.shape)

    lo, hi = spec.window
    hu = np.rint(lo + values * (hi - lo))
    info = np.iinfo(np.int16)
    voxels = np.clip(hu, info.min, info.max).astype(np.int16)
    return Volume(voxels, spec.spacing, spec.window), mask


def _random_spec(rng, category, noise_sigma):
    dims = (40, 40, 24)
    spacing = (1.0, 1.0, 1.5)
    angle = 0.0
    if category == SPHERE:
        semi_axes = (rng.uniform(6.0, 9.0),) * 3
    else:
        # elongated in-plane, in any direction
        a = rng.uniform(8.0, 10.5)
        semi_axes = (a, a / rng.uniform(2.0, 3.0), rng.uniform(5.0, 9.0))
        angle = rng.uniform(0.0, math.pi)
    center = ((dims[0] - 1) / 2.0 + rng.uniform(-2.0, 2.0),
              (dims[1] - 1) / 2.0 + rng.uniform(-2.0, 2.0),
              (dims[2] - 1) / 2.0)
    texture = 0.08 if category == TEXTURED else 0.0
    return PhantomSpec(dims, spacing, semi_axes, center,
                       noise_sigma=noise_sigma, texture=texture,
                       category=category, angle=angle)


def phantom_suite(n, seed, noise_sigma=0.05):
    """Return n (lesion_id, PhantomSpec, rng) triples cycling through the
    sphere, ellipsoid and textured categories. Phantom i draws from its own
    generator seeded with (seed, i), so suites of different sizes share
    their first phantoms."""
    suite = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        spec = _random_spec(rng, CATEGORIES[i % len(CATEGORIES)], noise_sigma)
        suite.append(("ph%03d" % i, spec, rng))
    return suite


def write_phantom_suite(out_dir, n=30, seed=42, noise_sigma=0.05,
                        recist_noise=0.2):
    """Generate n phantoms into out_dir.

    Writes '<id>.raw' + '<id>.json' volumes, 'gt_<id>.raw' masks and two
    annotation CSVs with a 'category' column: the last round(n / 3)
    phantoms go to 'test.csv', the others to 'train.csv'. RECIST diameters
    come from the masks with up to 'recist_noise' relative noise.
    Returns the (train, test) CSV paths.
    """
    if n < 1:
        raise PhantomSpecError("at least one phantom is required")
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    n_test = int(round(n / 3.0))
    rows = []
    for lesion_id, spec, rng in phantom_suite(n, seed, noise_sigma):
        volume, mask = generate_phantom(spec, rng)
        volume_name = lesion_id + '.raw'
        save_volume(volume, os.path.join(out_dir, volume_name))
        save_mask(mask, os.path.join(out_dir, 'gt_%s.raw' % lesion_id))
        r = extract_recist_from_mask(mask, spec.spacing, recist_noise, rng)
        rows.append((lesion_id, volume_name, r,
                     {'category': spec.category}))
        logger.debug("Wrote phantom %s (%s, semi-axes %s, angle %.2f)",
                     lesion_id, spec.category,
                     ", ".join("%.2f" % a for a in spec.semi_axes),
                     spec.angle)

    train_path = os.path.join(out_dir, 'train.csv')
    test_path = os.path.join(out_dir, 'test.csv')
    write_annotations(train_path, rows[:n - n_test], ('category',))
    write_annotations(test_path, rows[n - n_test:], ('category',))
    logger.info("Generated %d phantoms in %s (%d train, %d test)", n,
                out_dir, n - n_test, n_test)
    return train_path, test_path
