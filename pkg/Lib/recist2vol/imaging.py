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


"""CT volumes, intensity windowing and lesion ROI cropping.

Volumes are stored as raw little-endian int16 voxels (x fastest, then y, then
z) next to a JSON sidecar holding the dims, the voxel spacing and the
intensity window::

    {"dims": [nx, ny, nz], "spacing": [sx, sy, sz], "window": [lo, hi]}

In memory the voxels are a numpy array indexed ``[z, y, x]``.
"""


from __future__ import print_function, division, absolute_import

import collections
import json
import logging
import math
import os

import numpy as np

from recist2vol.errors import (
    VolumeFormatError, WindowError, RoiError, DimensionMismatchError)


__all__ = [
    'Volume', 'RoiImage', 'BBox', 'load_volume', 'save_volume', 'load_mask',
    'save_mask', 'window_intensity', 'crop_roi', 'paste_roi']

VOXEL_DTYPE = np.dtype('<i2')
MASK_DTYPE = np.dtype('u1')

logger = logging.getLogger(__name__)


class Volume(collections.namedtuple('Volume', 'voxels spacing window')):
    """A 3D intensity grid.

    voxels: numpy array indexed [z, y, x]; int16 for raw CT volumes, float64
        in [0, 1] once windowed.
    spacing: (sx, sy, sz) in mm per voxel.
    window: (lo, hi) intensity bounds used for normalization.
    """

    __slots__ = ()

    def __new__(cls, voxels, spacing, window):
        voxels = np.asarray(voxels)
        if voxels.ndim != 3 or min(voxels.shape) < 1:
            raise ValueError("volume must be a non-empty 3D array")
        spacing = tuple(float(s) for s in spacing)
        if len(spacing) != 3 or min(spacing) <= 0:
            raise ValueError("spacing must be three positive values")
        window = tuple(float(w) for w in window)
        if len(window) != 2:
            raise ValueError("window must be a (lo, hi) pair")
        if window[0] >= window[1]:
            raise WindowError(window)
        voxels.setflags(write=False)
        return super(Volume, cls).__new__(cls, voxels, spacing, window)

    @property
    def dims(self):
        nz, ny, nx = self.voxels.shape
        return nx, ny, nz

    @property
    def normalized(self):
        return self.voxels.dtype.kind == 'f'


class RoiImage(collections.namedtuple('RoiImage', 'pixels origin spacing')):
    """A normalized 2D crop of one axial slice.

    pixels: float array indexed [y, x] with values in [0, 1].
    origin: (x0, y0, z) offset of pixels[0, 0] in the parent volume.
    spacing: (sx, sy) in mm per pixel.
    """

    __slots__ = ()

    def __new__(cls, pixels, origin, spacing):
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 2 or min(pixels.shape) < 1:
            raise ValueError("ROI must be a non-empty 2D array")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("ROI pixels must be normalized to [0, 1]")
        pixels.setflags(write=False)
        origin = tuple(int(o) for o in origin)
        spacing = tuple(float(s) for s in spacing[:2])
        return super(RoiImage, cls).__new__(cls, pixels, origin, spacing)

    @property
    def dims(self):
        h, w = self.pixels.shape
        return w, h

    @property
    def shape(self):
        return self.pixels.shape

    def to_local(self, points):
        """Map (x, y) points of the parent slice into this ROI's grid."""
        x0, y0 = self.origin[:2]
        return [(x - x0, y - y0) for x, y in points]


class BBox(collections.namedtuple('BBox', 'x y w h')):
    """Axis-aligned box with top-left pixel (x, y) and extent (w, h)."""

    __slots__ = ()

    @property
    def center(self):
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    @property
    def area(self):
        return self.w * self.h


def _sidecar_paths(path):
    root, ext = os.path.splitext(path)
    if ext.lower() not in ('.raw', '.json'):
        root = path
    return root + '.raw', root + '.json'


def _numbers(value, length):
    """True if value is a JSON array of 'length' finite numbers."""
    return (isinstance(value, list) and len(value) == length and
            all(isinstance(v, (int, float)) and not isinstance(v, bool) and
                math.isfinite(v) for v in value))


def _read_header(json_path):
    try:
        with open(json_path, 'r') as fp:
            header = json.load(fp)
    except IOError:
        raise VolumeFormatError(json_path, "missing JSON header")
    except ValueError as e:
        raise VolumeFormatError(json_path, "unreadable JSON header: %s" % e)
    if not isinstance(header, dict):
        raise VolumeFormatError(json_path, "header is not a JSON object")
    for key in ('dims', 'spacing', 'window'):
        if key not in header:
            raise VolumeFormatError(json_path, "header lacks %r" % key)
    dims = header['dims']
    if not _numbers(dims, 3) or any(int(n) != n or n < 1 for n in dims):
        raise VolumeFormatError(json_path, "inconsistent dims %r" % (dims,))
    if not _numbers(header['spacing'], 3) or not _numbers(header['window'], 2):
        raise VolumeFormatError(json_path, "inconsistent spacing or window")
    header['dims'] = [int(n) for n in dims]
    return header


def _read_raw(raw_path, dims, dtype):
    try:
        with open(raw_path, 'rb') as fp:
            data = fp.read()
    except IOError:
        raise VolumeFormatError(raw_path, "missing raw voxel file")
    nx, ny, nz = dims
    expected = nx * ny * nz * dtype.itemsize
    if len(data) != expected:
        raise VolumeFormatError(
            raw_path, "byte count mismatch: expected %d, found %d"
            % (expected, len(data)))
    return np.frombuffer(data, dtype=dtype).reshape(nz, ny, nx)


def load_volume(path):
    """Load a volume from '<name>.raw' and its '<name>.json' sidecar.

    Either file name (or the bare '<name>') may be given.
    """
    raw_path, json_path = _sidecar_paths(path)
    header = _read_header(json_path)
    voxels = _read_raw(raw_path, header['dims'], VOXEL_DTYPE)
    try:
        volume = Volume(voxels.astype(np.int16), header['spacing'],
                        header['window'])
    except (ValueError, WindowError) as e:
        raise VolumeFormatError(json_path, str(e))
    logger.debug("Loaded %s: dims=%r spacing=%r", raw_path, volume.dims,
                 volume.spacing)
    return volume


def _write_header(json_path, dims, spacing, window):
    header = collections.OrderedDict([
        ('dims', [int(n) for n in dims]),
        ('spacing', [float(s) for s in spacing]),
        ('window', [float(w) for w in window]),
    ])
    with open(json_path, 'w') as fp:
        json.dump(header, fp)
        fp.write('\n')


def save_volume(volume, path):
    """Write a raw (int16) volume as '<name>.raw' + '<name>.json'."""
    if volume.normalized:
        raise VolumeFormatError(path, "only int16 volumes can be saved")
    raw_path, json_path = _sidecar_paths(path)
    with open(raw_path, 'wb') as fp:
        fp.write(volume.voxels.astype(VOXEL_DTYPE).tobytes())
    _write_header(json_path, volume.dims, volume.spacing, volume.window)
    return raw_path


def load_mask(path, dims):
    """Load a raw uint8 mask (0=background, 1=foreground) of the given
    (nx, ny, nz) dims as a boolean [z, y, x] array.
    """
    return _read_raw(path, dims, MASK_DTYPE) != 0


def save_mask(mask, path):
    mask = np.asarray(mask)
    with open(path, 'wb') as fp:
        fp.write((mask != 0).astype(MASK_DTYPE).tobytes())
    return path


def _check_window(window):
    lo, hi = window
    if not lo < hi:
        raise WindowError(window)
    return lo, hi


def _window_array(voxels, window):
    lo, hi = _check_window(window)
    out = (np.asarray(voxels, dtype=np.float64) - lo) / (hi - lo)
    return np.clip(out, 0.0, 1.0)


def window_intensity(volume):
    """Return a normalized copy of volume: clamp((x - lo) / (hi - lo), 0, 1).

    Already normalized volumes are returned unchanged.
    """
    if volume.normalized:
        return volume
    return Volume(_window_array(volume.voxels, volume.window), volume.spacing,
                  volume.window)


def crop_roi(volume, lesion_bbox, slice_index):
    """Crop a (2w, 2h) ROI of one axial slice centered on the lesion bbox.

    Crops reaching past the volume edge are clamped (not padded) and the
    clamped origin is recorded on the returned RoiImage. Raw volumes are
    windowed on the fly.
    """
    nx, ny, nz = volume.dims
    if not 0 <= slice_index < nz:
        raise RoiError("slice %d out of range [0, %d)" % (slice_index, nz))
    x, y, w, h = lesion_bbox
    if w < 1 or h < 1:
        raise RoiError("degenerate lesion bbox %r" % (tuple(lesion_bbox),))
    if x + w <= 0 or y + h <= 0 or x >= nx or y >= ny:
        raise RoiError("lesion bbox %r lies outside the %dx%d image"
                       % (tuple(lesion_bbox), nx, ny))

    x0 = int(math.floor(x - w / 2.0))
    y0 = int(math.floor(y - h / 2.0))
    x1 = x0 + 2 * int(math.ceil(w))
    y1 = y0 + 2 * int(math.ceil(h))
    x0, y0 = max(x0, 0), max(y0, 0)
    x1, y1 = min(x1, nx), min(y1, ny)

    pixels = volume.voxels[slice_index, y0:y1, x0:x1]
    if not volume.normalized:
        pixels = _window_array(pixels, volume.window)
    return RoiImage(pixels, (x0, y0, slice_index), volume.spacing[:2])


def paste_roi(roi_values, roi, slice_shape, fill=0):
    """Inverse of crop_roi: place an ROI-sized array back into a slice grid
    of shape (ny, nx), filling the rest with 'fill'.
    """
    roi_values = np.asarray(roi_values)
    if roi_values.shape != roi.shape:
        raise DimensionMismatchError(roi_values.shape, roi.shape)
    out = np.full(slice_shape, fill, dtype=roi_values.dtype)
    x0, y0 = roi.origin[:2]
    h, w = roi.shape
    out[y0:y0 + h, x0:x0 + w] = roi_values
    return out
