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


"""Pixel-probability model trained from imperfect masks and RECIST marks.

Every training image splits its pixels into three regions: the rasterized
RECIST diameters R (always foreground), the rest of the mask's foreground F
and its background B. The loss of a probability map y is

    L = mean_R(-log y) + alpha * mean_F(-log y) + beta * mean_B(-log(1 - y))

with alpha and beta ramped up during training, so the model first trusts the
RECIST marks and only later the GrabCut labels around them.

The built-in predictor is a one-hidden-layer network over a dozen per-pixel
features (intensity, local box statistics, gradient magnitude, position),
standardized with statistics of the pixels it was trained on. Anything
with a 'predict(roi)' method returning a probability map can stand in for
it.
"""


from __future__ import print_function, division, absolute_import

import collections
import json
import logging
import math
import struct

import numpy as np
from scipy import ndimage
from fontTools.misc.loggingTools import Timer

from recist2vol.errors import (
    EmptyRegionError, EmptyDatasetError, ModelFormatError,
    DimensionMismatchError)
from recist2vol.grabcut import grabcut
from recist2vol.recist import rasterize
from recist2vol.seedgen import seeds_off_slice


__all__ = [
    'RegionPartition', 'LossConfig', 'Predictor', 'MlpModel',
    'partition_from_mask', 'loss', 'loss_gradient', 'raw_features',
    'extract_features', 'train', 'predict', 'refine_with_grabcut',
    'save_model', 'load_model']

EPS = 1e-7

RADII = (1, 2, 4, 8)
N_FEATURES = 1 + 2 * len(RADII) + 1 + 2
HIDDEN_UNITS = 32
FEATURE_SPEC = collections.OrderedDict([
    ('radii', list(RADII)),
    ('n_features', N_FEATURES),
    ('hidden_units', HIDDEN_UNITS),
])

BATCH_SIZE = 64
LEARNING_RATE = 1e-2
PLATEAU_TOLERANCE = 1e-4
PLATEAU_PATIENCE = 2

MODEL_MAGIC = b"R2VM"
MODEL_VERSION = 1
_PARAM_NAMES = ('W1', 'b1', 'W2', 'b2')

logger = logging.getLogger(__name__)


class RegionPartition(collections.namedtuple(
        'RegionPartition', 'recist_idx fg_idx bg_idx shape')):
    """Flat pixel indices of the RECIST, foreground and background regions
    of an image of the given (h, w) shape."""

    __slots__ = ()

    def __new__(cls, recist_idx, fg_idx, bg_idx, shape):
        n = shape[0] * shape[1]
        sets = []
        for idx in (recist_idx, fg_idx, bg_idx):
            idx = np.asarray(idx, dtype=np.intp).ravel()
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise ValueError("region index out of bounds")
            sets.append(idx)
        r, f, b = sets
        if (np.intersect1d(r, f).size or np.intersect1d(r, b).size or
                np.intersect1d(f, b).size):
            raise ValueError("regions must be pairwise disjoint")
        return super(RegionPartition, cls).__new__(
            cls, r, f, b, tuple(shape))


def partition_from_mask(y, r, origin=(0, 0)):
    """Split a binary mask into RECIST, foreground and background regions;
    RECIST pixels take precedence over the mask's label."""
    y = np.asarray(y, dtype=bool)
    recist_pixels = rasterize(r, y.shape, origin).ravel()
    flat = y.ravel()
    return RegionPartition(
        np.flatnonzero(recist_pixels),
        np.flatnonzero(flat & ~recist_pixels),
        np.flatnonzero(~flat & ~recist_pixels),
        y.shape)


class LossConfig(collections.namedtuple('LossConfig', 'alpha beta ramp')):
    """Weights of the F and B loss terms and their ramp schedule.

    ramp is (start, end, fraction): the multiplier of alpha and beta goes
    linearly from start to end over the first 'fraction' of the epochs and
    stays at end afterwards.
    """

    __slots__ = ()

    def __new__(cls, alpha=1.0, beta=1.0, ramp=(0.1, 1.0, 0.5)):
        if alpha < 0 or beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        start, end, fraction = (float(v) for v in ramp)
        if start > end:
            raise ValueError("ramp must not decrease")
        if not 0 < fraction <= 1:
            raise ValueError("ramp fraction must be in (0, 1]")
        return super(LossConfig, cls).__new__(
            cls, float(alpha), float(beta), (start, end, fraction))

    def multiplier(self, epoch, epochs):
        start, end, fraction = self.ramp
        length = fraction * epochs
        if length <= 0 or epoch >= length:
            return end
        return start + (end - start) * epoch / length

    def at(self, epoch, epochs):
        """The fixed-weight config in effect at 'epoch' of 'epochs'."""
        m = self.multiplier(epoch, epochs)
        return LossConfig(self.alpha * m, self.beta * m, (1.0, 1.0, 1.0))


def _check_regions(part):
    if not len(part.recist_idx):
        raise EmptyRegionError("no RECIST pixels in the loss regions")
    for name, idx in (('foreground', part.fg_idx),
                      ('background', part.bg_idx)):
        if not len(idx):
            logger.warning("empty %s region; its loss term is zero", name)


def _region_loss(yhat, part, cfg):
    y = np.clip(yhat.ravel(), EPS, 1 - EPS)
    total = -np.log(y[part.recist_idx]).mean()
    if len(part.fg_idx):
        total += cfg.alpha * -np.log(y[part.fg_idx]).mean()
    if len(part.bg_idx):
        total += cfg.beta * -np.log(1 - y[part.bg_idx]).mean()
    return float(total)


def loss(yhat, part, cfg):
    """Region-partitioned loss of a probability map (fixed alpha, beta)."""
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.shape != part.shape:
        raise DimensionMismatchError(yhat.shape, part.shape)
    _check_regions(part)
    return _region_loss(yhat, part, cfg)


def loss_gradient(yhat, part, cfg):
    """dL/dy per pixel; zero where the probability is clamped."""
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.shape != part.shape:
        raise DimensionMismatchError(yhat.shape, part.shape)
    _check_regions(part)
    y = yhat.ravel()
    grad = np.zeros_like(y)
    r, f, b = part.recist_idx, part.fg_idx, part.bg_idx
    grad[r] = -1.0 / (len(r) * y[r])
    if len(f):
        grad[f] = -cfg.alpha / (len(f) * y[f])
    if len(b):
        grad[b] = cfg.beta / (len(b) * (1 - y[b]))
    grad[(y < EPS) | (y > 1 - EPS)] = 0.0
    return grad.reshape(yhat.shape)


def raw_features(roi):
    """Unstandardized per-pixel features, shape (h, w, 12)."""
    x = np.asarray(getattr(roi, 'pixels', roi), dtype=np.float64)
    h, w = x.shape
    features = [x]
    means = []
    stds = []
    for radius in RADII:
        size = 2 * radius + 1
        mean = ndimage.uniform_filter(x, size, mode='nearest')
        mean_sq = ndimage.uniform_filter(x * x, size, mode='nearest')
        means.append(mean)
        stds.append(np.sqrt(np.maximum(mean_sq - mean * mean, 0.0)))
    features.extend(means)
    features.extend(stds)
    features.append(np.hypot(ndimage.sobel(x, 0, mode='nearest'),
                             ndimage.sobel(x, 1, mode='nearest')))
    ys, xs = np.indices(x.shape, dtype=np.float64)
    features.append((xs - (w - 1) / 2.0) / max(w / 2.0, 1.0))
    features.append((ys - (h - 1) / 2.0) / max(h / 2.0, 1.0))
    return np.stack(features, axis=-1)


def _standardization(flat):
    """(mean, std) of feature rows; std is 1 where a feature is constant."""
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    return mean, np.where(std < 1e-8, 1.0, std)


def extract_features(roi, standardization=None):
    """Standardized per-pixel features, shape (h, w, 12).

    Without 'standardization' every feature is standardized over the ROI
    and features that are (numerically) constant over it are set to 0.
    Otherwise the given (mean, std) vectors are applied, so that the same
    intensity maps to the same value in every ROI.
    """
    f = raw_features(roi)
    if standardization is not None:
        mean, std = standardization
        return (f - mean) / std
    flat = f.reshape(-1, f.shape[-1])
    mean, std = _standardization(flat)
    out = (f - mean) / std
    out[..., flat.std(axis=0) < 1e-8] = 0.0
    return out


def _softplus(z):
    return np.logaddexp(0.0, z)


class Predictor(object):
    """Interface of pixel-probability models: predict(roi) returns an array
    of the ROI's shape with values in [0, 1]."""

    kind = None

    def predict(self, roi):
        raise NotImplementedError


class MlpModel(Predictor):
    """12 -> 32 (tanh) -> 1 (logistic) network over extract_features.

    'standardization' is the (mean, std) pair of feature vectors fixed at
    training time; a model without one standardizes each ROI on its own.
    """

    kind = 'mlp'

    def __init__(self, params, feature_spec=None, standardization=None):
        self.feature_spec = collections.OrderedDict(
            feature_spec or FEATURE_SPEC)
        n_in = self.feature_spec['n_features']
        n_hidden = self.feature_spec['hidden_units']
        shapes = {'W1': (n_in, n_hidden), 'b1': (n_hidden,),
                  'W2': (n_hidden,), 'b2': ()}
        self.params = collections.OrderedDict()
        for name in _PARAM_NAMES:
            value = np.array(params[name], dtype=np.float64)
            if value.shape != shapes[name]:
                raise ModelFormatError(
                    "parameter %s has shape %r, expected %r"
                    % (name, value.shape, shapes[name]))
            self.params[name] = value
        if standardization is not None:
            mean, std = (np.array(v, dtype=np.float64)
                         for v in standardization)
            if mean.shape != (n_in,) or std.shape != (n_in,):
                raise ModelFormatError("standardization must have %d entries"
                                       % n_in)
            if not (std > 0).all():
                raise ModelFormatError("standardization scales must be "
                                       "positive")
            standardization = mean, std
        self.standardization = standardization

    @classmethod
    def initialize(cls, rng, feature_spec=None):
        spec = feature_spec or FEATURE_SPEC
        n_in = spec['n_features']
        n_hidden = spec['hidden_units']
        return cls({
            'W1': rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, n_hidden)),
            'b1': np.zeros(n_hidden),
            'W2': rng.normal(0.0, 1.0 / math.sqrt(n_hidden), n_hidden),
            'b2': np.zeros(()),
        }, spec)

    def copy(self):
        return MlpModel(self.params, self.feature_spec, self.standardization)

    @property
    def n_params(self):
        return sum(v.size for v in self.params.values())

    def logits(self, X):
        p = self.params
        hidden = np.tanh(np.dot(X, p['W1']) + p['b1'])
        return np.dot(hidden, p['W2']) + p['b2'], hidden

    def predict_features(self, X):
        z, _ = self.logits(X)
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def predict(self, roi):
        f = extract_features(roi, self.standardization)
        return self.predict_features(f.reshape(-1, f.shape[-1])).reshape(
            f.shape[:-1])

    def loss_and_gradients(self, X, targets, weights):
        """Weighted binary cross-entropy sum(w * ce(t, p)) and its gradients
        with respect to every parameter."""
        p = self.params
        z, hidden = self.logits(X)
        value = np.dot(weights, np.where(targets > 0, _softplus(-z),
                                         _softplus(z)))
        dz = weights * (0.5 * (1.0 + np.tanh(0.5 * z)) - targets)
        dhidden = np.outer(dz, p['W2']) * (1 - hidden * hidden)
        grads = collections.OrderedDict([
            ('W1', np.dot(X.T, dhidden)),
            ('b1', dhidden.sum(axis=0)),
            ('W2', np.dot(hidden.T, dz)),
            ('b2', np.array(dz.sum())),
        ])
        return float(value), grads


def predict(m, roi):
    """Probability map of a predictor on an ROI."""
    prob = np.asarray(m.predict(roi), dtype=np.float64)
    shape = getattr(roi, 'shape', np.shape(roi))
    if prob.shape != tuple(shape):
        raise DimensionMismatchError(prob.shape, shape)
    assert prob.min() >= 0.0 and prob.max() <= 1.0, \
        "probabilities outside [0, 1]"
    return prob


def _pixel_weights(parts, cfg):
    """Per-pixel loss weights and targets of every image, concatenated so
    that sum(w * ce) equals the mean over images of the region loss."""
    weights = []
    targets = []
    n_images = len(parts)
    for part in parts:
        n = part.shape[0] * part.shape[1]
        w = np.zeros(n)
        t = np.zeros(n)
        w[part.recist_idx] = 1.0 / len(part.recist_idx)
        t[part.recist_idx] = 1.0
        if len(part.fg_idx):
            w[part.fg_idx] = cfg.alpha / len(part.fg_idx)
            t[part.fg_idx] = 1.0
        if len(part.bg_idx):
            w[part.bg_idx] = cfg.beta / len(part.bg_idx)
        weights.append(w / n_images)
        targets.append(t)
    return np.concatenate(weights), np.concatenate(targets)


def _dataset_loss(model, features, parts, cfg):
    total = 0.0
    for X, part in zip(features, parts):
        total += _region_loss(model.predict_features(X), part, cfg)
    return total / len(parts)


def train(data, cfg, epochs, rng, stats=None, init=None):
    """Train the built-in predictor on (RoiImage, RegionPartition) pairs.

    Mini-batch SGD draws pixels with probability proportional to their loss
    weight at the current ramp step. The learning rate halves whenever
    PLATEAU_PATIENCE epochs in a row past the ramp fail to lower the loss.
    Features are standardized with the statistics of all training pixels.
    'init' warm-starts from an existing MlpModel and keeps its
    standardization.

    If 'stats' is a dict, the dataset loss (under the final ramp weights)
    before training and after every epoch is stored under stats['loss'].
    """
    data = list(data)
    if not data:
        raise EmptyDatasetError("no training images")
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    for _, part in data:
        _check_regions(part)

    raw = []
    for roi, part in data:
        f = raw_features(roi)
        if f.shape[:-1] != part.shape:
            raise DimensionMismatchError(f.shape[:-1], part.shape)
        raw.append(f.reshape(-1, f.shape[-1]))
    parts = [part for _, part in data]

    model = init.copy() if init is not None else MlpModel.initialize(rng)
    if model.standardization is None:
        model.standardization = _standardization(np.concatenate(raw))
    mean, std = model.standardization
    features = [(f - mean) / std for f in raw]
    X_all = np.concatenate(features)
    final_cfg = cfg.at(epochs, epochs)
    history = [_dataset_loss(model, features, parts, final_cfg)]
    lr = LEARNING_RATE
    best = history[0]
    stalled = 0
    n_steps = int(math.ceil(len(X_all) / BATCH_SIZE))

    with Timer(logger, "train on %d images for %d epochs"
               % (len(data), epochs)):
        for epoch in range(epochs):
            weights, targets = _pixel_weights(parts, cfg.at(epoch, epochs))
            total_weight = weights.sum()
            probabilities = weights / total_weight
            for _ in range(n_steps):
                batch = rng.choice(len(X_all), size=BATCH_SIZE,
                                   p=probabilities)
                _, grads = model.loss_and_gradients(
                    X_all[batch], targets[batch],
                    np.full(BATCH_SIZE, total_weight / BATCH_SIZE))
                for name, g in grads.items():
                    model.params[name] -= lr * g
            current = _dataset_loss(model, features, parts, final_cfg)
            history.append(current)
            past_ramp = (epoch + 1) >= cfg.ramp[2] * epochs
            if current > best * (1 - PLATEAU_TOLERANCE):
                stalled += 1
            else:
                stalled = 0
            if past_ramp and stalled >= PLATEAU_PATIENCE:
                lr /= 2.0
                stalled = 0
                logger.debug("Epoch %d: loss plateau, learning rate %g",
                             epoch + 1, lr)
            best = min(best, current)
            logger.debug("Epoch %d/%d: loss %.6f", epoch + 1, epochs,
                         current)

    if stats is not None:
        stats.setdefault('loss', []).extend(history)
    return model


def refine_with_grabcut(roi, prob, r, p=None):
    """'-GC' post-processing: seeds from the probability map and RECIST
    estimate, then GrabCut."""
    return grabcut(roi, seeds_off_slice(roi, prob, r), p)


def save_model(m, path):
    """Write a model as b"R2VM", version and header length (uint16, uint32
    little-endian), a JSON header, then float64 little-endian parameters.

    The feature standardization, if any, is kept in the header as lists of
    floats, which JSON round-trips exactly.
    """
    standardization = None
    if m.standardization is not None:
        mean, std = m.standardization
        standardization = collections.OrderedDict([
            ('mean', [float(v) for v in mean]),
            ('std', [float(v) for v in std])])
    header = collections.OrderedDict([
        ('kind', m.kind),
        ('feature_spec', m.feature_spec),
        ('standardization', standardization),
        ('params', [[name, list(m.params[name].shape)]
                    for name in _PARAM_NAMES]),
    ])
    blob = json.dumps(header).encode('utf-8')
    with open(path, 'wb') as fp:
        fp.write(MODEL_MAGIC)
        fp.write(struct.pack('<HI', MODEL_VERSION, len(blob)))
        fp.write(blob)
        for name in _PARAM_NAMES:
            fp.write(m.params[name].astype('<f8').tobytes())
    return path


def load_model(path):
    with open(path, 'rb') as fp:
        data = fp.read()
    if data[:4] != MODEL_MAGIC:
        raise ModelFormatError("%s: not a model file" % path)
    try:
        version, size = struct.unpack('<HI', data[4:10])
        header = json.loads(data[10:10 + size].decode('utf-8'),
                            object_pairs_hook=collections.OrderedDict)
    except (struct.error, ValueError) as e:
        raise ModelFormatError("%s: unreadable header: %s" % (path, e))
    if version != MODEL_VERSION:
        raise ModelFormatError("%s: unsupported version %d" % (path, version))
    if header.get('kind') != MlpModel.kind:
        raise ModelFormatError("%s: unknown model kind %r"
                               % (path, header.get('kind')))
    if header.get('feature_spec') != FEATURE_SPEC:
        raise ModelFormatError("%s: feature spec %r does not match %r"
                               % (path, header.get('feature_spec'),
                                  dict(FEATURE_SPEC)))

    names = [name for name, _ in header.get('params', [])]
    if names != list(_PARAM_NAMES):
        raise ModelFormatError("%s: unexpected parameters %r" % (path, names))
    params = {}
    offset = 10 + size
    for name, shape in header['params']:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise ModelFormatError("%s: truncated parameters" % path)
        params[name] = np.frombuffer(
            data[offset:end], dtype='<f8').reshape(shape).astype(np.float64)
        offset = end
    if offset != len(data):
        raise ModelFormatError("%s: %d trailing bytes"
                               % (path, len(data) - offset))
    standardization = header.get('standardization')
    if standardization is not None:
        try:
            standardization = standardization['mean'], standardization['std']
        except (KeyError, TypeError):
            raise ModelFormatError("%s: malformed standardization" % path)
    try:
        return MlpModel(params, header['feature_spec'], standardization)
    except (ValueError, TypeError) as e:
        raise ModelFormatError("%s: %s" % (path, e))
