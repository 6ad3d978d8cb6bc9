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


"""Slice-propagated training and volumetric segmentation.

Training starts on the RECIST slices with GrabCut labels. Stage j then
predicts on the slices j away from every RECIST slice, turns the predictions
into GrabCut labels around the propagated diameters and retrains on all
slices labeled so far. At inference the per-slice procedure walks away from
the RECIST slice in both directions and stacks the slice masks.

All ROIs of a lesion are cropped with the bounding box of its original
RECIST annotation, so every slice of a lesion shares one grid.
"""


from __future__ import print_function, division, absolute_import

import collections
import json
import logging
import multiprocessing as mp
import os
from contextlib import closing
from functools import partial

import numpy as np
from fontTools.misc.loggingTools import Timer

from recist2vol.errors import (
    AnnotationError, EmptyDatasetError, DimensionMismatchError)
from recist2vol.grabcut import GrabCutParams, grabcut
from recist2vol.imaging import (
    load_volume, load_mask, save_mask, crop_roi, paste_roi)
from recist2vol.learner import (
    LossConfig, partition_from_mask, train, predict, refine_with_grabcut,
    save_model)
from recist2vol.metrics import dice
from recist2vol.recist import bbox_of, propagate, read_annotations
from recist2vol.seedgen import (
    seeds_from_recist, seeds_off_slice, recist_d_mask)


__all__ = [
    'Lesion', 'Dataset', 'WsssConfig', 'LABEL_SOURCES', 'lesion_roi',
    'slice_labels', 'grabcut_3de', 'wsss_train', 'segment_volume',
    'predict_volume', 'offset_dice', 'map_lesions']

GRABCUT_R = 'grabcut-r'
RECIST_D = 'recist-d'
GROUND_TRUTH = 'gt'
LABEL_SOURCES = (GRABCUT_R, RECIST_D, GROUND_TRUTH)

logger = logging.getLogger(__name__)


class Lesion(collections.namedtuple(
        'Lesion', 'lesion_id volume annotation gt_mask category')):
    """A volume with one RECIST-annotated lesion; gt_mask and category are
    optional."""

    __slots__ = ()

    def __new__(cls, lesion_id, volume, annotation, gt_mask=None,
                category=None):
        nz = volume.voxels.shape[0]
        if not 0 <= annotation.slice_index < nz:
            raise AnnotationError(
                "%s: RECIST slice %d out of range [0, %d)"
                % (lesion_id, annotation.slice_index, nz))
        if gt_mask is not None:
            gt_mask = np.asarray(gt_mask, dtype=bool)
            if gt_mask.shape != volume.voxels.shape:
                raise DimensionMismatchError(gt_mask.shape,
                                             volume.voxels.shape)
        return super(Lesion, cls).__new__(
            cls, lesion_id, volume, annotation, gt_mask, category)


class Dataset(object):
    """An ordered collection of Lesions."""

    def __init__(self, lesions):
        self.lesions = list(lesions)
        if not self.lesions:
            raise EmptyDatasetError("dataset has no lesions")

    def __len__(self):
        return len(self.lesions)

    def __iter__(self):
        return iter(self.lesions)

    def __getitem__(self, i):
        return self.lesions[i]

    @property
    def has_ground_truth(self):
        return all(l.gt_mask is not None for l in self.lesions)

    @property
    def categories(self):
        return dict((l.lesion_id, l.category) for l in self.lesions
                    if l.category)

    @classmethod
    def from_csv(cls, path):
        """Load an annotation CSV and the volumes it references. Ground
        truth is read from 'gt_<lesion_id>.raw' next to each volume when
        present."""
        lesions = []
        for record in read_annotations(path):
            volume = load_volume(record.volume_path)
            gt_path = os.path.join(os.path.dirname(record.volume_path),
                                   'gt_%s.raw' % record.lesion_id)
            gt = load_mask(gt_path, volume.dims) \
                if os.path.exists(gt_path) else None
            lesions.append(Lesion(
                record.lesion_id, volume, record.annotation(volume.spacing),
                gt, record.category))
        logger.info("Loaded %d lesions from %s", len(lesions), path)
        return cls(lesions)


class WsssConfig(collections.namedtuple(
        'WsssConfig',
        'k_slices epochs grabcut loss seed label_source jobs')):
    """Training setup. k_slices is the (odd) number of slices per lesion the
    model is trained on; label_source picks the RECIST-slice labels."""

    __slots__ = ()

    def __new__(cls, k_slices=5, epochs=20, grabcut=None, loss=None,
                seed=42, label_source=GRABCUT_R, jobs=1):
        if k_slices < 1 or k_slices % 2 != 1:
            raise ValueError("k_slices must be odd and >= 1")
        if epochs < 0:
            raise ValueError("epochs must be >= 0")
        if label_source not in LABEL_SOURCES:
            raise ValueError("unknown label source %r" % (label_source,))
        if jobs < 1:
            raise ValueError("jobs must be >= 1")
        return super(WsssConfig, cls).__new__(
            cls, int(k_slices), int(epochs),
            grabcut if grabcut is not None else GrabCutParams(),
            loss if loss is not None else LossConfig(),
            int(seed), label_source, int(jobs))

    @property
    def n_stages(self):
        return (self.k_slices - 1) // 2


def lesion_roi(volume, r, slice_index):
    """The ROI of slice 'slice_index' on the grid of RECIST annotation r."""
    return crop_roi(volume, bbox_of(r), slice_index)


def _propagated(volume, r, offset):
    rhat = propagate(r, offset)
    if rhat is None or not 0 <= rhat.slice_index < volume.voxels.shape[0]:
        return None
    return rhat


def slice_labels(lesion, offset, model=None, p=None,
                 label_source=GRABCUT_R):
    """Training label of one slice: (roi, rhat, mask), or None when the
    propagation has terminated there.

    On the RECIST slice the label comes from 'label_source'; off the RECIST
    slice it is GrabCut seeded from the model's prediction. With
    label_source 'gt' every slice uses the ground truth instead.
    """
    volume, r = lesion.volume, lesion.annotation
    rhat = _propagated(volume, r, offset)
    if rhat is None:
        return None
    roi = lesion_roi(volume, r, rhat.slice_index)
    if label_source == GROUND_TRUTH:
        if lesion.gt_mask is None:
            raise EmptyDatasetError("%s has no ground truth"
                                    % lesion.lesion_id)
        x0, y0, z = roi.origin
        h, w = roi.shape
        mask = lesion.gt_mask[z, y0:y0 + h, x0:x0 + w]
    elif offset == 0:
        if label_source == RECIST_D:
            mask = recist_d_mask(roi, r)
        else:
            mask = grabcut(roi, seeds_from_recist(roi, rhat), p)
    else:
        seeds = seeds_off_slice(roi, predict(model, roi), rhat)
        mask = grabcut(roi, seeds, p)
    return roi, rhat, np.asarray(mask, dtype=bool)


def _lesion_labels(lesion, offsets, model, p, label_source):
    labels = []
    for offset in offsets:
        label = slice_labels(lesion, offset, model, p, label_source)
        if label is not None:
            labels.append((lesion.lesion_id, offset) + label)
    return labels


def map_lesions(func, lesions, jobs):
    """Apply func to every lesion, in order, using up to 'jobs' processes."""
    jobs = min(len(lesions), jobs) if jobs > 1 else 1
    if jobs > 1:
        logger.info('Running %d parallel processes', jobs)
        with closing(mp.Pool(jobs)) as pool:
            return pool.map(func, lesions)
    return [func(lesion) for lesion in lesions]


def _write_checkpoint(checkpoint_dir, stage, model, labels):
    stage_dir = os.path.join(checkpoint_dir, 'stage_%d' % stage)
    label_dir = os.path.join(stage_dir, 'labels')
    if not os.path.isdir(label_dir):
        os.makedirs(label_dir)
    save_model(model, os.path.join(stage_dir, 'model.bin'))
    for lesion_id, offset, roi, _, mask in labels:
        name = os.path.join(label_dir, '%s_%d' % (lesion_id, offset))
        save_mask(mask, name + '.raw')
        h, w = roi.shape
        with open(name + '.json', 'w') as fp:
            json.dump(collections.OrderedDict([
                ('dims', [w, h]),
                ('origin', list(roi.origin)),
            ]), fp)
            fp.write('\n')
    logger.debug("Wrote stage %d checkpoint to %s", stage, stage_dir)


def _as_training_data(labels):
    return [(roi, partition_from_mask(mask, rhat, roi.origin))
            for _, _, roi, rhat, mask in labels]


def wsss_train(data, cfg=None, checkpoint_dir=None, stats=None):
    """Train a model on k_slices slices per lesion, in (k_slices + 1) / 2
    stages.

    Off-slice labels are regenerated at every stage from the current
    model. The run is deterministic for a fixed cfg.seed, regardless of
    cfg.jobs. If 'stats' is a dict, per-stage label counts are appended to
    stats['labels'] and training losses to stats['loss'].
    """
    if cfg is None:
        cfg = WsssConfig()
    lesions = list(data)
    if not lesions:
        raise EmptyDatasetError("no lesions to train on")
    rng = np.random.default_rng(cfg.seed)

    with Timer(logger, "label %d RECIST slices" % len(lesions)):
        per_lesion = map_lesions(
            partial(_lesion_labels, offsets=(0,), model=None, p=cfg.grabcut,
                    label_source=cfg.label_source),
            lesions, cfg.jobs)
    recist_labels = [label for labels in per_lesion for label in labels]
    with Timer(logger, "train stage 0", level=logging.INFO):
        model = train(_as_training_data(recist_labels), cfg.loss, cfg.epochs,
                      rng, stats)
    if stats is not None:
        stats.setdefault('labels', []).append(len(recist_labels))
    if checkpoint_dir:
        _write_checkpoint(checkpoint_dir, 0, model, recist_labels)

    for stage in range(1, cfg.n_stages + 1):
        offsets = [o for k in range(1, stage + 1) for o in (-k, k)]
        with Timer(logger, "label stage %d slices" % stage):
            per_lesion = map_lesions(
                partial(_lesion_labels, offsets=offsets, model=model,
                        p=cfg.grabcut, label_source=cfg.label_source),
                lesions, cfg.jobs)
        off_labels = [label for labels in per_lesion for label in labels]
        labels = recist_labels + off_labels
        logger.info("Stage %d: %d labeled slices", stage, len(labels))
        with Timer(logger, "train stage %d" % stage, level=logging.INFO):
            model = train(_as_training_data(labels), cfg.loss, cfg.epochs,
                          rng, stats, init=model)
        if stats is not None:
            stats['labels'].append(len(labels))
        if checkpoint_dir:
            _write_checkpoint(checkpoint_dir, stage, model, off_labels)
    return model


def _walk_offsets(volume, r):
    """Yield propagated RECIST estimates at offsets 0, 1, 2, ... and then
    -1, -2, ..., a direction ending at termination or the volume edge.
    The generator's send() value stops the current direction when true."""
    rhat = _propagated(volume, r, 0)
    yield rhat
    for step in (1, -1):
        offset = step
        while True:
            rhat = _propagated(volume, r, offset)
            if rhat is None:
                break
            stop = yield rhat
            if stop:
                break
            offset += step


def _stack(volume, r, segment_slice, stop_on_empty=False):
    out = np.zeros(volume.voxels.shape, dtype=bool)
    slice_shape = volume.voxels.shape[1:]
    walk = _walk_offsets(volume, r)
    rhat = next(walk)
    while True:
        roi = lesion_roi(volume, r, rhat.slice_index)
        mask = np.asarray(segment_slice(roi, rhat), dtype=bool)
        empty = not mask.any()
        if stop_on_empty and empty and rhat.offset == 0:
            break
        if not (stop_on_empty and empty):
            out[rhat.slice_index] = paste_roi(mask, roi, slice_shape, False)
        try:
            rhat = walk.send(stop_on_empty and empty)
        except StopIteration:
            break
    return out


def grabcut_3de(v, r, p=None):
    """GrabCut-3DE: GrabCut on every slice reached by RECIST propagation,
    seeded from the propagated diameters alone."""
    with Timer(logger, "run GrabCut-3DE"):
        return _stack(v, r, lambda roi, rhat: grabcut(
            roi, seeds_from_recist(roi, rhat), p))


def segment_volume(m, v, r, cfg=None, refine=False):
    """Segment a lesion slice by slice from the RECIST slice outwards.

    Each slice is the model's probability map thresholded at 0.5 or, with
    'refine', passed through GrabCut. A direction stops where the
    propagation terminates or at the first slice whose thresholded map is
    empty; refinement, which always keeps the propagated RECIST as
    foreground, only runs on the slices that pass that test, so both modes
    walk the same slices.
    """
    p = cfg.grabcut if cfg is not None else None

    def segment_slice(roi, rhat):
        prob = predict(m, roi)
        mask = prob >= 0.5
        if refine and mask.any():
            return refine_with_grabcut(roi, prob, rhat, p)
        return mask

    return _stack(v, r, segment_slice, stop_on_empty=True)


def predict_volume(m, v, r):
    """Probability volume over the propagation slab; zero elsewhere."""
    out = np.zeros(v.voxels.shape)
    slice_shape = v.voxels.shape[1:]
    for rhat in _walk_offsets(v, r):
        roi = lesion_roi(v, r, rhat.slice_index)
        out[rhat.slice_index] = paste_roi(predict(m, roi), roi, slice_shape,
                                          0.0)
    return out


def offset_dice(pred, gt, r):
    """OrderedDict offset -> slice DICE over the ground-truth slices,
    offsets sorted."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatchError(pred.shape, gt.shape)
    result = collections.OrderedDict()
    for z in np.flatnonzero(gt.any(axis=(1, 2))):
        result[int(z) - r.slice_index] = dice(pred[z], gt[z])
    return result
