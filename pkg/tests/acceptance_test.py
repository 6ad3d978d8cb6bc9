from __future__ import print_function, division, absolute_import

import os

import numpy as np
import pytest

from recist2vol.cli import _segment_slice
from recist2vol.grabcut import GrabCutParams, grabcut
from recist2vol.learner import load_model, predict, refine_with_grabcut
from recist2vol.metrics import dice
from recist2vol.phantom import write_phantom_suite
from recist2vol.seedgen import seeds_from_recist
from recist2vol.wsss import (
    Dataset, WsssConfig, lesion_roi, wsss_train, grabcut_3de,
    segment_volume, offset_dice)

from . import SEED

pytestmark = pytest.mark.slow

FAR_OFFSETS = (2, 3, 4)


@pytest.fixture(scope="module")
def suite(tmpdir_factory):
    out_dir = tmpdir_factory.mktemp("suite")
    train_path, test_path = write_phantom_suite(str(out_dir), n=30,
                                                seed=SEED)
    return Dataset.from_csv(train_path), Dataset.from_csv(test_path)


@pytest.fixture(scope="module")
def models(suite, tmpdir_factory):
    """(stage-0 model, WSSS-5 model) trained on the 20 training phantoms."""
    checkpoints = tmpdir_factory.mktemp("checkpoints")
    final = wsss_train(suite[0], WsssConfig(k_slices=5, seed=SEED),
                       checkpoint_dir=str(checkpoints))
    stage_0 = load_model(os.path.join(str(checkpoints), 'stage_0',
                                      'model.bin'))
    return stage_0, final


def _recist_slice(lesion):
    r = lesion.annotation
    roi = lesion_roi(lesion.volume, r, r.slice_index)
    x0, y0, z = roi.origin
    h, w = roi.shape
    return roi, r, lesion.gt_mask[z, y0:y0 + h, x0:x0 + w]


def _slice_dice(mask, lesion):
    z = lesion.annotation.slice_index
    return dice(mask[z], lesion.gt_mask[z])


def _far_dice(masks, lesions):
    values = []
    for mask, lesion in zip(masks, lesions):
        for offset, value in offset_dice(mask, lesion.gt_mask,
                                         lesion.annotation).items():
            if abs(offset) in FAR_OFFSETS:
                values.append(value)
    assert values
    return np.mean(values)


def _volume_dice(masks, lesions):
    return np.mean([dice(mask, lesion.gt_mask)
                    for mask, lesion in zip(masks, lesions)])


class RecistSliceTest(object):

    def test_method_ordering(self, suite):
        lesions = list(suite[0]) + list(suite[1])
        p = GrabCutParams()
        scores = {}
        for method in ('grabcut-r', 'grabcut-i', 'recist-d'):
            scores[method] = np.mean([
                _slice_dice(_segment_slice(lesion, method, p), lesion)
                for lesion in lesions])
        assert scores['grabcut-r'] >= scores['grabcut-i'] + 0.02
        assert scores['grabcut-i'] >= scores['recist-d'] + 0.02

    def test_energy_never_increases(self, suite):
        for lesion in list(suite[0])[:10]:
            roi, r, _ = _recist_slice(lesion)
            stats = {}
            grabcut(roi, seeds_from_recist(roi, r), stats=stats)
            energies = stats['energy']
            for before, after in zip(energies, energies[1:]):
                assert after <= before + 1e-6 * abs(before)


class LearnedSegmentationTest(object):

    def test_held_out_recist_slices(self, suite, models):
        stage_0 = models[0]
        scores = []
        for lesion in suite[1]:
            roi, _, gt = _recist_slice(lesion)
            scores.append(dice(predict(stage_0, roi) >= 0.5, gt))
        assert np.mean(scores) >= 0.80

    def test_refined_slices_not_worse(self, suite, models):
        model = models[1]
        thresholded, refined = [], []
        for lesion in suite[0]:
            roi, r, gt = _recist_slice(lesion)
            prob = predict(model, roi)
            thresholded.append(dice(prob >= 0.5, gt))
            refined.append(dice(refine_with_grabcut(roi, prob, r), gt))
        assert np.mean(refined) >= np.mean(thresholded) - 0.01

    def test_far_slices_improve_with_propagation(self, suite, models):
        stage_0, wsss_5 = models
        lesions = list(suite[1])
        baseline = _far_dice(
            [grabcut_3de(l.volume, l.annotation) for l in lesions], lesions)
        first = _far_dice(
            [segment_volume(stage_0, l.volume, l.annotation)
             for l in lesions], lesions)
        last = _far_dice(
            [segment_volume(wsss_5, l.volume, l.annotation)
             for l in lesions], lesions)
        assert last >= first + 0.01
        assert first > baseline

    def test_volumetric_dice(self, suite, models):
        wsss_5 = models[1]
        lesions = list(suite[1])
        masks = [segment_volume(wsss_5, l.volume, l.annotation, refine=True)
                 for l in lesions]
        assert _volume_dice(masks, lesions) >= 0.80

    def test_refined_volumes_not_worse(self, suite, models):
        wsss_5 = models[1]
        lesions = list(suite[0])
        plain = [segment_volume(wsss_5, l.volume, l.annotation)
                 for l in lesions]
        refined = [segment_volume(wsss_5, l.volume, l.annotation,
                                  refine=True) for l in lesions]
        assert (_volume_dice(refined, lesions) >=
                _volume_dice(plain, lesions) - 0.01)
