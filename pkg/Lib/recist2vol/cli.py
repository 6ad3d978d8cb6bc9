from __future__ import print_function, division, absolute_import
import os
import sys
import argparse
import logging
import multiprocessing as mp
from functools import partial

import numpy as np
from fontTools.misc.loggingTools import configLogger

import recist2vol
from recist2vol.errors import Error
from recist2vol.grabcut import GrabCutParams, grabcut
from recist2vol.imaging import save_mask, load_mask, paste_roi
from recist2vol.learner import LossConfig, save_model, load_model
from recist2vol.metrics import (
    MetricRecord, SLICE, VOLUME, dice, precision_recall, pr_curve,
    offset_table, write_metrics_csv, write_pr_csv, write_summary_csv,
    write_offset_csv)
from recist2vol.phantom import write_phantom_suite
from recist2vol.seedgen import (
    PLAIN, INNER, seeds_from_recist, recist_d_mask, seeds_bbox_variant,
    with_center_seed)
from recist2vol.wsss import (
    Dataset, WsssConfig, LABEL_SOURCES, lesion_roi, grabcut_3de, wsss_train,
    segment_volume, predict_volume, offset_dice, map_lesions)

logger = logging.getLogger("recist2vol")

SLICE_METHODS = ('grabcut-r', 'recist-d', 'grabcut', 'grabcut-i')
OFFSET_METHODS = ('grabcut-3de', 'model')
SCOPES = ('slice', 'volume', 'both')


def _cpu_count():
    try:
        return mp.cpu_count()
    except NotImplementedError:  # pragma: no cover
        return 1


def _prediction_path(pred_dir, lesion_id):
    return os.path.join(pred_dir, 'seg_%s.raw' % lesion_id)


def _ensure_dir(path):
    if not os.path.exists(path):
        os.makedirs(path)
    elif not os.path.isdir(path):
        raise Error("'%s' is not a directory" % path)


def _segment_slice(lesion, method, p):
    volume, r = lesion.volume, lesion.annotation
    roi = lesion_roi(volume, r, r.slice_index)
    if method == 'recist-d':
        mask = recist_d_mask(roi, r)
    elif method == 'grabcut-r':
        mask = grabcut(roi, seeds_from_recist(roi, r), p)
    elif method == 'grabcut':
        mask = grabcut(roi, with_center_seed(
            seeds_bbox_variant(roi, r, PLAIN), roi, r), p)
    else:
        mask = grabcut(roi, seeds_bbox_variant(roi, r, INNER), p)
    out = np.zeros(volume.voxels.shape, dtype=bool)
    out[r.slice_index] = paste_roi(mask, roi, volume.voxels.shape[1:], False)
    return out


def _grabcut_3de(lesion, p):
    return grabcut_3de(lesion.volume, lesion.annotation, p)


def _segment_volume(lesion, model, cfg, refine):
    return segment_volume(model, lesion.volume, lesion.annotation, cfg,
                          refine)


def _save_predictions(dataset, masks, out_dir):
    _ensure_dir(out_dir)
    for lesion, mask in zip(dataset, masks):
        path = _prediction_path(out_dir, lesion.lesion_id)
        logger.info("Saving %s", path)
        save_mask(mask, path)


def _require_ground_truth(dataset):
    missing = [l.lesion_id for l in dataset if l.gt_mask is None]
    if missing:
        raise Error("no ground truth for %s" % ", ".join(missing))


def _grabcut_params(options):
    return GrabCutParams(gamma=options.gamma)


def _wsss_config(options):
    return WsssConfig(
        k_slices=options.k_slices, epochs=options.epochs,
        grabcut=_grabcut_params(options), loss=LossConfig(),
        seed=options.seed, label_source=options.labels, jobs=options.jobs)


def phantom_gen(options):
    write_phantom_suite(options.out, n=options.n, seed=options.seed,
                        noise_sigma=options.noise,
                        recist_noise=options.recist_noise)


def segment_slice(options):
    dataset = Dataset.from_csv(options.annotation)
    masks = map_lesions(
        partial(_segment_slice, method=options.method,
                p=_grabcut_params(options)),
        list(dataset), options.jobs)
    _save_predictions(dataset, masks, options.out)


def run_train(options):
    dataset = Dataset.from_csv(options.annotation)
    stats = {}
    model = wsss_train(dataset, _wsss_config(options),
                       checkpoint_dir=options.checkpoint_dir, stats=stats)
    logger.info("Final training loss %.6f", stats['loss'][-1])
    logger.info("Saving %s", options.out)
    save_model(model, options.out)


def run_segment_volume(options):
    dataset = Dataset.from_csv(options.annotation)
    model = load_model(options.model)
    masks = map_lesions(
        partial(_segment_volume, model=model, cfg=_wsss_config(options),
                refine=options.refine),
        list(dataset), options.jobs)
    _save_predictions(dataset, masks, options.out)


def run_grabcut_3de(options):
    dataset = Dataset.from_csv(options.annotation)
    masks = map_lesions(partial(_grabcut_3de, p=_grabcut_params(options)),
                        list(dataset), options.jobs)
    _save_predictions(dataset, masks, options.out)


def evaluate(options):
    dataset = Dataset.from_csv(options.annotation)
    _require_ground_truth(dataset)
    records = []
    for lesion in dataset:
        pred = load_mask(_prediction_path(options.pred_dir, lesion.lesion_id),
                         lesion.volume.dims)
        gt = lesion.gt_mask
        scopes = []
        if options.scope in ('slice', 'both'):
            z = lesion.annotation.slice_index
            scopes.append((SLICE, pred[z], gt[z]))
        if options.scope in ('volume', 'both'):
            scopes.append((VOLUME, pred, gt))
        for scope, a, b in scopes:
            records.append(MetricRecord(lesion.lesion_id, scope, dice(a, b),
                                        *precision_recall(a, b)))
    write_metrics_csv(options.out, records)
    logger.info("Wrote %d metric records to %s", len(records), options.out)
    if options.summary:
        for scope in (SLICE, VOLUME):
            selected = [r for r in records if r.scope == scope]
            if not selected:
                continue
            path = options.summary
            if options.scope == 'both':
                root, ext = os.path.splitext(path)
                path = "%s_%s%s" % (root, scope, ext or '.csv')
            write_summary_csv(path, selected, dataset.categories)
            logger.info("Wrote %s summary to %s", scope, path)


def run_pr_curve(options):
    dataset = Dataset.from_csv(options.annotation)
    _require_ground_truth(dataset)
    model = load_model(options.model)
    probs = []
    gts = []
    for lesion in dataset:
        prob = predict_volume(model, lesion.volume, lesion.annotation)
        probs.append(prob.ravel())
        gts.append(lesion.gt_mask.ravel())
    curve = pr_curve(np.concatenate(probs), np.concatenate(gts),
                     options.n_thresholds)
    write_pr_csv(options.out, curve)


def offset_curve(options):
    dataset = Dataset.from_csv(options.annotation)
    _require_ground_truth(dataset)
    if options.method == 'model':
        if not options.model:
            raise Error("--method model requires --model")
        func = partial(_segment_volume, model=load_model(options.model),
                       cfg=_wsss_config(options), refine=options.refine)
    else:
        func = partial(_grabcut_3de, p=_grabcut_params(options))
    masks = map_lesions(func, list(dataset), options.jobs)
    by_offset = {}
    for lesion, mask in zip(dataset, masks):
        for offset, value in offset_dice(mask, lesion.gt_mask,
                                         lesion.annotation).items():
            by_offset.setdefault(offset, []).append(value)
    write_offset_csv(options.out, offset_table(by_offset))


def _common_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument(
        "--seed", type=int, default=42,
        help="seed of every random choice (default: %(default)s)")
    parser.add_argument(
        "-j",
        "--jobs",
        type=int,
        nargs="?",
        default=1,
        const=_cpu_count(),
        metavar="N",
        help="process lesions using N processes (default: %(default)s)")
    parser.add_argument(
        "--gamma", type=float, default=50.0,
        help="GrabCut smoothness weight (default: %(default)s)")
    return parser


def _dataset_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--annotation", required=True, metavar="CSV",
        help="annotation CSV (lesion_id, volume_path, slice_index, x1..y4)")
    return parser


def _training_options():
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument(
        "--k-slices", type=int, default=5, metavar="K",
        help="odd number of slices per lesion to train on "
             "(default: %(default)s)")
    parser.add_argument(
        "--epochs", type=int, default=20,
        help="training epochs per stage (default: %(default)s)")
    parser.add_argument(
        "--labels", choices=LABEL_SOURCES, default='grabcut-r',
        help="labels of the RECIST slices (default: %(default)s)")
    return parser


def _build_parser():
    parser = argparse.ArgumentParser(prog="recist2vol")
    parser.add_argument(
        "--version", action="version", version=recist2vol.__version__)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    common = _common_options()
    data = _dataset_options()
    training = _training_options()

    p = subparsers.add_parser(
        "phantom-gen", parents=[common],
        help="generate a synthetic phantom suite")
    p.add_argument("--n", type=int, default=30,
                   help="number of phantoms (default: %(default)s)")
    p.add_argument("--out", required=True, metavar="DIRECTORY")
    p.add_argument("--noise", type=float, default=0.05,
                   help="image noise sigma (default: %(default)s)")
    p.add_argument("--recist-noise", type=float, default=0.2,
                   help="relative RECIST endpoint noise "
                        "(default: %(default)s)")
    p.set_defaults(func=phantom_gen)

    p = subparsers.add_parser(
        "segment-slice", parents=[common, data],
        help="segment the RECIST slices with a baseline method")
    p.add_argument("--method", choices=SLICE_METHODS, default='grabcut-r')
    p.add_argument("--out", required=True, metavar="DIRECTORY")
    p.set_defaults(func=segment_slice)

    p = subparsers.add_parser(
        "train", parents=[common, data, training],
        help="train a slice-propagated model")
    p.add_argument("--out", required=True, metavar="MODEL")
    p.add_argument("--checkpoint-dir", default=None, metavar="DIRECTORY")
    p.set_defaults(func=run_train)

    p = subparsers.add_parser(
        "segment-volume", parents=[common, data, training],
        help="segment lesion volumes with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--refine", action="store_true",
                   help="post-process every slice with GrabCut")
    p.add_argument("--out", required=True, metavar="DIRECTORY")
    p.set_defaults(func=run_segment_volume)

    p = subparsers.add_parser(
        "grabcut-3de", parents=[common, data],
        help="segment lesion volumes with GrabCut on propagated RECIST")
    p.add_argument("--out", required=True, metavar="DIRECTORY")
    p.set_defaults(func=run_grabcut_3de)

    p = subparsers.add_parser(
        "evaluate", parents=[common, data],
        help="score predicted masks against the ground truth")
    p.add_argument("--pred-dir", required=True, metavar="DIRECTORY")
    p.add_argument("--scope", choices=SCOPES, default='volume')
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--summary", default=None, metavar="CSV",
                   help="also write mean and std overall and per category")
    p.set_defaults(func=evaluate)

    p = subparsers.add_parser(
        "pr-curve", parents=[common, data],
        help="volumetric precision-recall curve of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n-thresholds", type=int, default=101)
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=run_pr_curve)

    p = subparsers.add_parser(
        "offset-curve", parents=[common, data, training],
        help="mean slice DICE per distance from the RECIST slice")
    p.add_argument("--method", choices=OFFSET_METHODS,
                   default='grabcut-3de')
    p.add_argument("--model", default=None)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--out", required=True, metavar="CSV")
    p.set_defaults(func=offset_curve)
    return parser


def _config_logging(verbose):
    if not verbose:
        level = "WARNING"
    elif verbose == 1:
        level = "INFO"
    else:
        level = "DEBUG"
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    configLogger(logger=logger, level=level, stream=sys.stderr)


def main(args=None):
    parser = _build_parser()
    try:
        options = parser.parse_args(args)
    except SystemExit as e:
        return e.code
    _config_logging(options.verbose)
    try:
        options.func(options)
    except (Error, ValueError, OSError) as e:
        logger.error("%s: %s", options.command, e)
        return 1
    return 0
