"""Overlap metrics and their CSV reports.

All CSV files use a fixed column order and six decimal places. Standard
deviations are population (not sample) deviations.
"""

from __future__ import print_function, division, absolute_import

import collections
import csv
import logging

import numpy as np

from recist2vol.errors import DimensionMismatchError, EmptyDatasetError


__all__ = [
    'MetricRecord', 'SLICE', 'VOLUME', 'dice', 'precision_recall',
    'pr_curve', 'aggregate', 'aggregate_by', 'offset_table',
    'write_metrics_csv', 'read_metrics_csv', 'write_pr_csv',
    'write_summary_csv', 'write_offset_csv']

SLICE = 'slice'
VOLUME = 'volume'

METRICS = ('dice', 'precision', 'recall')
METRICS_COLUMNS = ['lesion_id', 'scope', 'dice', 'precision', 'recall']
PR_COLUMNS = ['threshold', 'precision', 'recall']
SUMMARY_COLUMNS = ['group', 'metric', 'mean', 'std_pop', 'count']
OFFSET_COLUMNS = ['offset', 'mean', 'std_pop', 'count']

logger = logging.getLogger(__name__)


class MetricRecord(collections.namedtuple(
        'MetricRecord', 'lesion_id scope dice precision recall')):

    __slots__ = ()

    def __new__(cls, lesion_id, scope, dice, precision, recall):
        if scope not in (SLICE, VOLUME):
            raise ValueError("unknown scope %r" % (scope,))
        values = tuple(float(v) for v in (dice, precision, recall))
        if not all(0.0 <= v <= 1.0 for v in values):
            raise ValueError("metric values must lie in [0, 1]")
        return super(MetricRecord, cls).__new__(
            cls, str(lesion_id), scope, *values)


def _as_masks(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(a.shape, b.shape)
    return a, b


def dice(a, b):
    """2|A & B| / (|A| + |B|); 1.0 when both masks are empty.

    >>> dice([1, 1, 0, 0], [1, 0, 1, 0])
    0.5
    """
    a, b = _as_masks(a, b)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def precision_recall(pred, gt):
    """(TP / (TP + FP), TP / (TP + FN)), each 1.0 when its denominator is
    zero."""
    pred, gt = _as_masks(pred, gt)
    tp = int((pred & gt).sum())
    n_pred = int(pred.sum())
    n_gt = int(gt.sum())
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_gt if n_gt else 1.0
    return precision, recall


def pr_curve(prob, gt, n_thresholds=101):
    """[(t, precision, recall)] of {prob >= t} for n_thresholds values of t
    evenly spaced on [0, 1]."""
    if n_thresholds < 2:
        raise ValueError("at least two thresholds are required")
    prob = np.asarray(prob, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    if prob.shape != gt.shape:
        raise DimensionMismatchError(prob.shape, gt.shape)
    curve = []
    for t in np.linspace(0.0, 1.0, n_thresholds):
        p, r = precision_recall(prob >= t, gt)
        curve.append((float(t), p, r))
    return curve


def _mean_std(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.mean()), float(values.std())


def aggregate(records):
    """OrderedDict metric -> (mean, population std) over the records."""
    records = list(records)
    if not records:
        raise EmptyDatasetError("no metric records to aggregate")
    return collections.OrderedDict(
        (name, _mean_std([getattr(r, name) for r in records]))
        for name in METRICS)


def aggregate_by(records, groups):
    """Aggregate per group; 'groups' maps lesion_id to a group name.

    Returns an OrderedDict group -> (count, aggregate) in sorted group
    order. Lesions missing from 'groups' are skipped.
    """
    buckets = collections.defaultdict(list)
    for r in records:
        if r.lesion_id in groups:
            buckets[groups[r.lesion_id]].append(r)
    return collections.OrderedDict(
        (g, (len(buckets[g]), aggregate(buckets[g])))
        for g in sorted(buckets))


def offset_table(dice_by_offset):
    """[(|offset|, mean, population std, count)] from a mapping of offset
    to slice DICE values, folding +k and -k together."""
    folded = collections.defaultdict(list)
    for offset, values in dice_by_offset.items():
        folded[abs(int(offset))].extend(values)
    return [(k,) + _mean_std(folded[k]) + (len(folded[k]),)
            for k in sorted(folded) if folded[k]]


def _fmt(value):
    return "%.6f" % value


def write_metrics_csv(path, records):
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(METRICS_COLUMNS)
        for r in records:
            writer.writerow([r.lesion_id, r.scope, _fmt(r.dice),
                             _fmt(r.precision), _fmt(r.recall)])
    return path


def read_metrics_csv(path):
    with open(path, 'r') as fp:
        reader = csv.DictReader(fp)
        if reader.fieldnames != METRICS_COLUMNS:
            raise ValueError("%s: expected columns %s"
                             % (path, ",".join(METRICS_COLUMNS)))
        return [MetricRecord(row['lesion_id'], row['scope'], row['dice'],
                             row['precision'], row['recall'])
                for row in reader]


def write_pr_csv(path, curve):
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(PR_COLUMNS)
        for t, p, r in curve:
            writer.writerow([_fmt(t), _fmt(p), _fmt(r)])
    return path


def write_summary_csv(path, records, groups=None):
    """Write the overall mean and population std of every metric (group
    'all'), followed by one block per group when 'groups' is given."""
    records = list(records)
    blocks = [('all', len(records), aggregate(records))]
    if groups:
        blocks.extend((g, n, summary) for g, (n, summary)
                      in aggregate_by(records, groups).items())
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(SUMMARY_COLUMNS)
        for group, count, summary in blocks:
            for name, (mean, std) in summary.items():
                writer.writerow([group, name, _fmt(mean), _fmt(std), count])
    return path


def write_offset_csv(path, table):
    with open(path, 'w', newline='') as fp:
        writer = csv.writer(fp, lineterminator='\n')
        writer.writerow(OFFSET_COLUMNS)
        for offset, mean, std, count in table:
            writer.writerow([offset, _fmt(mean), _fmt(std), count])
    return path
