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


"""GrabCut segmentation of a single-channel ROI.

The energy of a binary labeling is

    E = sum_m -log p(z_m | GMM of label_m)
        + gamma * sum_{(m,n) neighbors} [label_m != label_n]
                  * exp(-beta * (z_m - z_n)**2) / dist(m, n)

with beta = 1 / (2 * mean (z_m - z_n)**2) over all neighbor pairs. Each
iteration cuts the graph with the current mixtures, then refits the mixtures
by EM warm-started from the previous ones; neither step can raise E.
"""


from __future__ import print_function, division, absolute_import

import collections
import logging
import math

import numpy as np

from recist2vol.errors import MissingSeedsError, DimensionMismatchError
from recist2vol.gmm import fit_em, log_likelihood
from recist2vol.maxflow import FlowNetwork, max_flow, HARD, SOURCE
from recist2vol.seedgen import FG, BG, PFG


__all__ = ['GrabCutParams', 'energy', 'grabcut', 'pairwise_weights']

logger = logging.getLogger(__name__)

# neighbor offsets (dy, dx), each pair visited once
_OFFSETS_4 = ((0, 1), (1, 0))
_OFFSETS_8 = _OFFSETS_4 + ((1, 1), (1, -1))


class GrabCutParams(collections.namedtuple(
        'GrabCutParams', 'gamma k max_iters connectivity energy_tol')):

    __slots__ = ()

    def __new__(cls, gamma=50.0, k=5, max_iters=5, connectivity=8,
                energy_tol=1e-3):
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        if k < 1:
            raise ValueError("k must be at least 1")
        if max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        return super(GrabCutParams, cls).__new__(
            cls, float(gamma), int(k), int(max_iters), int(connectivity),
            float(energy_tol))


def _pixels(img):
    return np.asarray(getattr(img, 'pixels', img), dtype=np.float64)


def _neighbor_pairs(shape, connectivity):
    """Yield (index_m, index_n, dist) arrays over all neighbor pairs."""
    h, w = shape
    index = np.arange(h * w).reshape(h, w)
    offsets = _OFFSETS_8 if connectivity == 8 else _OFFSETS_4
    for dy, dx in offsets:
        ys = slice(0, h - dy)
        if dx >= 0:
            xs_m, xs_n = slice(0, w - dx), slice(dx, w)
        else:
            xs_m, xs_n = slice(-dx, w), slice(0, w + dx)
        m = index[ys, xs_m].ravel()
        n = index[dy:, xs_n].ravel()
        yield m, n, math.hypot(dy, dx)


def pairwise_weights(img, connectivity=8, gamma=50.0):
    """Return (m, n, weights, beta): the neighbor pairs of img with their
    smoothness weights gamma * exp(-beta * (z_m - z_n)**2) / dist."""
    z = _pixels(img)
    flat = z.ravel()
    pairs = list(_neighbor_pairs(z.shape, connectivity))
    if not any(len(m) for m, _, _ in pairs):
        empty = np.zeros(0, dtype=int)
        return empty, empty, np.zeros(0), 1.0
    sq_diffs = [(flat[m] - flat[n]) ** 2 for m, n, _ in pairs]
    mean_sq = np.concatenate(sq_diffs).mean()
    beta = 1.0 / (2 * mean_sq) if mean_sq > 0 else 1.0
    ms = np.concatenate([m for m, _, _ in pairs])
    ns = np.concatenate([n for _, n, _ in pairs])
    weights = np.concatenate([
        gamma * np.exp(-beta * d2) / dist
        for d2, (_, _, dist) in zip(sq_diffs, pairs)])
    return ms, ns, weights, beta


def _unary(z, fg, bg):
    return -log_likelihood(fg, z), -log_likelihood(bg, z)


def energy(img, labeling, fg, bg, p, pairs=None):
    """GrabCut energy U + V of a binary labeling."""
    z = _pixels(img)
    labeling = np.asarray(labeling, dtype=bool)
    if labeling.shape != z.shape:
        raise DimensionMismatchError(labeling.shape, z.shape)
    flat = z.ravel()
    labels = labeling.ravel()
    if pairs is None:
        pairs = pairwise_weights(z, p.connectivity, p.gamma)
    ms, ns, weights = pairs[:3]
    d_fg, d_bg = _unary(flat, fg, bg)
    u = d_fg[labels].sum() + d_bg[~labels].sum()
    v = weights[labels[ms] != labels[ns]].sum()
    return float(u + v)


def _cut(flat, seeds, fg, bg, pairs):
    d_fg, d_bg = _unary(flat, fg, bg)
    base = np.minimum(d_fg, d_bg)
    cap_source = d_bg - base
    cap_sink = d_fg - base
    cap_source[seeds == FG] = HARD
    cap_sink[seeds == FG] = 0.0
    cap_source[seeds == BG] = 0.0
    cap_sink[seeds == BG] = HARD

    g = FlowNetwork(len(flat))
    g.cap_source = cap_source.tolist()
    g.cap_sink = cap_sink.tolist()
    ms, ns, weights = pairs[:3]
    g.add_edges(ms, ns, weights)
    _, partition = max_flow(g)
    return np.array(partition) == SOURCE


def _refit(samples, model, k):
    if len(samples) < model.k:
        # too few pixels left to refit; keeping the model cannot raise E
        return model
    return fit_em(samples, k, init=model)


def grabcut(img, seeds, p=None, stats=None):
    """Segment img from a seed mask (FG/BG hard, PFG/PBG/UNKNOWN soft).

    Returns a boolean mask that agrees with every FG and BG seed. If
    'stats' is a dict, the energy after initialization and after each
    iteration is stored under stats['energy'].
    """
    if p is None:
        p = GrabCutParams()
    z = _pixels(img)
    seeds = np.asarray(seeds)
    if seeds.shape != z.shape:
        raise DimensionMismatchError(seeds.shape, z.shape)
    missing = [name for name, code in (('FG', FG), ('BG', BG))
               if not (seeds == code).any()]
    if missing:
        raise MissingSeedsError(missing)

    flat = z.ravel()
    flat_seeds = seeds.ravel()
    labels = np.isin(flat_seeds, (FG, PFG))
    fg = fit_em(flat[labels], min(p.k, int(labels.sum())))
    bg = fit_em(flat[~labels], min(p.k, int((~labels).sum())))

    pairs = pairwise_weights(z, p.connectivity, p.gamma)
    e = energy(z, labels.reshape(z.shape), fg, bg, p, pairs)
    energies = [e]
    for i in range(p.max_iters):
        labels = _cut(flat, flat_seeds, fg, bg, pairs)
        assert labels[flat_seeds == FG].all(), "FG seed violated"
        assert not labels[flat_seeds == BG].any(), "BG seed violated"
        fg = _refit(flat[labels], fg, fg.k)
        bg = _refit(flat[~labels], bg, bg.k)
        new_e = energy(z, labels.reshape(z.shape), fg, bg, p, pairs)
        energies.append(new_e)
        converged = e - new_e < p.energy_tol * abs(e)
        e = new_e
        if converged:
            break

    logger.debug("GrabCut on %dx%d ROI: %d iterations, energy %.3f -> %.3f",
                 z.shape[1], z.shape[0], len(energies) - 1, energies[0],
                 energies[-1])
    if stats is not None:
        stats.setdefault('energy', []).extend(energies)
    return labels.reshape(z.shape)
