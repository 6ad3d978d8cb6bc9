"""Gaussian mixtures over scalar intensities, fitted by EM.

These are the appearance models of GrabCut: one mixture for the lesion, one
for its surroundings.
"""

from __future__ import print_function, division, absolute_import

import collections
import logging
import math

import numpy as np
from scipy.special import logsumexp

from recist2vol.errors import InsufficientSamplesError


__all__ = ['GmmModel', 'fit_em', 'log_likelihood', 'responsibilities',
           'VAR_FLOOR']

VAR_FLOOR = 1e-4
MAX_ITERS = 100
TOLERANCE = 1e-6

_LOG_2PI = math.log(2 * math.pi)

logger = logging.getLogger(__name__)


class GmmModel(collections.namedtuple('GmmModel', 'weights means variances')):

    __slots__ = ()

    def __new__(cls, weights, means, variances):
        weights = np.array(weights, dtype=np.float64)
        means = np.array(means, dtype=np.float64)
        variances = np.array(variances, dtype=np.float64)
        if not (weights.shape == means.shape == variances.shape) or \
                weights.ndim != 1 or len(weights) < 1:
            raise ValueError("weights, means and variances must be parallel")
        if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be >= 0 and sum to 1")
        if (variances < VAR_FLOOR).any():
            raise ValueError("variances must be >= %g" % VAR_FLOOR)
        for a in (weights, means, variances):
            a.setflags(write=False)
        return super(GmmModel, cls).__new__(cls, weights, means, variances)

    @property
    def k(self):
        return len(self.weights)


def _component_log_densities(m, x):
    """Return log(w_j * N(x; mu_j, var_j)) with shape (len(x), k)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    with np.errstate(divide='ignore'):
        log_w = np.log(m.weights)
    return (log_w - 0.5 * (_LOG_2PI + np.log(m.variances)) -
            (x - m.means) ** 2 / (2 * m.variances))


def log_likelihood(m, x):
    """log sum_j w_j N(x; mu_j, var_j), for a scalar or an array of x."""
    values = logsumexp(_component_log_densities(m, x), axis=1)
    if np.ndim(x) == 0:
        return float(values[0])
    return values.reshape(np.shape(x))


def responsibilities(m, x):
    """Posterior component probabilities, shape (len(x), k)."""
    log_p = _component_log_densities(m, x)
    return np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))


def _m_step(x, resp, previous=None):
    n_j = resp.sum(axis=0)
    weights = n_j / len(x)
    means = np.empty_like(n_j)
    variances = np.empty_like(n_j)
    for j in range(len(n_j)):
        if n_j[j] > 0:
            means[j] = np.dot(resp[:, j], x) / n_j[j]
            variances[j] = np.dot(resp[:, j], (x - means[j]) ** 2) / n_j[j]
        elif previous is not None:
            means[j] = previous.means[j]
            variances[j] = previous.variances[j]
        else:
            means[j] = x.mean()
            variances[j] = VAR_FLOOR
    variances = np.maximum(variances, VAR_FLOOR)
    return GmmModel(weights / weights.sum(), means, variances)


def _quantile_init(x, k):
    """Hard-assign sorted samples to k equally populated bins."""
    order = np.argsort(x, kind='stable')
    resp = np.zeros((len(x), k))
    bins = np.minimum((np.arange(len(x)) * k) // len(x), k - 1)
    resp[order, bins] = 1.0
    return _m_step(x, resp)


def fit_em(samples, k, rng=None, init=None, stats=None):
    """Fit a k-component mixture to 1-D samples by EM.

    EM starts from 'init' when given (a warm start, used between GrabCut
    iterations) and otherwise from a quantile split of the samples. It stops
    when the total log-likelihood gains less than 1e-6 or after 100
    iterations. Components left without support are re-seeded on a sample
    drawn from 'rng' at the start; without rng the median is used.

    If 'stats' is a dict, the per-iteration total log-likelihoods are stored
    under stats['log_likelihood'].
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if k < 1 or len(x) < k:
        raise InsufficientSamplesError(len(x), k)

    if init is not None:
        model = init
    else:
        model = _quantile_init(x, k)
        if (model.weights == 0).any():
            means = np.array(model.means)
            empty = model.weights == 0
            if rng is not None:
                means[empty] = rng.choice(x, size=int(empty.sum()))
            else:
                means[empty] = np.median(x)
            weights = np.where(empty, 1.0, model.weights)
            model = GmmModel(weights / weights.sum(), means, model.variances)

    history = [float(log_likelihood(model, x).sum())]
    for _ in range(MAX_ITERS):
        new_model = _m_step(x, responsibilities(model, x), model)
        ll = float(log_likelihood(new_model, x).sum())
        assert ll >= history[-1] - 1e-9 * max(1.0, abs(history[-1])), \
            "EM log-likelihood decreased"
        model = new_model
        gain = ll - history[-1]
        history.append(ll)
        if gain < TOLERANCE:
            break

    if stats is not None:
        stats.setdefault('log_likelihood', []).extend(history)
    logger.debug("EM k=%d on %d samples: %d iterations, log-likelihood %.6f",
                 k, len(x), len(history) - 1, history[-1])
    return model
