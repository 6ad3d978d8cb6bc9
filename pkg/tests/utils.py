from __future__ import print_function, division, absolute_import

import itertools

import numpy as np

from recist2vol.imaging import RoiImage
from recist2vol.maxflow import FlowNetwork, SOURCE, SINK, cut_capacity
from recist2vol.phantom import PhantomSpec, generate_phantom
from recist2vol.recist import extract_recist_from_mask
from recist2vol.wsss import Lesion


def brute_force_min_cut(g):
    """Smallest cut capacity over all 2**n_nodes partitions of g.

    >>> g = FlowNetwork(2)
    >>> g.add_tedge(0, 3, 0)
    >>> g.add_tedge(1, 0, 2)
    >>> g.add_edge(0, 1, 1)
    >>> brute_force_min_cut(g)
    1.0
    """
    return min(
        cut_capacity(g, partition)
        for partition in itertools.product((SOURCE, SINK), repeat=g.n_nodes))


def random_network(rng, n_nodes, max_cap=7, edge_prob=0.4):
    """A random network with integer capacities in [0, max_cap]."""
    g = FlowNetwork(n_nodes)
    for i in range(n_nodes):
        g.add_tedge(i, float(rng.integers(0, max_cap + 1)),
                    float(rng.integers(0, max_cap + 1)))
    for u, v in itertools.combinations(range(n_nodes), 2):
        if rng.random() < edge_prob:
            g.add_edge(u, v, float(rng.integers(0, max_cap + 1)),
                       float(rng.integers(0, max_cap + 1)))
    return g


def make_roi(pixels, origin=(0, 0, 0)):
    return RoiImage(np.clip(pixels, 0.0, 1.0), origin, (1.0, 1.0))


def disk_image(size, radius, rng=None, fg=0.7, bg=0.3, noise=0.05):
    """(image, mask) of a centered disk; noiseless without rng."""
    ys, xs = np.indices((size, size), dtype=np.float64)
    c = (size - 1) / 2.0
    mask = np.hypot(xs - c, ys - c) <= radius
    img = np.where(mask, fg, bg)
    if rng is not None:
        img = img + rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0), mask


def small_spec(category='sphere', semi_axes=(6.0, 6.0, 6.0), **kwargs):
    """A phantom small enough for the interpreted max-flow."""
    kwargs.setdefault('dims', (28, 28, 14))
    kwargs.setdefault('spacing', (1.0, 1.0, 1.5))
    if category == 'textured':
        kwargs.setdefault('texture', 0.08)
    return PhantomSpec(semi_axes=semi_axes, category=category, **kwargs)


def small_lesion(seed, i=0, category=None, recist_noise=0.0, **kwargs):
    """Lesion 'ph<i>' on a small phantom, RECIST measured from its mask."""
    rng = np.random.default_rng([seed, i])
    if category is None:
        category = ('sphere', 'ellipsoid', 'textured')[i % 3]
    if category == 'sphere' and 'semi_axes' not in kwargs:
        kwargs['semi_axes'] = (rng.uniform(5.0, 7.0),) * 3
    elif 'semi_axes' not in kwargs:
        kwargs['semi_axes'] = tuple(rng.uniform(4.5, 7.0, size=3))
    spec = small_spec(category, **kwargs)
    volume, mask = generate_phantom(spec, rng)
    r = extract_recist_from_mask(mask, spec.spacing, recist_noise, rng)
    return Lesion("ph%03d" % i, volume, r, mask, category)
