from __future__ import print_function, division, absolute_import

import itertools
import unittest

import networkx as nx
import numpy as np
import pytest

from recist2vol.errors import NetworkError
from recist2vol.maxflow import (
    FlowNetwork, max_flow, cut_capacity, HARD, SOURCE, SINK)

from . import SEED
from .utils import brute_force_min_cut, random_network

NUM_NETWORKS = 200
MAX_BRUTE_FORCE_NODES = 10


def _to_networkx(g):
    d = nx.DiGraph()
    d.add_nodes_from(['s', 't'])
    for i, (cs, ct) in enumerate(g.terminal_caps):
        d.add_edge('s', i, capacity=cs)
        d.add_edge(i, 't', capacity=ct)
    for u, v, cap_uv, cap_vu in g.edges:
        for a, b, cap in ((u, v, cap_uv), (v, u, cap_vu)):
            if d.has_edge(a, b):
                d[a][b]['capacity'] += cap
            else:
                d.add_edge(a, b, capacity=cap)
    return d


class MaxFlowTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        rng = np.random.default_rng(SEED)
        cls.networks = [
            random_network(rng, int(rng.integers(1, MAX_BRUTE_FORCE_NODES + 1)))
            for _ in range(NUM_NETWORKS)]

    def test_matches_brute_force(self):
        for g in self.networks:
            flow, partition = max_flow(g)
            self.assertEqual(flow, brute_force_min_cut(g))
            self.assertEqual(cut_capacity(g, partition), flow)

    def test_source_side_is_minimal(self):
        for g in self.networks:
            flow, partition = max_flow(g)
            ours = set(i for i, side in enumerate(partition) if side == SOURCE)
            for other in itertools.product((SOURCE, SINK), repeat=g.n_nodes):
                if cut_capacity(g, other) == flow:
                    theirs = set(
                        i for i, side in enumerate(other) if side == SOURCE)
                    self.assertLessEqual(ours, theirs)

    def test_matches_networkx(self):
        rng = np.random.default_rng(SEED + 1)
        for _ in range(20):
            g = random_network(rng, 40, max_cap=20, edge_prob=0.1)
            flow, partition = max_flow(g)
            self.assertEqual(flow, nx.maximum_flow_value(_to_networkx(g), 's',
                                                         't'))
            self.assertEqual(cut_capacity(g, partition), flow)

    def test_grid(self):
        rng = np.random.default_rng(SEED + 2)
        n = 12
        g = FlowNetwork(n * n)
        for i in range(n * n):
            g.add_tedge(i, float(rng.integers(0, 10)),
                        float(rng.integers(0, 10)))
        for y, x in itertools.product(range(n), range(n)):
            i = y * n + x
            if x + 1 < n:
                g.add_edge(i, i + 1, 3.0, 3.0)
            if y + 1 < n:
                g.add_edge(i, i + n, 3.0, 3.0)
        flow, partition = max_flow(g)
        self.assertEqual(flow, nx.maximum_flow_value(_to_networkx(g), 's',
                                                     't'))
        self.assertEqual(cut_capacity(g, partition), flow)


class TerminalTest(object):

    def test_single_node(self):
        g = FlowNetwork(1)
        g.add_tedge(0, 3, 2)
        assert max_flow(g) == (2.0, [SOURCE])

    def test_balanced_node_goes_to_sink(self):
        g = FlowNetwork(1)
        g.add_tedge(0, 4, 4)
        assert max_flow(g) == (4.0, [SINK])

    def test_tedges_accumulate(self):
        g = FlowNetwork(1)
        g.add_tedge(0, 1, 0)
        g.add_tedge(0, 2, 5)
        assert g.terminal_caps == [(3.0, 5.0)]

    def test_empty(self):
        assert max_flow(FlowNetwork(0)) == (0.0, [])

    def test_hard_links_respected(self):
        g = FlowNetwork(4)
        g.add_tedge(0, HARD, 0)
        g.add_tedge(3, 0, HARD)
        for i in range(3):
            g.add_edge(i, i + 1, 100.0, 100.0)
        g.add_tedge(1, 0, 1000.0)
        g.add_tedge(2, 1000.0, 0)
        flow, partition = max_flow(g)
        assert partition[0] == SOURCE
        assert partition[3] == SINK
        assert partition == [SOURCE, SINK, SOURCE, SINK]
        assert flow == 300.0

    def test_asymmetric_edge(self):
        g = FlowNetwork(2)
        g.add_tedge(0, 5, 0)
        g.add_tedge(1, 0, 5)
        g.add_edge(1, 0, 0.0, 2.0)
        assert max_flow(g) == (2.0, [SOURCE, SINK])


class NetworkErrorTest(object):

    @pytest.mark.parametrize("build", [
        lambda g: g.add_tedge(0, -1.0, 0.0),
        lambda g: g.add_tedge(0, float('nan'), 0.0),
        lambda g: g.add_tedge(5, 1.0, 0.0),
        lambda g: g.add_edge(0, 0, 1.0),
        lambda g: g.add_edge(0, 1, float('inf')),
        lambda g: g.add_edge(0, 2, 1.0),
    ])
    def test_invalid(self, build):
        with pytest.raises(NetworkError):
            build(FlowNetwork(2))

    def test_negative_size(self):
        with pytest.raises(NetworkError):
            FlowNetwork(-1)

    def test_validate_catches_direct_mutation(self):
        g = FlowNetwork(2)
        g.cap_sink[1] = -3.0
        with pytest.raises(NetworkError, match="invalid capacity"):
            max_flow(g)
