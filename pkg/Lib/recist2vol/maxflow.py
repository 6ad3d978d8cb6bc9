#cython: language_level=3
#distutils: define_macros=CYTHON_TRACE_NOGIL=1

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


"""Exact s-t min-cut / max-flow on two-terminal networks.

The solver grows a search tree from each terminal and reuses them between
augmentations (Boykov & Kolmogorov), which suits the short paths of image
grids. The returned source side is the set of nodes still reachable from the
source in the final residual network, i.e. the smallest minimum cut.
"""


from __future__ import print_function, division, absolute_import

import cython

import math
from collections import deque

from .errors import NetworkError

__all__ = ['FlowNetwork', 'max_flow', 'cut_capacity', 'HARD', 'SOURCE',
           'SINK']

# capacity of seed constraints: above any achievable energy term
HARD = 1e9

SOURCE = 0
SINK = 1

_FREE = 0
_S = 1
_T = 2

# parent markers; real parents are arc indices >= 0
_TERMINAL = -1
_ORPHAN = -2
_NONE = -3


if cython.compiled:
    COMPILED = True
else:
    COMPILED = False


class FlowNetwork(object):
    """A two-terminal network over nodes 0 .. n_nodes - 1.

    Terminal links accumulate per node; each edge (u, v, cap_uv, cap_vu)
    carries a capacity in both directions.
    """

    def __init__(self, n_nodes):
        if n_nodes < 0:
            raise NetworkError("negative node count %r" % n_nodes)
        self.n_nodes = n_nodes
        self.cap_source = [0.0] * n_nodes
        self.cap_sink = [0.0] * n_nodes
        self.edges = []

    def _check_node(self, i):
        if not 0 <= i < self.n_nodes:
            raise NetworkError(
                "node index %r out of range [0, %d)" % (i, self.n_nodes))

    @staticmethod
    def _check_capacity(cap):
        if not (cap >= 0 and math.isfinite(cap)):
            raise NetworkError("invalid capacity %r" % (cap,))

    @property
    def terminal_caps(self):
        return list(zip(self.cap_source, self.cap_sink))

    def add_tedge(self, i, cap_source, cap_sink):
        """Add capacities from the source to i and from i to the sink."""
        self._check_node(i)
        self._check_capacity(cap_source)
        self._check_capacity(cap_sink)
        self.cap_source[i] += cap_source
        self.cap_sink[i] += cap_sink

    def add_edge(self, u, v, cap_uv, cap_vu=0.0):
        self._check_node(u)
        self._check_node(v)
        if u == v:
            raise NetworkError("self-loop on node %d" % u)
        self._check_capacity(cap_uv)
        self._check_capacity(cap_vu)
        self.edges.append((u, v, float(cap_uv), float(cap_vu)))

    def add_edges(self, us, vs, caps):
        """Add symmetric edges from parallel sequences (e.g. numpy arrays)."""
        for u, v, cap in zip(list(us), list(vs), list(caps)):
            self.add_edge(int(u), int(v), cap, cap)

    def validate(self):
        for i in range(self.n_nodes):
            self._check_capacity(self.cap_source[i])
            self._check_capacity(self.cap_sink[i])
        for u, v, cap_uv, cap_vu in self.edges:
            self._check_node(u)
            self._check_node(v)
            if u == v:
                raise NetworkError("self-loop on node %d" % u)
            self._check_capacity(cap_uv)
            self._check_capacity(cap_vu)


def cut_capacity(g, partition):
    """Total capacity of the edges going from the SOURCE to the SINK side."""
    total = 0.0
    for i in range(g.n_nodes):
        if partition[i] == SOURCE:
            total += g.cap_sink[i]
        else:
            total += g.cap_source[i]
    for u, v, cap_uv, cap_vu in g.edges:
        if partition[u] == SOURCE and partition[v] == SINK:
            total += cap_uv
        elif partition[u] == SINK and partition[v] == SOURCE:
            total += cap_vu
    return total


@cython.locals(i=cython.int, q=cython.int, j=cython.int)
def _has_terminal_origin(q, parent, head):
    j = q
    while parent[j] >= 0:
        j = head[parent[j]]
    return parent[j] == _TERMINAL


@cython.locals(middle=cython.int, s_node=cython.int, t_node=cython.int,
               i=cython.int, e=cython.int, nxt=cython.int,
               bottleneck=cython.double)
def _augment(middle, head, rcap, tr_cap, parent, orphans):
    """Push the bottleneck flow along source-root .. middle arc .. sink-root
    and collect the nodes whose parent link got saturated."""
    s_node = head[middle ^ 1]
    t_node = head[middle]

    bottleneck = rcap[middle]
    i = s_node
    while parent[i] != _TERMINAL:
        e = parent[i]
        bottleneck = min(bottleneck, rcap[e ^ 1])
        i = head[e]
    bottleneck = min(bottleneck, tr_cap[i])
    i = t_node
    while parent[i] != _TERMINAL:
        e = parent[i]
        bottleneck = min(bottleneck, rcap[e])
        i = head[e]
    bottleneck = min(bottleneck, -tr_cap[i])

    rcap[middle] -= bottleneck
    rcap[middle ^ 1] += bottleneck

    i = s_node
    while parent[i] != _TERMINAL:
        e = parent[i]
        nxt = head[e]
        rcap[e ^ 1] -= bottleneck
        rcap[e] += bottleneck
        if rcap[e ^ 1] <= 0:
            parent[i] = _ORPHAN
            orphans.append(i)
        i = nxt
    tr_cap[i] -= bottleneck
    if tr_cap[i] <= 0:
        parent[i] = _ORPHAN
        orphans.append(i)

    i = t_node
    while parent[i] != _TERMINAL:
        e = parent[i]
        nxt = head[e]
        rcap[e] -= bottleneck
        rcap[e ^ 1] += bottleneck
        if rcap[e] <= 0:
            parent[i] = _ORPHAN
            orphans.append(i)
        i = nxt
    tr_cap[i] += bottleneck
    if tr_cap[i] >= 0:
        parent[i] = _ORPHAN
        orphans.append(i)

    return bottleneck


@cython.locals(o=cython.int, t=cython.int, a=cython.int, q=cython.int,
               pq=cython.int)
def _adopt(orphans, out_arcs, head, rcap, tr_cap, tree, parent, active,
           in_queue):
    """Find new parents for orphans, or free them and their subtrees."""
    while orphans:
        o = orphans.popleft()
        t = tree[o]
        if (t == _S and tr_cap[o] > 0) or (t == _T and tr_cap[o] < 0):
            parent[o] = _TERMINAL
            continue

        adopted = False
        for a in out_arcs[o]:
            q = head[a]
            if tree[q] != t:
                continue
            if t == _S and rcap[a ^ 1] <= 0:
                continue
            if t == _T and rcap[a] <= 0:
                continue
            if _has_terminal_origin(q, parent, head):
                parent[o] = a
                adopted = True
                break
        if adopted:
            continue

        for a in out_arcs[o]:
            q = head[a]
            if tree[q] != t:
                continue
            pq = parent[q]
            if pq >= 0 and head[pq] == o:
                parent[q] = _ORPHAN
                orphans.append(q)
            if (rcap[a ^ 1] if t == _S else rcap[a]) > 0 and not in_queue[q]:
                active.append(q)
                in_queue[q] = True
        tree[o] = _FREE
        parent[o] = _NONE


@cython.locals(n=cython.int, i=cython.int, p=cython.int, q=cython.int,
               a=cython.int, middle=cython.int, flow=cython.double,
               cs=cython.double, ct=cython.double)
def _solve(n, cap_source, cap_sink, head, rcap, out_arcs):
    tr_cap = [0.0] * n
    tree = [_FREE] * n
    parent = [_NONE] * n
    in_queue = [False] * n
    active = deque()
    orphans = deque()

    flow = 0.0
    for i in range(n):
        cs = cap_source[i]
        ct = cap_sink[i]
        flow += min(cs, ct)
        tr_cap[i] = cs - ct
        if tr_cap[i] > 0:
            tree[i] = _S
        elif tr_cap[i] < 0:
            tree[i] = _T
        else:
            continue
        parent[i] = _TERMINAL
        active.append(i)
        in_queue[i] = True

    while active:
        p = active[0]
        if tree[p] == _FREE:
            active.popleft()
            in_queue[p] = False
            continue

        middle = -1
        for a in out_arcs[p]:
            q = head[a]
            if tree[p] == _S:
                if rcap[a] <= 0:
                    continue
                if tree[q] == _T:
                    middle = a
                    break
            else:
                if rcap[a ^ 1] <= 0:
                    continue
                if tree[q] == _S:
                    middle = a ^ 1
                    break
            if tree[q] == _FREE:
                tree[q] = tree[p]
                parent[q] = a ^ 1
                if not in_queue[q]:
                    active.append(q)
                    in_queue[q] = True

        if middle < 0:
            active.popleft()
            in_queue[p] = False
            continue

        flow += _augment(middle, head, rcap, tr_cap, parent, orphans)
        _adopt(orphans, out_arcs, head, rcap, tr_cap, tree, parent, active,
               in_queue)

    return flow, tree


def max_flow(g):
    """Return (flow_value, partition) for the network g.

    partition[i] is SOURCE or SINK; nodes tied to a terminal by a HARD
    capacity always end up on that terminal's side.
    """
    g.validate()
    n = g.n_nodes
    head = []
    rcap = []
    out_arcs = [[] for _ in range(n)]
    for u, v, cap_uv, cap_vu in g.edges:
        out_arcs[u].append(len(head))
        head.append(v)
        rcap.append(cap_uv)
        out_arcs[v].append(len(head))
        head.append(u)
        rcap.append(cap_vu)

    flow, tree = _solve(n, g.cap_source, g.cap_sink, head, rcap, out_arcs)
    partition = [SOURCE if t == _S else SINK for t in tree]
    return flow, partition
