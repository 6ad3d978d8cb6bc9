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


from __future__ import print_function, division, absolute_import

import timeit

import numpy as np

SIZE = 40

SETUP_CODE = '''
from %(module)s import %(function)s
from %(benchmark_module)s import %(setup_function)s
args = %(setup_function)s()
'''


def generate_image(rng):
    """A SIZE x SIZE disk of 0.7 on 0.3 with 0.05 noise."""
    ys, xs = np.indices((SIZE, SIZE))
    c = (SIZE - 1) / 2.0
    disk = np.hypot(xs - c, ys - c) <= SIZE / 4.0
    img = np.where(disk, 0.7, 0.3) + rng.normal(0.0, 0.05, disk.shape)
    return np.clip(img, 0.0, 1.0)


def setup_max_flow():
    from recist2vol.grabcut import pairwise_weights
    from recist2vol.maxflow import FlowNetwork

    rng = np.random.default_rng(1)
    img = generate_image(rng)
    g = FlowNetwork(img.size)
    g.cap_source = (img.ravel() * 10).tolist()
    g.cap_sink = ((1 - img.ravel()) * 10).tolist()
    ms, ns, weights, _ = pairwise_weights(img)
    g.add_edges(ms, ns, weights)
    return (g,)


def setup_grabcut():
    from recist2vol.seedgen import BG, FG, PBG, PFG

    rng = np.random.default_rng(1)
    img = generate_image(rng)
    seeds = np.full(img.shape, PBG, dtype=np.uint8)
    seeds[SIZE // 4:3 * SIZE // 4, SIZE // 4:3 * SIZE // 4] = PFG
    seeds[SIZE // 2 - 2:SIZE // 2 + 2, SIZE // 2 - 2:SIZE // 2 + 2] = FG
    seeds[:2, :] = BG
    return img, seeds


def run_benchmark(
        benchmark_module, module, function, setup_suffix='', repeat=10):
    setup_func = 'setup_' + function
    if setup_suffix:
        print('%s with %s:' % (function, setup_suffix), end='')
        setup_func += '_' + setup_suffix
    else:
        print('%s:' % function, end='')
    results = timeit.repeat(
        '%s(*args)' % function,
        setup=(SETUP_CODE % {
            'benchmark_module': benchmark_module, 'setup_function': setup_func,
            'module': module, 'function': function}),
        repeat=repeat, number=1)
    print('\tavg=%dms' % (sum(results) / len(results) * 1000.),
          '\tmin=%dms' % (min(results) * 1000.))


def main():
    from recist2vol.maxflow import COMPILED
    print('compiled max-flow:', COMPILED)
    run_benchmark('benchmark', 'recist2vol.maxflow', 'max_flow')
    run_benchmark('benchmark', 'recist2vol.grabcut', 'grabcut')


if __name__ == '__main__':
    main()
