#!/usr/bin/env python3
"""Benchmark the GAT forward/backward kernels: Cython extension vs numpy.

Runs full 3-layer network passes over random reasoning-tree-shaped graphs of
increasing size and reports per-pass wall time for each backend, plus the
maximum output disagreement (should be ~1e-12; the backends implement the
same arithmetic).

Usage: python3 benchmarks/bench_gat.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

import eqsearch.gnn.network as network
from eqsearch.gnn import init_params
from eqsearch.gnn import numpy_backend
from eqsearch.gnn.network import network_backward, network_forward
from eqsearch.rtree import GraphEncoding

try:
    from eqsearch.gnn import cython_backend
except ImportError:
    cython_backend = None


def random_tree(rng: np.random.Generator, n: int) -> GraphEncoding:
    edges = [(i, i) for i in range(n)]
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        edges += [(parent, i), (i, parent)]
    return GraphEncoding(
        node_features=rng.uniform(0.0, 1.0, size=(n, 7)),
        edges=edges,
        cursor_index=0,
    )


def time_backend(backend_module, enc, params, repeats: int):
    saved = network.backend
    network.backend = backend_module
    try:
        trace = network_forward(enc, params)  # warm up
        proj = np.ones_like(trace.outputs)
        t0 = time.perf_counter()
        for _ in range(repeats):
            trace = network_forward(enc, params)
            network_backward(trace, proj)
        elapsed = (time.perf_counter() - t0) / repeats
        return elapsed, trace.outputs
    finally:
        network.backend = saved


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if cython_backend is None:
        print("cython backend not built; benchmarking numpy only")

    rng = np.random.default_rng(0)
    params = init_params(0, 2)
    print(f"{'nodes':>7} {'numpy (us)':>12} {'cython (us)':>12} {'speedup':>8} {'max |diff|':>11}")
    for n in (6, 12, 30, 60, 120, 300):
        enc = random_tree(rng, n)
        t_np, out_np = time_backend(numpy_backend, enc, params, args.repeats)
        if cython_backend is None:
            print(f"{n:>7} {t_np * 1e6:>12.1f} {'-':>12} {'-':>8} {'-':>11}")
            continue
        t_cy, out_cy = time_backend(cython_backend, enc, params, args.repeats)
        diff = float(np.max(np.abs(out_np - out_cy)))
        print(
            f"{n:>7} {t_np * 1e6:>12.1f} {t_cy * 1e6:>12.1f} "
            f"{t_np / t_cy:>7.2f}x {diff:>11.2e}"
        )


if __name__ == "__main__":
    main()
