from __future__ import annotations

import itertools

import numpy as np

from ddfem.material import LocalDataSet


def planted_dataset(mesh, m: int, seed: int):
    """Data containing the element values of a feasible state for f = 0, plus distractors.

    The state is ``q = (g_j, 0)`` on horizontal strip j and ``w = 0``: divergence
    free, inside RT0 and constant per element, so the planted objective is 0.
    """
    rng = np.random.default_rng(seed)
    strips = np.minimum((mesh.centroids[:, 1] * mesh.n).astype(int), mesh.n - 1)
    g = rng.uniform(-1, 1, size=mesh.n)
    values = np.zeros((mesh.num_triangles, 4))
    values[:, 0] = g[strips]
    planted_pts = np.unique(values, axis=0)
    extra = rng.uniform(-1, 1, size=(m - len(planted_pts), 4))
    pts = np.vstack([planted_pts, extra])
    perm = rng.permutation(m)
    pts = pts[perm]
    inverse = np.argsort(perm)
    owner = np.array([np.flatnonzero((planted_pts == v).all(axis=1))[0] for v in values])
    return LocalDataSet(pts), inverse[owner]


def all_assignments(l: int, m: int) -> np.ndarray:
    return np.array(list(itertools.product(range(m), repeat=l)), dtype=np.int64)


def materialized_values(A, b, c, assignments, m):
    a = np.asarray(assignments)
    idx = np.arange(a.shape[1]) * m + a                        # (N, l) one-hot positions
    out = np.empty(len(a))
    for s in range(0, len(a), 50000):
        blk = idx[s:s + 50000]
        out[s:s + 50000] = c + b[blk].sum(axis=1) + A[blk[:, :, None], blk[:, None, :]].sum(axis=(1, 2))
    return out
