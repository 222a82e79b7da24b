"""Quadrature rules on triangles and edges."""

from __future__ import annotations

import numpy as np

# Barycentric coordinates of the edge midpoints, ordered like the local edges
# (midpoint k lies on the edge opposite vertex k). Exact for degree 2.
EDGE_MIDPOINT_BARY = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
EDGE_MIDPOINT_WEIGHTS = np.full(3, 1.0 / 3.0)

# Symmetric six-point rule, exact for degree 4 (Dunavant 1985).
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
SIX_POINT_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
SIX_POINT_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


def triangle_points(vertices: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical quadrature points, shape (T, q, 2), from (T, 3, 2) vertex coordinates."""
    return np.einsum("qk,tkd->tqd", bary, vertices)


def integrate(func, vertices: np.ndarray, areas: np.ndarray,
              bary: np.ndarray = SIX_POINT_BARY,
              weights: np.ndarray = SIX_POINT_WEIGHTS) -> np.ndarray:
    """Per-triangle integrals of a vectorized scalar ``func(x, y)``."""
    pts = triangle_points(vertices, bary)
    vals = np.asarray(func(pts[..., 0], pts[..., 1]), dtype=float)
    return areas * (vals @ weights)


def gauss_legendre_unit(order: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w
