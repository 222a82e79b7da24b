"""Friedrichs-Keller triangulations of the unit square."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform right-triangle mesh of (0, 1)^2.

    Every grid square is split along its lower-left to upper-right diagonal.
    Local edge ``k`` of a triangle is the edge opposite local vertex ``k``.

    Attributes:
        n: squares per side.
        vertices: (V, 2) coordinates, vertex ``j*(n+1) + i`` sits at (i/n, j/n).
        triangles: (T, 3) counterclockwise vertex indices.
        edges: (E, 2) vertex indices, lower index first, lexicographically sorted.
        tri_edges: (T, 3) global edge index of each local edge.
        tri_signs: (T, 3) +1 where the global edge normal points out of the
            triangle, -1 otherwise.
        boundary_vertex: (V,) bool.
    """

    n: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    tri_signs: np.ndarray
    boundary_vertex: np.ndarray
    areas: np.ndarray = field(repr=False)
    centroids: np.ndarray = field(repr=False)
    edge_lengths: np.ndarray = field(repr=False)
    edge_normals: np.ndarray = field(repr=False)
    edge_midpoints: np.ndarray = field(repr=False)

    @property
    def h(self) -> float:
        """Mesh size (diameter of a triangle), sqrt(2)/n."""
        return np.sqrt(2.0) / self.n

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_vertices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_vertex)

    @property
    def boundary_edges(self) -> np.ndarray:
        counts = np.bincount(self.tri_edges.ravel(), minlength=self.num_edges)
        return np.flatnonzero(counts == 1)

    def area(self, t: int) -> float:
        return float(self.areas[self._check(t, self.num_triangles, "triangle")])

    def centroid(self, t: int) -> np.ndarray:
        return self.centroids[self._check(t, self.num_triangles, "triangle")].copy()

    def edge_normal(self, e: int) -> np.ndarray:
        return self.edge_normals[self._check(e, self.num_edges, "edge")].copy()

    def edge_length(self, e: int) -> float:
        return float(self.edge_lengths[self._check(e, self.num_edges, "edge")])

    def locate(self, points) -> np.ndarray:
        """Index of the triangle containing each point (closed triangles, points in [0,1]^2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("points must lie in the closed unit square")
        s = p * self.n
        i = np.minimum(np.floor(s[:, 0]).astype(int), self.n - 1)
        j = np.minimum(np.floor(s[:, 1]).astype(int), self.n - 1)
        upper = (s[:, 1] - j) > (s[:, 0] - i)
        return 2 * (j * self.n + i) + upper.astype(int)

    @staticmethod
    def _check(index: int, size: int, what: str) -> int:
        index = int(index)
        if not 0 <= index < size:
            raise IndexError(f"{what} index {index} out of range [0, {size})")
        return index


def build_mesh(n: int) -> Mesh:
    """Build the Friedrichs-Keller mesh with ``n`` squares per side."""
    if int(n) != n or n < 1:
        raise ValueError(f"mesh resolution must be a positive integer, got {n!r}")
    n = int(n)
    ticks = np.arange(n + 1) / n
    xx, yy = np.meshgrid(ticks, ticks)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    # local edge k is opposite local vertex k
    local = triangles[:, [[1, 2], [2, 0], [0, 1]]]
    pairs = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    tri_edges = inverse.reshape(-1, 3)

    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    centroids = p.mean(axis=1)

    tangent = vertices[edges[:, 1]] - vertices[edges[:, 0]]
    lengths = np.hypot(tangent[:, 0], tangent[:, 1])
    normals = np.column_stack([-tangent[:, 1], tangent[:, 0]]) / lengths[:, None]
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])

    outward = midpoints[tri_edges] - centroids[:, None, :]
    dots = np.einsum("tkd,tkd->tk", normals[tri_edges], outward)
    tri_signs = np.where(dots > 0, 1, -1).astype(np.int64)

    on_boundary = (
        np.isclose(vertices[:, 0], 0.0) | np.isclose(vertices[:, 0], 1.0)
        | np.isclose(vertices[:, 1], 0.0) | np.isclose(vertices[:, 1], 1.0)
    )

    for arr in (vertices, triangles, edges, tri_edges, tri_signs, on_boundary,
                areas, centroids, lengths, normals, midpoints):
        arr.setflags(write=False)
    return Mesh(
        n=n,
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        tri_signs=tri_signs,
        boundary_vertex=on_boundary,
        areas=areas,
        centroids=centroids,
        edge_lengths=lengths,
        edge_normals=normals,
        edge_midpoints=midpoints,
    )
