"""RT0, P0 and P1 spaces on a Friedrichs-Keller mesh.

Conventions
-----------
* An RT0 field is a vector of edge DOFs, ``q_e = \\int_e q . n_e ds`` with the
  global edge normal ``n_e``.  On triangle ``T`` the basis function of local
  edge ``k`` is ``s_k / (2|T|) (x - P_k)`` with ``P_k`` the opposite vertex and
  ``s_k`` the orientation sign stored in ``mesh.tri_signs``.
* P0 vector fields are ``(T, 2)`` arrays; flattened they interleave components.
* P1 fields with homogeneous Dirichlet data are stored on interior vertices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import (EDGE_MIDPOINT_BARY, SIX_POINT_BARY, SIX_POINT_WEIGHTS,
                         gauss_legendre_unit, triangle_points)


@dataclass(frozen=True, eq=False)
class PhaseField:
    """A pair ``(r, w)`` of L2 vector fields on a mesh.

    ``r`` is stored as a piecewise constant part plus an optional RT0 part,
    ``r(x) = r[T] + sum_e flux[e] psi_e(x)``; ``w`` is piecewise constant.  This
    covers every field the solvers produce: data fields (``flux`` is None),
    equilibrium states ``(q_h, grad u_h)`` and their linear combinations.
    """

    r: np.ndarray
    w: np.ndarray
    flux: np.ndarray | None = None

    @classmethod
    def zeros(cls, num_triangles: int) -> PhaseField:
        return cls(np.zeros((num_triangles, 2)), np.zeros((num_triangles, 2)))

    @classmethod
    def from_values(cls, values: np.ndarray) -> PhaseField:
        """Piecewise constant field from per-element 4-vectors ``(r1, r2, w1, w2)``."""
        values = np.asarray(values, dtype=float)
        return cls(values[:, :2].copy(), values[:, 2:].copy())

    @property
    def num_triangles(self) -> int:
        return len(self.r)

    def _flux_or_zero(self, other: PhaseField):
        if self.flux is None and other.flux is None:
            return None
        a = self.flux if self.flux is not None else 0.0
        b = other.flux if other.flux is not None else 0.0
        return a, b

    def __add__(self, other: PhaseField) -> PhaseField:
        pair = self._flux_or_zero(other)
        return PhaseField(self.r + other.r, self.w + other.w,
                          None if pair is None else pair[0] + pair[1])

    def __sub__(self, other: PhaseField) -> PhaseField:
        pair = self._flux_or_zero(other)
        return PhaseField(self.r - other.r, self.w - other.w,
                          None if pair is None else pair[0] - pair[1])

    def __mul__(self, alpha: float) -> PhaseField:
        return PhaseField(alpha * self.r, alpha * self.w,
                          None if self.flux is None else alpha * self.flux)

    __rmul__ = __mul__

    def __neg__(self) -> PhaseField:
        return self * -1.0


@dataclass(frozen=True, eq=False)
class SystemMatrices:
    """Assembled operators of the discrete spaces.

    M: RT0 mass matrix.  B: ``B[T, e] = \\int_T div psi_e``.  K: P1 stiffness on
    interior vertices.  ``centroid_eval`` and ``midpoint_eval`` map RT0 DOFs to
    point values (flattened ``(T, 2)`` and ``(T, 3, 2)``); ``grad`` maps interior
    P1 values to element gradients (flattened ``(T, 2)``).
    """

    mesh: Mesh
    M: sp.csr_matrix
    B: sp.csr_matrix
    K: sp.csr_matrix
    centroid_eval: sp.csr_matrix
    midpoint_eval: sp.csr_matrix
    grad: sp.csr_matrix
    interior: np.ndarray

    @property
    def area2(self) -> np.ndarray:
        """Element areas repeated per vector component, matching flattened P0 vectors."""
        return np.repeat(self.mesh.areas, 2)


def rt0_eval_matrix(mesh: Mesh, bary: np.ndarray) -> sp.csr_matrix:
    """Sparse map from RT0 DOFs to values at barycentric points ``bary`` of every triangle.

    Row ``(t * nq + q) * 2 + d`` holds component ``d`` at point ``q`` of triangle ``t``.
    """
    bary = np.atleast_2d(bary)
    nq = len(bary)
    verts = mesh.vertices[mesh.triangles]                      # (T, 3, 2)
    pts = triangle_points(verts, bary)                         # (T, q, 2)
    scale = mesh.tri_signs / (2.0 * mesh.areas[:, None])       # (T, 3)
    vals = scale[:, None, :, None] * (pts[:, :, None, :] - verts[:, None, :, :])  # (T,q,k,d)
    nt = mesh.num_triangles
    rows = (np.arange(nt)[:, None, None, None] * nq
            + np.arange(nq)[None, :, None, None]) * 2 + np.arange(2)[None, None, None, :]
    rows = np.broadcast_to(rows, vals.shape)
    cols = np.broadcast_to(mesh.tri_edges[:, None, :, None], vals.shape)
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(2 * nq * nt, mesh.num_edges))


def p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    nxt = p[:, [1, 2, 0]]
    prv = p[:, [2, 0, 1]]
    g = np.stack([nxt[..., 1] - prv[..., 1], prv[..., 0] - nxt[..., 0]], axis=-1)
    return g / (2.0 * mesh.areas[:, None, None])


def p1_gradient_matrix(mesh: Mesh, interior_only: bool = True) -> sp.csr_matrix:
    """Sparse map from P1 vertex values to element gradients (flattened (T, 2))."""
    g = p1_gradients(mesh)
    nt = mesh.num_triangles
    rows = np.broadcast_to((2 * np.arange(nt))[:, None, None] + np.arange(2)[None, None, :], g.shape)
    cols = np.broadcast_to(mesh.triangles[:, :, None], g.shape)
    G = sp.csr_matrix((g.ravel(), (rows.ravel(), cols.ravel())),
                      shape=(2 * nt, mesh.num_vertices))
    if interior_only:
        G = G[:, mesh.interior_vertices]
    return G.tocsr()


def p1_mass_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix on all vertices."""
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, 3).ravel()
    vals = (mesh.areas[:, None, None] * local).ravel()
    return sp.csr_matrix((vals, (rows, cols)), shape=(mesh.num_vertices,) * 2)


def assemble(mesh: Mesh) -> SystemMatrices:
    """Assemble RT0 mass, divergence and interior P1 stiffness matrices."""
    nt = mesh.num_triangles
    centroid_eval = rt0_eval_matrix(mesh, np.full((1, 3), 1.0 / 3.0))
    midpoint_eval = rt0_eval_matrix(mesh, EDGE_MIDPOINT_BARY)
    weights = sp.diags(np.repeat(mesh.areas / 3.0, 6))
    M = (midpoint_eval.T @ weights @ midpoint_eval).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    B = sp.csr_matrix((mesh.tri_signs.ravel().astype(float),
                       (np.repeat(np.arange(nt), 3), mesh.tri_edges.ravel())),
                      shape=(nt, mesh.num_edges))
    G = p1_gradient_matrix(mesh)
    K = (G.T @ sp.diags(np.repeat(mesh.areas, 2)) @ G).tocsr()
    K = (0.5 * (K + K.T)).tocsr()
    return SystemMatrices(mesh=mesh, M=M, B=B, K=K, centroid_eval=centroid_eval,
                          midpoint_eval=midpoint_eval, grad=G,
                          interior=mesh.interior_vertices)


def rt0_interpolate(mesh: Mesh, func, order: int = 3) -> np.ndarray:
    """Edge fluxes ``\\int_e tau . n_e ds`` by Gauss-Legendre quadrature (exact to 2*order-1).

    ``func(x, y)`` is vectorized and returns a pair ``(tau_1, tau_2)``.
    """
    t, wt = gauss_legendre_unit(order)
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    tx, ty = func(pts[..., 0], pts[..., 1])
    tx = np.broadcast_to(np.asarray(tx, dtype=float), pts.shape[:2])
    ty = np.broadcast_to(np.asarray(ty, dtype=float), pts.shape[:2])
    n = mesh.edge_normals
    normal = tx * n[:, 0, None] + ty * n[:, 1, None]
    return mesh.edge_lengths * (normal @ wt)


def rt0_divergence(mesh: Mesh, q: np.ndarray) -> np.ndarray:
    """Element-wise (constant) divergence of an RT0 field."""
    return (mesh.tri_signs * q[mesh.tri_edges]).sum(axis=1) / mesh.areas


def evaluate_at_centroid(spaces: SystemMatrices, q: np.ndarray | None = None,
                         u: np.ndarray | None = None, element: int | None = None) -> np.ndarray:
    """Centroid value of an RT0 field ``q`` or element gradient of an interior P1 field ``u``.

    Exactly one of ``q`` and ``u`` must be given.  Returns ``(T, 2)`` or, with
    ``element``, the 2-vector of that element.
    """
    if (q is None) == (u is None):
        raise ValueError("pass exactly one of q (RT0) or u (P1)")
    if q is not None:
        vals = (spaces.centroid_eval @ q).reshape(-1, 2)
    else:
        vals = (spaces.grad @ u).reshape(-1, 2)
    if element is None:
        return vals
    nt = spaces.mesh.num_triangles
    if not 0 <= element < nt:
        raise IndexError(f"triangle index {element} out of range [0, {nt})")
    return vals[element].copy()


def p1_interpolate(mesh: Mesh, func) -> np.ndarray:
    """Nodal interpolant on interior vertices of a scalar ``func(x, y)``."""
    v = mesh.vertices[mesh.interior_vertices]
    return np.asarray(func(v[:, 0], v[:, 1]), dtype=float)


def _midpoint_values(spaces: SystemMatrices, y: PhaseField) -> np.ndarray:
    r = np.repeat(y.r[:, None, :], 3, axis=1)
    if y.flux is not None:
        r = r + (spaces.midpoint_eval @ y.flux).reshape(-1, 3, 2)
    return r


def _check_field(spaces: SystemMatrices, y: PhaseField) -> None:
    nt = spaces.mesh.num_triangles
    if y.r.shape != (nt, 2) or y.w.shape != (nt, 2):
        raise ValueError(f"field does not live on this mesh ({nt} triangles)")
    if y.flux is not None and y.flux.shape != (spaces.mesh.num_edges,):
        raise ValueError("RT0 part does not match the mesh edge count")


def z_inner(spaces: SystemMatrices, a: PhaseField, b: PhaseField) -> float:
    """L2 x L2 inner product, exact for the piecewise linear integrands involved."""
    _check_field(spaces, a)
    _check_field(spaces, b)
    areas = spaces.mesh.areas
    ra, rb = _midpoint_values(spaces, a), _midpoint_values(spaces, b)
    rr = np.einsum("tkd,tkd->t", ra, rb) / 3.0
    ww = np.einsum("td,td->t", a.w, b.w)
    return float(areas @ (rr + ww))


def z_norm(spaces: SystemMatrices, a: PhaseField) -> float:
    return float(np.sqrt(max(z_inner(spaces, a, a), 0.0)))


def z_dist(spaces: SystemMatrices, a: PhaseField, b: PhaseField) -> float:
    return z_norm(spaces, a - b)


def element_means(spaces: SystemMatrices, y: PhaseField) -> np.ndarray:
    """Per-element averages ``(r1, r2, w1, w2)`` of a field, shape (T, 4)."""
    r = y.r
    if y.flux is not None:
        r = r + (spaces.centroid_eval @ y.flux).reshape(-1, 2)
    return np.hstack([r, y.w])


def quadrature_z_norm_sq(spaces: SystemMatrices, y: PhaseField) -> float:
    """Squared Z-norm by the six-point degree-4 rule, evaluating RT0 basis functions directly."""
    _check_field(spaces, y)
    mesh = spaces.mesh
    E = rt0_eval_matrix(mesh, SIX_POINT_BARY)
    r = np.repeat(y.r[:, None, :], len(SIX_POINT_BARY), axis=1)
    if y.flux is not None:
        r = r + (E @ y.flux).reshape(r.shape)
    rr = (r ** 2).sum(axis=2) @ SIX_POINT_WEIGHTS
    ww = (y.w ** 2).sum(axis=1)
    return float(mesh.areas @ (rr + ww))
