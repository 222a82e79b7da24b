"""Projection onto the discrete equilibrium set.

For ``y = (r, w)`` the projection is ``(q_h, grad u_h)`` where ``u_h`` solves the
discrete Poisson problem with load ``w`` and ``(q_h, lambda_h)`` solves the mixed
saddle point problem

    M q + B^T lambda = (r, psi)
    B q              = -(f, 1_T).

The saddle matrix does not depend on ``y`` and is factorized once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import integrate
from .spaces import PhaseField, SystemMatrices, assemble, rt0_divergence

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class EquilibriumState:
    """Solution of the projection: RT0 flux, interior P1 potential, multiplier."""

    q: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    grad_u: np.ndarray

    def as_field(self) -> PhaseField:
        """The state as a member of Z, ``(q_h, grad u_h)``."""
        return PhaseField(np.zeros_like(self.grad_u), self.grad_u, self.q)

    def dofs(self) -> np.ndarray:
        return np.concatenate([self.q, self.u])


class EquilibriumProjector:
    """Cached factorizations for repeated equilibrium projections on one mesh.

    ``source`` is a vectorized scalar function ``f(x, y)`` or None for f = 0.
    Only the element integrals of f enter (test space P0).
    """

    def __init__(self, spaces: SystemMatrices, source=None):
        self.spaces = spaces
        mesh = spaces.mesh
        if source is None:
            self.load_f = np.zeros(mesh.num_triangles)
        else:
            self.load_f = integrate(source, mesh.vertices[mesh.triangles], mesh.areas)
        self.load_f.setflags(write=False)
        nt = mesh.num_triangles
        saddle = sp.bmat([[spaces.M, spaces.B.T], [spaces.B, None]], format="csc")
        self._saddle = saddle
        self._saddle_lu = spla.splu(saddle)
        self._poisson_lu = spla.splu(spaces.K.tocsc())
        self._rhs_r = (spaces.centroid_eval.T @ sp.diags(spaces.area2)).tocsr()
        self._rhs_w = (spaces.grad.T @ sp.diags(spaces.area2)).tocsr()
        self._ne = mesh.num_edges
        self._nt = nt

    @property
    def mesh(self):
        return self.spaces.mesh

    @property
    def source_means(self) -> np.ndarray:
        return self.load_f / self.mesh.areas

    def load_vectors(self, y: PhaseField) -> tuple[np.ndarray, np.ndarray]:
        """Right-hand sides ``(r, psi_e)_e`` and ``(w, grad phi_i)_i``."""
        if y.r.shape != (self._nt, 2) or y.w.shape != (self._nt, 2):
            raise ValueError(
                f"field has {len(y.r)} elements, projector mesh has {self._nt}")
        rq = self._rhs_r @ y.r.ravel()
        if y.flux is not None:
            if y.flux.shape != (self._ne,):
                raise ValueError("RT0 part does not match the projector mesh")
            rq = rq + self.spaces.M @ y.flux
        rw = self._rhs_w @ y.w.ravel()
        return rq, rw

    def solve(self, rq: np.ndarray, rw: np.ndarray) -> EquilibriumState:
        rhs = np.concatenate([rq, -self.load_f])
        sol = self._saddle_lu.solve(rhs)
        q, lam = sol[:self._ne], sol[self._ne:]
        u = self._poisson_lu.solve(rw)
        grad_u = (self.spaces.grad @ u).reshape(-1, 2)
        return EquilibriumState(q=q, u=u, lam=lam, grad_u=grad_u)

    def project(self, y: PhaseField) -> EquilibriumState:
        return self.solve(*self.load_vectors(y))

    def algebraic_residual(self, y: PhaseField, state: EquilibriumState) -> float:
        """Relative residual of both linear systems for the given state."""
        rq, rw = self.load_vectors(y)
        rhs = np.concatenate([rq, -self.load_f])
        sol = np.concatenate([state.q, state.lam])
        r1 = np.linalg.norm(self._saddle @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
        r2 = np.linalg.norm(self.spaces.K @ state.u - rw) / max(np.linalg.norm(rw), 1e-300)
        if not np.any(rhs):
            r1 = np.linalg.norm(self._saddle @ sol)
        if not np.any(rw):
            r2 = np.linalg.norm(self.spaces.K @ state.u)
        return float(max(r1, r2))


def build_projector(mesh_or_spaces, source=None) -> EquilibriumProjector:
    """Assemble (if given a mesh) and factorize the equilibrium projection."""
    spaces = mesh_or_spaces
    if not isinstance(spaces, SystemMatrices):
        spaces = assemble(mesh_or_spaces)
    return EquilibriumProjector(spaces, source)


def project_equilibrium(projector: EquilibriumProjector, y: PhaseField) -> EquilibriumState:
    return projector.project(y)


def divergence_residual(state: EquilibriumState, projector: EquilibriumProjector) -> float:
    """``max_T |div q|_T + mean_T f| * |T|``, the violation of ``-div_h q = f``."""
    mesh = projector.mesh
    div = rt0_divergence(mesh, state.q)
    return float(np.max(np.abs(div * mesh.areas + projector.load_f)))
