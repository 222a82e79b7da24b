"""Quadratic semi-assignment view of the distance minimization and local search with POD.

An assignment ``a`` maps every element to a data index; the induced field takes
value ``points[a[T]]`` on element T and the objective is
``1/2 ||pi_E(y) - y||_Z^2``.  Because ``pi_E`` is affine, the objective is a
convex quadratic in the stacked element values ``y in R^{4l}``:

    F(y) = 1/2 y^T H y + g^T y + c0,

and in the one-hot assignment variables ``x`` it becomes ``x^T A x + b^T x + c``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .equilibrium import EquilibriumProjector
from .material import LocalDataSet
from .mesh import build_mesh
from .spaces import PhaseField
from .solvers import SolveReport, SolverConfig, objective, run_ps

MATERIALIZE_LIMIT = 4096
ENUMERATION_LIMIT = 10 ** 7


@dataclass(eq=False)
class QsapInstance:
    projector: EquilibriumProjector
    dataset: LocalDataSet

    @property
    def l(self) -> int:
        return self.projector.mesh.num_triangles

    @property
    def m(self) -> int:
        return self.dataset.m

    def check(self, assignment) -> np.ndarray:
        a = np.asarray(assignment, dtype=np.int64)
        if a.shape != (self.l,):
            raise ValueError(f"assignment needs {self.l} entries, got shape {a.shape}")
        if a.min() < 0 or a.max() >= self.m:
            raise IndexError(f"assignment index out of range [0, {self.m})")
        return a


def qsap_objective(instance: QsapInstance, assignment) -> float:
    a = instance.check(assignment)
    return objective(instance.projector, instance.dataset.field(a))


def qsap_objective_batch(instance: QsapInstance, assignments) -> np.ndarray:
    """Exact objectives of many assignments with one multi-right-hand-side solve per block."""
    A = np.atleast_2d(np.asarray(assignments, dtype=np.int64))
    P = instance.projector
    sp_ = P.spaces
    pts = instance.dataset.points
    out = np.empty(len(A))
    areas = sp_.mesh.areas
    block = max(1, 200000 // max(1, instance.l))
    for s in range(0, len(A), block):
        vals = pts[A[s:s + block]]                                  # (b, l, 4)
        r = vals[..., :2].reshape(len(vals), -1).T                  # (2l, b)
        w = vals[..., 2:].reshape(len(vals), -1).T
        rq = P._rhs_r @ r
        rw = P._rhs_w @ w
        rhs = np.vstack([rq, np.repeat(-P.load_f[:, None], len(vals), axis=1)])
        q = P._saddle_lu.solve(rhs)[:P._ne]
        u = P._poisson_lu.solve(rw)
        gu = sp_.grad @ u                                            # (2l, b)
        qm = (sp_.midpoint_eval @ q).reshape(instance.l, 3, 2, -1)
        dr = qm - vals[..., :2].transpose(1, 2, 0)[:, None, :, :]
        dw = gu.reshape(instance.l, 2, -1) - vals[..., 2:].transpose(1, 2, 0)
        per = (dr ** 2).sum(axis=(1, 2)) / 3.0 + (dw ** 2).sum(axis=1)
        out[s:s + block] = 0.5 * (areas @ per)
    return out


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """``F(y) = 1/2 y^T H y + g^T y + c0`` on stacked element values ``y`` (l x 4, row-major)."""

    H: np.ndarray
    g: np.ndarray
    c0: float

    def __call__(self, values: np.ndarray) -> float:
        y = np.asarray(values, dtype=float).ravel()
        return float(0.5 * y @ self.H @ y + self.g @ y + self.c0)


def quadratic_model(instance: QsapInstance) -> QuadraticModel:
    """Probe the affine projection with unit element values to get ``(H, g, c0)``.

    The residual ``pi_E(y) - y = z0 + L y - y`` is evaluated on each unit
    direction; H is its Z-Gram matrix, g its Z-pairing with ``z0 = pi_E(0)``.
    """
    P = instance.projector
    sp_ = P.spaces
    l = instance.l
    n = 4 * l
    areas = sp_.mesh.areas
    eye = np.eye(n)
    r = eye.reshape(l, 4, n)[:, :2, :].reshape(2 * l, n)
    w = eye.reshape(l, 4, n)[:, 2:, :].reshape(2 * l, n)
    q = P._saddle_lu.solve(np.vstack([P._rhs_r @ r, np.zeros((l, n))]))[:P._ne]
    u = P._poisson_lu.solve(P._rhs_w @ w)
    z0 = P.project(PhaseField.zeros(l))
    # residual columns at the three edge midpoints (r part) and per element (w part)
    res_r = (sp_.midpoint_eval @ q).reshape(l, 3, 2, n) - r.reshape(l, 1, 2, n)
    res_w = (sp_.grad @ u).reshape(l, 2, n) - w.reshape(l, 2, n)
    z0_r = (sp_.midpoint_eval @ z0.q).reshape(l, 3, 2)
    z0_w = z0.grad_u
    wr = np.sqrt(areas / 3.0)[:, None, None, None]
    ww = np.sqrt(areas)[:, None, None]
    R = np.vstack([(wr * res_r).reshape(-1, n), (ww * res_w).reshape(-1, n)])
    r0 = np.concatenate([(wr[..., 0] * z0_r).ravel(), (ww[..., 0] * z0_w).ravel()])
    H = R.T @ R
    return QuadraticModel(H=0.5 * (H + H.T), g=R.T @ r0, c0=0.5 * float(r0 @ r0))


def materialize_qsap(instance: QsapInstance) -> tuple[np.ndarray, np.ndarray, float]:
    """Explicit ``(A, b, c)`` with ``x^T A x + b^T x + c`` equal to the objective on one-hot ``x``.

    ``x`` is ordered element-major: ``x[i*m + j] = 1`` iff element i takes point j.
    """
    l, m = instance.l, instance.m
    if l * m > MATERIALIZE_LIMIT:
        raise ValueError(f"l*m = {l * m} exceeds the materialization limit {MATERIALIZE_LIMIT}")
    model = quadratic_model(instance)
    # y = P x with P block diagonal, block i = points^T (4 x m)
    P = sp.kron(sp.eye(l), sp.csr_matrix(instance.dataset.points.T)).toarray()
    A = 0.5 * P.T @ model.H @ P
    return 0.5 * (A + A.T), P.T @ model.g, model.c0


def one_hot(assignment, m: int) -> np.ndarray:
    a = np.asarray(assignment)
    x = np.zeros(len(a) * m)
    x[np.arange(len(a)) * m + a] = 1.0
    return x


def enumerate_objectives(instance: QsapInstance, model: QuadraticModel | None = None) -> np.ndarray:
    """Objective of every assignment in lexicographic order (element 0 most significant)."""
    l, m = instance.l, instance.m
    if float(m) ** l > ENUMERATION_LIMIT:
        raise ValueError(f"m^l = {m}^{l} exceeds the enumeration limit {ENUMERATION_LIMIT}")
    model = model or quadratic_model(instance)
    Y = instance.dataset.points
    H = model.H.reshape(l, 4, l, 4)
    # Q[i, j, p, s] = y_p^T H_ij y_s
    Q = np.einsum("pa,iajb,sb->ijps", Y, H, Y)
    lin = (model.g.reshape(l, 4) @ Y.T)                       # (l, m)
    values = np.array([model.c0])
    # cross[j] holds sum_{i placed} Q[i, j, a_i, :] for every prefix, shape (prefixes, m)
    cross = [np.zeros((1, m)) for _ in range(l)]
    for k in range(l):
        step = (values[:, None] + lin[k][None, :] + 0.5 * np.diag(Q[k, k])[None, :]
                + cross[k])                                     # (prefixes, m)
        values = step.ravel()
        for j in range(k + 1, l):
            # new prefix (old, p): add Q[k, j, p, :]
            cross[j] = (cross[j][:, None, :] + Q[k, j][None, :, :]).reshape(-1, m)
        cross[k] = None
    return values


def brute_force_solve(instance: QsapInstance) -> tuple[np.ndarray, float]:
    """Global minimizer by exhaustive enumeration; the lexicographically smallest on ties."""
    values = enumerate_objectives(instance)
    best = int(np.argmin(values))
    assignment = np.array(np.unravel_index(best, (instance.m,) * instance.l), dtype=np.int64)
    return assignment, qsap_objective(instance, assignment)


class PodModel:
    """Reduced equilibrium projection on the affine snapshot span ``z0 + span{z_e - z0}``.

    Snapshots are DOF vectors ``(q, u)``; the basis is Z-orthonormal, i.e.
    orthonormal in the Gram matrix ``blockdiag(M, K)``.
    """

    def __init__(self, projector: EquilibriumProjector, max_snapshots: int = 200,
                 max_basis: int = 40, energy: float = 1.0 - 1e-8):
        self.projector = projector
        sp_ = projector.spaces
        self.gram = sp.block_diag([sp_.M, sp_.K]).tocsr()
        self.z0 = projector.project(PhaseField.zeros(projector.mesh.num_triangles))
        self.d0 = self.z0.dofs()
        self.max_snapshots = max_snapshots
        self.max_basis = max_basis
        self.energy = energy
        self.snapshots: list[np.ndarray] = []
        self.ne = projector.mesh.num_edges
        self.updates = 0
        # dual maps: <(q, u), (r, w)>_Z = q^T Rr r + u^T Rw w
        self._Ry = sp.block_diag([projector._rhs_r, projector._rhs_w]).tocsr()
        self._set_basis(np.zeros((len(self.d0), 0)))

    @property
    def size(self) -> int:
        return self.basis.shape[1]

    def _set_basis(self, basis: np.ndarray) -> None:
        self.basis = basis
        # c = W y_stacked - offset, y_stacked = [r_flat, w_flat]
        self._W = (self._Ry.T @ basis).T if basis.shape[1] else np.zeros((0, self._Ry.shape[1]))
        self._offset = basis.T @ (self.gram @ self.d0)

    def add_snapshot(self, dofs: np.ndarray, rebuild: bool = True) -> None:
        self.snapshots.append(np.asarray(dofs, dtype=float) - self.d0)
        if len(self.snapshots) > self.max_snapshots:
            self.snapshots.pop(0)
        if rebuild:
            self.rebuild()

    def rebuild(self) -> None:
        self.updates += 1
        if not self.snapshots:
            self._set_basis(np.zeros((len(self.d0), 0)))
            return
        S = np.column_stack(self.snapshots)
        C = S.T @ (self.gram @ S)
        lam, V = np.linalg.eigh(0.5 * (C + C.T))
        order = np.argsort(lam)[::-1]
        lam, V = lam[order], V[:, order]
        keep = lam > max(lam[0], 0.0) * 1e-13
        lam, V = lam[keep], V[:, keep]
        if len(lam) == 0:
            self._set_basis(np.zeros((len(self.d0), 0)))
            return
        cum = np.cumsum(lam) / lam.sum()
        k = min(int(np.searchsorted(cum, self.energy) + 1), self.max_basis, len(lam))
        Phi = S @ V[:, :k] / np.sqrt(lam[:k])
        # one Gram-Schmidt pass in the Z inner product against rounding drift
        G = Phi.T @ (self.gram @ Phi)
        Lc = np.linalg.cholesky(0.5 * (G + G.T))
        Phi = np.linalg.solve(Lc, Phi.T).T
        self._set_basis(Phi)

    def stacked(self, y: PhaseField) -> np.ndarray:
        return np.concatenate([y.r.ravel(), y.w.ravel()])

    def coefficients(self, y: PhaseField) -> np.ndarray:
        return self._W @ self.stacked(y) - self._offset

    def reduced_dofs(self, y: PhaseField) -> np.ndarray:
        return self.d0 + self.basis @ self.coefficients(y)

    def reduced_project(self, y: PhaseField) -> PhaseField:
        d = self.reduced_dofs(y)
        q, u = d[:self.ne], d[self.ne:]
        grad_u = (self.projector.spaces.grad @ u).reshape(-1, 2)
        return PhaseField(np.zeros_like(grad_u), grad_u, q)

    def divergence_residual(self, dofs: np.ndarray) -> float:
        q = dofs[:self.ne]
        return float(np.max(np.abs(self.projector.spaces.B @ q + self.projector.load_f)))


def pod_update(model: PodModel, snapshot_dofs: np.ndarray) -> None:
    model.add_snapshot(snapshot_dofs)


def pod_reduced_project(model: PodModel, y: PhaseField) -> PhaseField:
    return model.reduced_project(y)


def _relative(a: float, b: float) -> float:
    if b != 0.0:
        return abs(a - b) / abs(b)
    return 0.0 if a == b else float("inf")


class _ElementEnergy:
    """Per-element squared distance ``\\int_T |v - z0|^2`` for a constant value v."""

    def __init__(self, model: PodModel):
        sp_ = model.projector.spaces
        self.areas = sp_.mesh.areas
        self.z0_r = (sp_.midpoint_eval @ model.z0.q).reshape(-1, 3, 2)
        self.z0_w = model.z0.grad_u

    def __call__(self, t: int, v: np.ndarray) -> float:
        dr = v[:2] - self.z0_r[t]
        dw = v[2:] - self.z0_w[t]
        return float(self.areas[t] * ((dr * dr).sum() / 3.0 + dw @ dw))

    def total(self, values: np.ndarray) -> float:
        dr = values[:, None, :2] - self.z0_r
        dw = values[:, 2:] - self.z0_w
        return float(self.areas @ ((dr ** 2).sum(axis=(1, 2)) / 3.0 + (dw ** 2).sum(axis=1)))


@dataclass
class LocalSearchConfig:
    K: int = 20
    eps1: float = 0.002
    eps2: float = 0.001
    eps3: float = 0.01
    max_snapshots: int = 200
    max_basis: int = 40
    energy: float = 1.0 - 1e-8
    max_sweeps: int = 1000
    record_events: bool = False
    check_feasibility: bool = False


def local_search(instance: QsapInstance, initial, config: LocalSearchConfig | None = None,
                 pod: PodModel | None = None, initial_snapshots=()) -> SolveReport:
    """Local search over single-element reassignments with a POD surrogate.

    Candidates for an element are the K data points nearest to its current
    value.  Exact projections are computed when the surrogate value moves by
    more than ``eps1`` (relative) or looks nearly as good as the incumbent
    (``v_a < (1 + eps3) v``); only exact improvements are accepted.
    """
    config = config or LocalSearchConfig()
    t0 = time.perf_counter()
    P, data = instance.projector, instance.dataset
    a = instance.check(initial).copy()
    pts = data.points
    values = pts[a].copy()
    if pod is None:
        pod = PodModel(P, config.max_snapshots, config.max_basis, config.energy)
    for dofs in initial_snapshots:
        pod.add_snapshot(dofs, rebuild=False)
    if initial_snapshots:
        pod.rebuild()
    energy = _ElementEnergy(pod)
    l = instance.l
    col_r = np.arange(l)[:, None] * 2 + np.arange(2)          # stacked positions of r_T
    col_w = 2 * l + col_r                                       # and of w_T
    cols = np.hstack([col_r, col_w])                            # (l, 4)

    def exact(vals):
        y = PhaseField.from_values(vals)
        st = P.project(y)
        return st, objective(P, y, st)

    state, v = exact(values)
    objectives, its, wall = [v], [0], [0.0]
    events = []
    exact_solves = 1
    sweeps = 0
    accepted = 0
    v_bar = v + 1.0

    def refresh():
        y = PhaseField.from_values(values)
        return pod.coefficients(y), energy.total(values)

    c_cur, dist_cur = refresh()
    while v != v_bar and sweeps < config.max_sweeps and config.K > 0:
        v_bar = v
        sweeps += 1
        for t in range(l):
            if v <= 0.0:
                break
            current = a[t]
            nbrs = data.knn(pts[current], config.K + 1)
            nbrs = nbrs[nbrs != current][:config.K]
            for j in nbrs:
                old = values[t].copy()
                new = pts[j]
                c_new = c_cur + pod._W[:, cols[t]] @ (new - old) if pod.size else c_cur
                dist_new = dist_cur - energy(t, old) + energy(t, new)
                v_a = 0.5 * (dist_new - float(c_new @ c_new))
                v_e = None
                updated = False
                moved = False
                trial = values.copy()
                trial[t] = new
                if _relative(v_a, v) > config.eps1:
                    st_e, v_e = exact(trial)
                    exact_solves += 1
                    if _relative(v_a, v_e) > config.eps2:
                        pod.add_snapshot(st_e.dofs())
                        updated = True
                    if v_e < v:
                        moved = True
                if not moved and v_e is None and v_a < (1.0 + config.eps3) * v:
                    st_e, v_e = exact(trial)
                    exact_solves += 1
                    if v_e < v:
                        moved = True
                if config.record_events and v_e is not None:
                    ev = {"sweep": sweeps, "element": t, "candidate": int(j), "v": v,
                          "v_a": v_a, "v_e": v_e, "basis_updated": updated, "accepted": moved,
                          "basis_size": pod.size}
                    if config.check_feasibility:
                        ev["div_residual"] = pod.divergence_residual(
                            pod.d0 + pod.basis @ c_new if pod.size and not updated else
                            pod.reduced_dofs(PhaseField.from_values(trial)))
                    events.append(ev)
                if moved:
                    a[t] = j
                    values = trial
                    state, v = st_e, v_e
                    pod.add_snapshot(st_e.dofs())
                    accepted += 1
                    objectives.append(v)
                    its.append(sweeps)
                    wall.append(1e3 * (time.perf_counter() - t0))
                    break_after = True
                else:
                    break_after = False
                if moved or updated:
                    c_cur, dist_cur = refresh()
                if break_after:
                    # the element's value changed; its candidate list is stale
                    break
    y = PhaseField.from_values(values)
    report = SolveReport(
        algorithm="LS", y=y, assignment=a, state=state, objectives=objectives,
        iterations_log=its, gammas=[float("nan")] * len(objectives), wall_ms=wall,
        iterations=sweeps, termination="fixed_point" if v == v_bar or config.K == 0 else "max_iter",
        wall_time=time.perf_counter() - t0,
        extra={"accepted": accepted, "exact_solves": exact_solves, "basis_size": pod.size,
               "pod_updates": pod.updates, "events": events})
    return report


def farthest_point_selection(dataset: LocalDataSet, count: int) -> np.ndarray:
    """Deterministic farthest-point subsample, seeded at the point nearest the data mean."""
    pts = dataset.points
    count = min(int(count), dataset.m)
    first = int(np.argmin(((pts - pts.mean(axis=0)) ** 2).sum(axis=1)))
    chosen = [first]
    d = ((pts - pts[first]) ** 2).sum(axis=1)
    while len(chosen) < count:
        nxt = int(np.argmax(d))
        chosen.append(nxt)
        d = np.minimum(d, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return np.array(chosen, dtype=np.int64)


def prolong_assignment(coarse_mesh, coarse_assignment, fine_mesh) -> np.ndarray:
    """Fine assignment taking the coarse value of the coarse element containing each fine centroid."""
    owner = coarse_mesh.locate(fine_mesh.centroids)
    return np.asarray(coarse_assignment)[owner]


def coarse_exact_initialization(instance: QsapInstance, source=None, coarse_n: int = 2,
                                points: int = 16) -> np.ndarray:
    """Exact QSAP on a coarse mesh with a few farthest-point data, prolonged to the fine mesh."""
    from .equilibrium import build_projector

    coarse = build_mesh(coarse_n)
    l = coarse.num_triangles
    limit = int(np.floor(ENUMERATION_LIMIT ** (1.0 / l) + 1e-9))
    count = max(1, min(points, limit, instance.m))
    chosen = farthest_point_selection(instance.dataset, count)
    sub = LocalDataSet(instance.dataset.points[chosen], dict(instance.dataset.metadata))
    coarse_instance = QsapInstance(build_projector(coarse, source), sub)
    best, _ = brute_force_solve(coarse_instance)
    return prolong_assignment(coarse, chosen[best], instance.projector.mesh)


def ps_multistart_initialization(instance: QsapInstance, starts: int = 10, seed: int = 0,
                                 gamma0: float = 1.4):
    """Best of ``starts`` PS runs from random points; the others' projections seed the POD basis."""
    reports = [run_ps(instance.projector, instance.dataset,
                      SolverConfig("PS", gamma0=gamma0, init="random", seed=seed + i))
               for i in range(starts)]
    best = min(range(starts), key=lambda i: reports[i].objective)
    snapshots = [r.state.dofs() for i, r in enumerate(reports) if i != best]
    return reports[best].assignment, snapshots, reports


def read_assignment(path) -> np.ndarray:
    with open(path) as fh:
        vals = [int(tok) for line in fh for tok in line.split("#", 1)[0].split()]
    if not vals:
        raise ValueError(f"{path}: empty assignment file")
    return np.array(vals, dtype=np.int64)

