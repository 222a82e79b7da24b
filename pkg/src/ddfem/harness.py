"""Experiment orchestration: reference FEM, error metrics, EOC and CSV studies."""

from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .equilibrium import EquilibriumState, build_projector
from .material import (generate_grid, generate_samples, kappa_jacobian,
                       kappa_linear, kappa_nonlinear, material_law)
from .mesh import Mesh, build_mesh
from .problems import (GRAD_U_L2_NORM, U_L2_NORM, exact_grad_u, exact_u,
                       source_for)
from .quadrature import SIX_POINT_BARY, SIX_POINT_WEIGHTS, triangle_points
from .spaces import assemble, p1_gradient_matrix, p1_mass_matrix
from .solvers import SolverConfig, solve

CSV_COLUMNS = ("n", "m", "noise", "algorithm", "objective", "err_l2", "err_h1",
               "iterations", "wall_ms", "seed", "gamma_final")
STUDY_ALGORITHMS = ("pg", "ps", "dr1", "dr2", "fem")


class NewtonDivergence(RuntimeError):
    pass


@dataclass
class ErrorReport:
    err_l2: float
    err_h1: float
    objective: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0


def _full_vertex_values(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape == (mesh.num_vertices,):
        return u
    full = np.zeros(mesh.num_vertices)
    full[mesh.interior_vertices] = u
    return full


def compute_errors(mesh: Mesh, u_h, grad_u_h=None, u=exact_u, grad_u=exact_grad_u,
                   u_norm: float = U_L2_NORM, grad_norm: float = GRAD_U_L2_NORM) -> ErrorReport:
    """Relative L2 and H1-seminorm errors by the six-point rule.

    ``u_h`` is a P1 field (interior or full vertex values), an
    :class:`EquilibriumState`, or a callable ``u_h(x, y)``; in the callable case
    ``grad_u_h`` must be a callable too.  Element gradients default to the P1
    gradient of ``u_h``.
    """
    pts = triangle_points(mesh.vertices[mesh.triangles], SIX_POINT_BARY)
    x, y = pts[..., 0], pts[..., 1]
    if isinstance(u_h, EquilibriumState):
        if grad_u_h is None:
            grad_u_h = u_h.grad_u
        u_h = u_h.u
    if callable(u_h):
        uh = u_h(x, y)
        gx_h, gy_h = grad_u_h(x, y)
    else:
        full = _full_vertex_values(mesh, u_h)
        uh = full[mesh.triangles] @ SIX_POINT_BARY.T
        if grad_u_h is None:
            grad_u_h = (p1_gradient_matrix(mesh, interior_only=False) @ full).reshape(-1, 2)
        gx_h, gy_h = grad_u_h[:, 0:1], grad_u_h[:, 1:2]
    gx, gy = grad_u(x, y)
    l2 = mesh.areas @ (((u(x, y) - uh) ** 2) @ SIX_POINT_WEIGHTS)
    h1 = mesh.areas @ (((gx - gx_h) ** 2 + (gy - gy_h) ** 2) @ SIX_POINT_WEIGHTS)
    return ErrorReport(err_l2=float(np.sqrt(l2)) / u_norm, err_h1=float(np.sqrt(h1)) / grad_norm)


def p1_load(mesh: Mesh, func, mode: str = "interpolate") -> np.ndarray:
    """Load vector ``(f, phi_i)`` on interior vertices.

    ``mode="interpolate"`` integrates the nodal P1 interpolant of f exactly
    (consistent mass matrix); ``mode="quadrature"`` applies the six-point rule to f.
    """
    if mode == "interpolate":
        fv = func(mesh.vertices[:, 0], mesh.vertices[:, 1])
        return (p1_mass_matrix(mesh) @ fv)[mesh.interior_vertices]
    if mode != "quadrature":
        raise ValueError(f"unknown load mode {mode!r}")
    pts = triangle_points(mesh.vertices[mesh.triangles], SIX_POINT_BARY)
    vals = func(pts[..., 0], pts[..., 1]) * SIX_POINT_WEIGHTS            # (T, q)
    local = mesh.areas[:, None] * (vals @ SIX_POINT_BARY)                 # (T, 3)
    full = np.bincount(mesh.triangles.ravel(), weights=local.ravel(),
                       minlength=mesh.num_vertices)
    return full[mesh.interior_vertices]


@dataclass
class NewtonResult:
    u: np.ndarray
    residuals: list
    steps: int


def solve_classical_fem_newton(mesh: Mesh, kappa=kappa_nonlinear, jacobian=kappa_jacobian,
                               source=None, tol: float = 1e-10, max_newton: int = 25,
                               max_halvings: int = 10, load: str = "interpolate") -> NewtonResult:
    """P1 Galerkin solution of ``-div kappa(grad u) = f``, u = 0 on the boundary, by Newton's method.

    Residuals are measured in the discrete dual norm ``sqrt(R^T K^{-1} R)``.
    """
    if source is None:
        source = source_for("arctan" if kappa is kappa_nonlinear else "fourier")
    spaces = assemble(mesh)
    G = spaces.grad
    area = mesh.areas
    load = p1_load(mesh, source, load)
    K_lu = spla.splu(spaces.K.tocsc())
    nt = mesh.num_triangles

    def residual(u):
        g = (G @ u).reshape(-1, 2)
        flux = kappa(g) * area[:, None]
        return G.T @ flux.ravel() - load

    def dual_norm(r):
        return float(np.sqrt(max(r @ K_lu.solve(r), 0.0)))

    u = np.zeros(len(spaces.interior))
    res = residual(u)
    norms = [dual_norm(res)]
    rows = np.repeat(2 * np.arange(nt)[:, None] + np.arange(2), 2, axis=1).ravel()
    cols = np.tile(2 * np.arange(nt)[:, None] + np.arange(2), (1, 2)).ravel()
    for step in range(1, max_newton + 1):
        if norms[-1] <= tol:
            return NewtonResult(u, norms, step - 1)
        g = (G @ u).reshape(-1, 2)
        J_loc = jacobian(g) * area[:, None, None]
        D = sp.csr_matrix((J_loc.ravel(), (rows, cols)), shape=(2 * nt, 2 * nt))
        J = (G.T @ D @ G).tocsc()
        du = spla.spsolve(J, -res)
        alpha = 1.0
        for _ in range(max_halvings + 1):
            trial = u + alpha * du
            r_trial = residual(trial)
            n_trial = dual_norm(r_trial)
            if n_trial < norms[-1]:
                break
            alpha *= 0.5
        else:
            raise NewtonDivergence(
                f"Newton stalled at step {step}: residual {norms[-1]:.3e} not reduced by damping")
        u, res = trial, r_trial
        norms.append(n_trial)
    if norms[-1] <= tol:
        return NewtonResult(u, norms, max_newton)
    raise NewtonDivergence(
        f"Newton did not converge in {max_newton} steps (residual {norms[-1]:.3e})")


def compute_eoc(e1: float, e2: float, h1: float, h2: float) -> float:
    """Experimental order of convergence between two (mesh size, error) pairs."""
    if e1 <= 0 or e2 <= 0:
        raise ValueError("errors must be positive")
    if h1 <= 0 or h2 <= 0 or h1 == h2:
        raise ValueError("mesh sizes must be positive and distinct")
    return (math.log(e1) - math.log(e2)) / (math.log(h1) - math.log(h2))


@dataclass
class ExperimentSpec:
    law: str = "arctan"
    mesh_sizes: list = field(default_factory=lambda: [50])
    data_sizes: list = field(default_factory=lambda: [5000])
    noise_levels: list = field(default_factory=lambda: [0.0])
    algorithms: list = field(default_factory=lambda: ["pg"])
    seeds: list = field(default_factory=lambda: [0])
    sampling: str = "random"
    gamma0: float = 1.4
    output: str | None = None
    jobs: int = 1

    def __post_init__(self):
        for name in ("mesh_sizes", "data_sizes", "noise_levels", "algorithms", "seeds"):
            if not getattr(self, name):
                raise ValueError(f"experiment needs a nonempty {name.replace('_', ' ')} list")
        if any(int(n) < 1 for n in self.mesh_sizes):
            raise ValueError("mesh sizes must be positive")
        self.algorithms = [a.lower() for a in self.algorithms]
        for a in self.algorithms:
            if a not in STUDY_ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}; expected one of {STUDY_ALGORITHMS}")
        material_law(self.law)
        if self.sampling not in ("random", "grid"):
            raise ValueError(f"unknown sampling {self.sampling!r}")

    def grid_points(self):
        for n in self.mesh_sizes:
            for m in self.data_sizes:
                for s in self.noise_levels:
                    for seed in self.seeds:
                        for alg in self.algorithms:
                            yield int(n), int(m), float(s), alg, int(seed)


def make_dataset(law: str, m: int, noise: float, seed: int, sampling: str = "random"):
    if sampling == "grid":
        side = math.isqrt(int(m))
        if side * side != m:
            raise ValueError(f"grid sampling needs a perfect square m, got {m}")
        if noise:
            raise ValueError("grid sampling does not take noise")
        return generate_grid(side, law)
    return generate_samples(m, noise, seed, law)


def run_point(law: str, n: int, m: int, noise: float, algorithm: str, seed: int,
              sampling: str = "random", gamma0: float = 1.4) -> dict:
    """One CSV row of a study."""
    mesh = build_mesh(n)
    t0 = time.perf_counter()
    row = {"n": n, "m": m, "noise": noise, "algorithm": algorithm, "seed": seed}
    if algorithm == "fem":
        kappa, jac = ((kappa_linear, lambda g: np.broadcast_to(np.eye(2), g.shape[:-1] + (2, 2)))
                      if law == "fourier" else (kappa_nonlinear, kappa_jacobian))
        res = solve_classical_fem_newton(mesh, kappa, jac, source_for(law))
        err = compute_errors(mesh, res.u)
        row.update(objective=float("nan"), err_l2=err.err_l2, err_h1=err.err_h1,
                   iterations=res.steps, gamma_final=float("nan"))
    else:
        projector = build_projector(mesh, source_for(law))
        dataset = make_dataset(law, m, noise, seed, sampling)
        report = solve(projector, dataset, SolverConfig(algorithm.upper(), gamma0=gamma0))
        err = compute_errors(mesh, report.state)
        row.update(objective=report.objective, err_l2=err.err_l2, err_h1=err.err_h1,
                   iterations=report.iterations,
                   gamma_final=report.extra.get("gamma_final", 1.0 if algorithm in ("pg", "ps") else float("nan")))
    row["wall_ms"] = 1e3 * (time.perf_counter() - t0)
    return row


def _run_point_args(args):
    return run_point(*args)


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run every grid point; rows come back in grid order whatever the completion order."""
    tasks = [(spec.law, n, m, s, alg, seed, spec.sampling, spec.gamma0)
             for n, m, s, alg, seed in spec.grid_points()]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_run_point_args, tasks))
    else:
        rows = [run_point(*t) for t in tasks]
    if spec.output:
        with open(spec.output, "w", newline="") as fh:
            write_csv(rows, fh)
    return rows


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9e}"


def write_csv(rows, fh, columns=CSV_COLUMNS) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    write_csv(rows, buf, columns)
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def eoc_table(rows) -> list[dict]:
    """EOC of err_l2 and err_h1 between consecutive mesh sizes of each (m, noise, algorithm, seed) series."""
    series: dict = {}
    for row in rows:
        key = (row["algorithm"], int(float(row["m"])), float(row["noise"]), int(float(row["seed"])))
        series.setdefault(key, []).append(row)
    out = []
    for key, group in series.items():
        group = sorted(group, key=lambda r: int(float(r["n"])))
        prev = None
        for row in group:
            n = int(float(row["n"]))
            h = math.sqrt(2.0) / n
            e2, eh = float(row["err_l2"]), float(row["err_h1"])
            entry = {"algorithm": key[0], "m": key[1], "noise": key[2], "seed": key[3], "n": n,
                     "err_l2": e2, "err_h1": eh, "eoc_l2": float("nan"), "eoc_h1": float("nan")}
            if prev is not None:
                entry["eoc_l2"] = compute_eoc(prev[1], e2, prev[0], h)
                entry["eoc_h1"] = compute_eoc(prev[2], eh, prev[0], h)
            out.append(entry)
            prev = (h, e2, eh)
    return out


EOC_COLUMNS = ("algorithm", "m", "noise", "seed", "n", "err_l2", "eoc_l2", "err_h1", "eoc_h1")


def parse_config(path) -> dict:
    """Flat ``key = value`` file; '#' starts a comment, lists are comma separated."""
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            key, sep, value = text.partition("=")
            if not sep:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg
