"""Projection-type fixed-point solvers for the discrete distance minimization.

All solvers minimize ``F(y) = 1/2 ||pi_E(y) - y||_Z^2`` over piecewise constant
fields whose element values are data points.  Fixed points and cycles are
detected on assignments (integer vectors), never on floating-point fields.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .equilibrium import EquilibriumProjector, EquilibriumState
from .material import BOX, LocalDataSet, make_rng, project_data
from .spaces import PhaseField, z_dist

ALGORITHMS = ("PG", "PS", "DR1", "DR2")
DEFAULT_MAX_ITER = {"PG": 2000, "PS": 2000, "DR1": 5000, "DR2": 5000}
IMPROVEMENT_TOL = 1e-14


@dataclass
class SolverConfig:
    algorithm: str = "PG"
    gamma0: float = 1.4
    reduction: float = 0.9
    gamma_floor: float = 1e-3
    stall_window: int = 50
    max_iter: int | None = None
    init: object = "zero"
    seed: int = 0

    def __post_init__(self):
        self.algorithm = self.algorithm.upper()
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not 0.0 < self.gamma0 < 2.0:
            raise ValueError(f"gamma0 must lie in (0, 2), got {self.gamma0}")
        if not 0.0 < self.reduction < 1.0:
            raise ValueError(f"reduction factor must lie in (0, 1), got {self.reduction}")
        if self.stall_window < 1:
            raise ValueError("stall window must be positive")
        if self.max_iter is None:
            self.max_iter = DEFAULT_MAX_ITER[self.algorithm]
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass
class SolveReport:
    """Outcome of a solver run.

    ``objectives[i]`` is F at the data field reported after iteration
    ``iterations_log[i]``; ``gammas`` and ``wall_ms`` are aligned with it.
    """

    algorithm: str
    y: PhaseField
    assignment: np.ndarray
    state: EquilibriumState
    objectives: list = field(default_factory=list)
    iterations_log: list = field(default_factory=list)
    gammas: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    iterations: int = 0
    termination: str = "max_iter"
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return float(min(self.objectives)) if self.objectives else float("nan")

    @property
    def z(self) -> PhaseField:
        return self.state.as_field()

    def history_rows(self):
        for it, obj, gam, ms in zip(self.iterations_log, self.objectives, self.gammas, self.wall_ms):
            yield it, obj, gam, ms


def objective(projector: EquilibriumProjector, y: PhaseField,
              state: EquilibriumState | None = None) -> float:
    """``1/2 ||y - pi_E(y)||_Z^2``."""
    if state is None:
        state = projector.project(y)
    return 0.5 * z_dist(projector.spaces, y, state.as_field()) ** 2


def initial_point(projector: EquilibriumProjector, init, seed: int = 0) -> PhaseField:
    nt = projector.mesh.num_triangles
    if isinstance(init, PhaseField):
        return init
    if isinstance(init, str):
        if init == "zero":
            return PhaseField.zeros(nt)
        if init == "random":
            return PhaseField.from_values(make_rng(seed).uniform(-BOX, BOX, size=(nt, 4)))
        raise ValueError(f"unknown initial point {init!r}")
    values = np.asarray(init, dtype=float)
    if values.shape != (nt, 4):
        raise ValueError(f"explicit initial point must have shape ({nt}, 4)")
    return PhaseField.from_values(values)


class _Recorder:
    def __init__(self, algorithm: str):
        self.algorithm = algorithm
        self.t0 = time.perf_counter()
        self.best = None
        self.objectives, self.its, self.gammas, self.ms = [], [], [], []

    def record(self, it, y, a, state, value, gamma=float("nan")):
        self.objectives.append(value)
        self.its.append(it)
        self.gammas.append(gamma)
        self.ms.append(1e3 * (time.perf_counter() - self.t0))
        if self.best is None or value < self.best[3]:
            self.best = (y, a, state, value)

    def report(self, iterations, termination, **extra) -> SolveReport:
        y, a, state, _ = self.best
        return SolveReport(
            algorithm=self.algorithm, y=y, assignment=np.asarray(a), state=state,
            objectives=self.objectives, iterations_log=self.its, gammas=self.gammas,
            wall_ms=self.ms, iterations=iterations, termination=termination,
            wall_time=time.perf_counter() - self.t0, extra=extra)


def _data_step(projector, dataset, target):
    y, a = project_data(dataset, projector.spaces, target)
    state = projector.project(y)
    return y, a, state, objective(projector, y, state)


def _data_assignment(dataset, y: PhaseField):
    """Assignment of ``y`` if it already is a data field (no RT0 part, values in the cloud)."""
    if y.flux is not None:
        return None
    values = np.hstack([y.r, y.w])
    a = dataset.nearest(values)
    return a if np.array_equal(dataset.points[a], values) else None


def run_pg(projector: EquilibriumProjector, dataset: LocalDataSet,
           config: SolverConfig | None = None) -> SolveReport:
    """Alternating projections ``y <- pi_D(pi_E(y))`` until the assignment repeats."""
    config = config or SolverConfig("PG")
    rec = _Recorder("PG")
    y0 = initial_point(projector, config.init, config.seed)
    state = projector.project(y0)
    a_prev = _data_assignment(dataset, y0)
    termination, it = "max_iter", 0
    for it in range(1, config.max_iter + 1):
        y, a, state, value = _data_step(projector, dataset, state.as_field())
        rec.record(it, y, a, state, value, 1.0)
        if a_prev is not None and np.array_equal(a, a_prev):
            termination = "fixed_point"
            break
        a_prev = a
    return rec.report(it, termination)


def run_ps(projector: EquilibriumProjector, dataset: LocalDataSet,
           config: SolverConfig | None = None) -> SolveReport:
    """Proximal gradient ``y <- pi_D(y - gamma (y - pi_E(y)))``.

    The step shrinks by ``config.reduction`` whenever the iteration alternates
    between two assignments; it then resumes from the better of the two.
    """
    config = config or SolverConfig("PS")
    rec = _Recorder("PS")
    gamma = config.gamma0
    y = initial_point(projector, config.init, config.seed)
    state = projector.project(y)
    # (assignment, y, state, value) of the two most recent iterates
    prev, cur = None, None
    a0 = _data_assignment(dataset, y)
    if a0 is not None:
        cur = (a0, y, state, objective(projector, y, state))
    termination, it = "max_iter", 0
    reductions = 0
    for it in range(1, config.max_iter + 1):
        target = (1.0 - gamma) * y + gamma * state.as_field()
        y_new, a_new, state_new, value = _data_step(projector, dataset, target)
        rec.record(it, y_new, a_new, state_new, value, gamma)
        if cur is not None and np.array_equal(a_new, cur[0]):
            termination = "fixed_point"
            break
        if prev is not None and np.array_equal(a_new, prev[0]):
            gamma *= config.reduction
            reductions += 1
            if gamma < config.gamma_floor:
                termination = "fixed_point"
                break
            better = cur if cur[3] <= value else (a_new, y_new, state_new, value)
            prev, cur = None, better
            y, state = better[1], better[2]
            continue
        prev, cur = cur, (a_new, y_new, state_new, value)
        y, state = y_new, state_new
    return rec.report(it, termination, gamma_final=gamma, reductions=reductions)


def _reflect_e(projector, y):
    return 2.0 * projector.project(y).as_field() - y


def _reflect_d(projector, dataset, y):
    yd, _ = project_data(dataset, projector.spaces, y)
    return 2.0 * yd - y


def run_dr(projector: EquilibriumProjector, dataset: LocalDataSet,
           config: SolverConfig | None = None) -> SolveReport:
    """Douglas-Rachford ``y <- (y + R_B(R_A(y))) / 2``.

    DR1 reflects on E first, DR2 on D first.  Iterates live in Z; each one is
    evaluated through its data projection.  Stops after ``stall_window``
    iterations without strict improvement of the best objective.
    """
    config = config or SolverConfig("DR1")
    if config.algorithm not in ("DR1", "DR2"):
        raise ValueError("run_dr needs algorithm DR1 or DR2")
    rec = _Recorder(config.algorithm)
    y = initial_point(projector, config.init, config.seed)
    ye, a, state, value = _data_step(projector, dataset, y)
    rec.record(0, ye, a, state, value)
    best, stall = value, 0
    termination, it = "max_iter", 0
    for it in range(1, config.max_iter + 1):
        if config.algorithm == "DR1":
            rb = _reflect_d(projector, dataset, _reflect_e(projector, y))
        else:
            rb = _reflect_e(projector, _reflect_d(projector, dataset, y))
        y = 0.5 * (y + rb)
        ye, a, state, value = _data_step(projector, dataset, y)
        rec.record(it, ye, a, state, value)
        if value < best - IMPROVEMENT_TOL:
            best, stall = value, 0
        else:
            stall += 1
            if stall >= config.stall_window:
                termination = "stall"
                break
    return rec.report(it, termination)


def solve(projector: EquilibriumProjector, dataset: LocalDataSet,
          config: SolverConfig) -> SolveReport:
    if config.algorithm == "PG":
        return run_pg(projector, dataset, config)
    if config.algorithm == "PS":
        return run_ps(projector, dataset, config)
    return run_dr(projector, dataset, config)
