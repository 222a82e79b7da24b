"""Local material data sets and the data projection."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .spaces import PhaseField, SystemMatrices, element_means

BOX = 4.0


class DataFormatError(ValueError):
    """Malformed data set file."""


def kappa_factor(w: np.ndarray) -> np.ndarray:
    s = np.sum(np.asarray(w, dtype=float) ** 2, axis=-1)
    return 2.0 * np.arctan(s - 1.0) + 0.5 * np.pi + 2.0


def kappa_nonlinear(w: np.ndarray) -> np.ndarray:
    """Arctan law ``kappa(w) = (2 atan(|w|^2 - 1) + pi/2 + 2) w``; works on (..., 2)."""
    w = np.asarray(w, dtype=float)
    return kappa_factor(w)[..., None] * w


def kappa_jacobian(w: np.ndarray) -> np.ndarray:
    """Derivative of :func:`kappa_nonlinear`, shape (..., 2, 2)."""
    w = np.asarray(w, dtype=float)
    s = np.sum(w ** 2, axis=-1)
    dphi = 2.0 / (1.0 + (s - 1.0) ** 2)
    eye = np.eye(2)
    return (kappa_factor(w)[..., None, None] * eye
            + (2.0 * dphi)[..., None, None] * w[..., :, None] * w[..., None, :])


def kappa_linear(w: np.ndarray) -> np.ndarray:
    return np.array(w, dtype=float)


LAWS = {"fourier": kappa_linear, "arctan": kappa_nonlinear}


def material_law(name: str):
    try:
        return LAWS[name]
    except KeyError:
        raise ValueError(f"unknown material law {name!r}; expected one of {sorted(LAWS)}") from None


def make_rng(seed: int) -> np.random.Generator:
    """Philox counter-based generator; streams are reproducible across platforms."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(eq=False)
class LocalDataSet:
    """Point cloud of measured ``(r1, r2, w1, w2)`` with a k-d tree for nearest neighbors."""

    points: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ValueError(f"data points must have shape (m, 4), got {pts.shape}")
        if len(pts) == 0:
            raise ValueError("empty data set")
        pts.setflags(write=False)
        self.points = pts

    @property
    def m(self) -> int:
        return len(self.points)

    @cached_property
    def tree(self) -> cKDTree:
        # sliding-midpoint splits stay cheap for queries far from the data sheet
        return cKDTree(self.points, balanced_tree=False, compact_nodes=False)

    def nearest(self, queries: np.ndarray) -> np.ndarray:
        """Index of the closest data point per query; ties go to the lowest index."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        k = min(4, self.m)
        _, idx = self.tree.query(queries, k=k, workers=-1)
        idx = idx.reshape(len(queries), k)
        # exact distances for the candidates, so ties are decided on equal footing
        d = ((self.points[idx] - queries[:, None, :]) ** 2).sum(axis=2)
        best = d.min(axis=1, keepdims=True)
        tied = d == best
        choice = np.where(tied, idx, np.iinfo(np.int64).max).min(axis=1)
        # every candidate tied: the tie may extend past k, fall back to a scan
        for i in np.flatnonzero(tied.all(axis=1) & (k < self.m)):
            choice[i] = self.nearest_bruteforce(queries[i])[0]
        return choice

    def nearest_bruteforce(self, queries: np.ndarray) -> np.ndarray:
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        out = np.empty(len(queries), dtype=np.int64)
        for i, z in enumerate(queries):
            d = ((self.points - z) ** 2).sum(axis=1)
            out[i] = int(np.argmin(d))
        return out

    def knn(self, point: np.ndarray, k: int) -> np.ndarray:
        """Indices of the ``k`` nearest data points, ascending distance then index."""
        k = min(int(k), self.m)
        if k <= 0:
            return np.empty(0, dtype=np.int64)
        _, idx = self.tree.query(np.asarray(point, dtype=float), k=k)
        idx = np.atleast_1d(idx)
        d = ((self.points[idx] - point) ** 2).sum(axis=1)
        return idx[np.lexsort((idx, d))]

    def field(self, assignment: np.ndarray) -> PhaseField:
        """Piecewise constant field taking data point ``assignment[T]`` on element T."""
        assignment = np.asarray(assignment)
        if assignment.size and (assignment.min() < 0 or assignment.max() >= self.m):
            raise IndexError(f"assignment index out of range [0, {self.m})")
        return PhaseField.from_values(self.points[assignment])


def generate_grid(m_per_axis: int, law: str = "fourier", box: float = BOX) -> LocalDataSet:
    """``r = kappa(w)`` with ``w`` on a uniform tensor grid over [-box, box]^2, endpoints included."""
    if m_per_axis < 2:
        raise ValueError("m_per_axis must be at least 2")
    ticks = np.linspace(-box, box, int(m_per_axis))
    w1, w2 = np.meshgrid(ticks, ticks, indexing="ij")
    w = np.column_stack([w1.ravel(), w2.ravel()])
    r = material_law(law)(w)
    meta = {"law": law, "m": len(w), "noise": 0.0, "sampling": "grid", "seed": ""}
    return LocalDataSet(np.hstack([r, w]), meta)


def generate_fourier_grid(m_per_axis: int, box: float = BOX) -> LocalDataSet:
    return generate_grid(m_per_axis, "fourier", box)


def generate_samples(m: int, noise: float, seed: int, law: str = "arctan",
                     box: float = BOX) -> LocalDataSet:
    """Uniform ``w`` in [-box, box]^2, ``r = kappa(w)``, plus uniform noise on all 4 components."""
    if m < 1:
        raise ValueError("sample count must be positive")
    if noise < 0:
        raise ValueError("noise bound must be nonnegative")
    rng = make_rng(seed)
    w = rng.uniform(-box, box, size=(int(m), 2))
    pts = np.hstack([material_law(law)(w), w])
    if noise > 0:
        pts = pts + rng.uniform(-noise, noise, size=pts.shape)
    meta = {"law": law, "m": int(m), "noise": float(noise), "sampling": "random", "seed": int(seed)}
    return LocalDataSet(pts, meta)


def generate_nonlinear_samples(m: int, noise: float, seed: int) -> LocalDataSet:
    return generate_samples(m, noise, seed, "arctan")


def project_data(dataset: LocalDataSet, spaces: SystemMatrices,
                 z: PhaseField) -> tuple[PhaseField, np.ndarray]:
    """Element-wise nearest data point to the element mean of ``z``."""
    means = element_means(spaces, z)
    assignment = dataset.nearest(means)
    return dataset.field(assignment), assignment


def save_dataset(dataset: LocalDataSet, path) -> None:
    with open(path, "w") as fh:
        fh.write("# columns=r1 r2 w1 w2\n")
        for key, value in dataset.metadata.items():
            fh.write(f"# {key}={value}\n")
        for row in dataset.points:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def _parse_meta_value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def load_dataset(path) -> LocalDataSet:
    if not os.path.exists(path):
        raise FileNotFoundError(f"data set file not found: {path}")
    meta, rows = {}, []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                key, sep, value = text[1:].strip().partition("=")
                if sep and key.strip() != "columns":
                    meta[key.strip()] = _parse_meta_value(value.strip())
                continue
            parts = text.split()
            if len(parts) != 4:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected 4 columns, found {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    if not rows:
        raise DataFormatError(f"{path}: empty data set")
    return LocalDataSet(np.array(rows), meta)
