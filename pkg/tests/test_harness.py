from __future__ import annotations

import math

import numpy as np
import pytest
import sympy

from ddfem.harness import (CSV_COLUMNS, ExperimentSpec, NewtonDivergence, compute_eoc,
                           compute_errors, eoc_table, parse_config, read_csv, rows_to_csv,
                           run_experiment, run_point, solve_classical_fem_newton)
from ddfem.material import kappa_jacobian, kappa_linear, kappa_nonlinear
from ddfem.mesh import build_mesh
from ddfem.problems import exact_grad_u, exact_u, source_arctan, source_fourier
from ddfem.spaces import p1_interpolate
from ddfem.solvers import run_pg


def identity_jacobian(g):
    return np.broadcast_to(np.eye(2), g.shape[:-1] + (2, 2))


def test_source_arctan_symbolic():
    x, y = sympy.symbols("x y")
    u = sympy.sin(sympy.pi * x) * sympy.sin(sympy.pi * y)
    gx, gy = sympy.diff(u, x), sympy.diff(u, y)
    s = gx ** 2 + gy ** 2
    phi = 2 * sympy.atan(s - 1) + sympy.pi / 2 + 2
    f = -(sympy.diff(phi * gx, x) + sympy.diff(phi * gy, y))
    fn = sympy.lambdify((x, y), f, "numpy")
    rng = np.random.default_rng(0)
    px, py = rng.uniform(0, 1, 50), rng.uniform(0, 1, 50)
    assert np.allclose(source_arctan(px, py), fn(px, py), rtol=1e-12, atol=1e-12)


def test_source_fourier_is_minus_laplacian():
    assert source_fourier(0.5, 0.5) == pytest.approx(2 * math.pi ** 2)


def test_exact_solution_has_zero_error():
    err = compute_errors(build_mesh(5), exact_u, exact_grad_u)
    assert err.err_l2 == 0.0 and err.err_h1 == 0.0


def test_interpolation_error_scale():
    mesh = build_mesh(200)
    err = compute_errors(mesh, p1_interpolate(mesh, exact_u))
    assert 1e-5 < err.err_l2 < 1e-4 * 2


def test_pg_errors_fourier(fourier_projector20, fourier_grid):
    rep = run_pg(fourier_projector20, fourier_grid)
    err = compute_errors(fourier_projector20.mesh, rep.state)
    assert err.err_l2 == pytest.approx(1.731e-2, rel=0.15)
    assert err.err_h1 == pytest.approx(7.973e-2, rel=0.10)


def test_linear_law_needs_one_newton_step():
    res = solve_classical_fem_newton(build_mesh(16), kappa_linear, identity_jacobian, source_fourier)
    assert res.steps == 1
    assert res.residuals[-1] <= 1e-10


def test_newton_nonlinear_n50():
    mesh = build_mesh(50)
    res = solve_classical_fem_newton(mesh, kappa_nonlinear, kappa_jacobian, source_arctan)
    assert res.steps <= 8
    # quadratic convergence near the solution
    r = res.residuals
    assert r[-1] <= 1e-10
    assert all(r[k + 1] <= 5.0 * r[k] ** 2 for k in range(len(r) - 3, len(r) - 1))
    err = compute_errors(mesh, res.u)
    assert err.err_l2 == pytest.approx(1.601e-3, rel=0.05)
    assert err.err_l2 == pytest.approx(1.5494e-3, rel=1e-3)
    assert err.err_h1 == pytest.approx(3.1426e-2, rel=1e-3)


def test_newton_reports_divergence():
    with pytest.raises(NewtonDivergence):
        solve_classical_fem_newton(build_mesh(8), kappa_nonlinear, kappa_jacobian, source_arctan,
                                   max_newton=1)


@pytest.mark.parametrize("e1,e2,expected", [(1.0, 0.5, 1.0), (1.0, 0.25, 2.0),
                                            (1.601e-3, 4.004e-4, 1.9995)])
def test_eoc_examples(e1, e2, expected):
    h1, h2 = math.sqrt(2) / 50, math.sqrt(2) / 100
    assert compute_eoc(e1, e2, h1, h2) == pytest.approx(expected, abs=5e-5)


def test_eoc_rejects_bad_input():
    with pytest.raises(ValueError):
        compute_eoc(0.0, 1.0, 0.1, 0.05)
    with pytest.raises(ValueError):
        compute_eoc(1.0, 1.0, 0.1, 0.1)


def test_classical_fem_eoc_series():
    rows = [run_point("arctan", n, 0, 0.0, "fem", 0) for n in (25, 50, 100)]
    table = eoc_table(rows)
    for entry in table[1:]:
        assert 1.9 <= entry["eoc_l2"] <= 2.1
        assert 0.95 <= entry["eoc_h1"] <= 1.05


def test_spec_validation():
    with pytest.raises(ValueError, match="algorithms"):
        ExperimentSpec(algorithms=[])
    with pytest.raises(ValueError):
        ExperimentSpec(algorithms=["newton"])
    with pytest.raises(ValueError):
        ExperimentSpec(law="hooke")
    with pytest.raises(ValueError):
        ExperimentSpec(mesh_sizes=[0])


def test_table_one_study(tmp_path):
    spec = ExperimentSpec(law="fourier", mesh_sizes=[20], data_sizes=[11025], sampling="grid",
                          algorithms=["pg", "ps", "dr1", "dr2"], output=str(tmp_path / "t1.csv"))
    rows = run_experiment(spec)
    assert [r["algorithm"] for r in rows] == ["pg", "ps", "dr1", "dr2"]
    obj = {r["algorithm"]: r["objective"] for r in rows}
    assert obj["pg"] == pytest.approx(1.281e-2, rel=0.15)
    assert obj["ps"] <= obj["pg"]
    assert obj["dr2"] == pytest.approx(1.299e-2, rel=0.10)
    back = read_csv(spec.output)
    assert tuple(back[0].keys()) == CSV_COLUMNS
    assert float(back[0]["objective"]) == pytest.approx(obj["pg"], rel=1e-8)


def _body_without_timing(text):
    lines = text.strip().splitlines()
    col = lines[0].split(",").index("wall_ms")
    return [",".join(v for i, v in enumerate(l.split(",")) if i != col) for l in lines[1:]]


def test_rerun_is_identical_apart_from_timing():
    spec = ExperimentSpec(law="arctan", mesh_sizes=[6], data_sizes=[300], noise_levels=[0.0, 0.1],
                          algorithms=["pg", "ps"], seeds=[1, 2])
    a = rows_to_csv(run_experiment(spec))
    b = rows_to_csv(run_experiment(spec))
    assert _body_without_timing(a) == _body_without_timing(b)


def test_parallel_rows_keep_spec_order():
    spec = ExperimentSpec(law="fourier", mesh_sizes=[4, 2], data_sizes=[100], algorithms=["pg", "fem"],
                          seeds=[0], jobs=2)
    rows = run_experiment(spec)
    assert [(r["n"], r["algorithm"]) for r in rows] == [(4, "pg"), (4, "fem"), (2, "pg"), (2, "fem")]


def test_csv_number_format():
    text = rows_to_csv([{c: 1 for c in CSV_COLUMNS} | {"objective": 0.0123456789, "algorithm": "pg"}])
    header, row = text.strip().splitlines()
    assert header.split(",") == list(CSV_COLUMNS)
    assert "1.234567890e-02" in row


def test_parse_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# study\nlaw = fourier\nmesh-sizes = 10, 20  # two meshes\n\n")
    assert parse_config(p) == {"law": "fourier", "mesh_sizes": "10, 20"}
    p.write_text("law fourier\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_config(p)
