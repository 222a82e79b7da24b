from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddfem.material import (DataFormatError, LocalDataSet, generate_grid, generate_samples,
                            kappa_factor, kappa_jacobian, kappa_nonlinear, load_dataset,
                            make_rng, material_law, project_data, save_dataset)
from ddfem.mesh import build_mesh
from ddfem.spaces import PhaseField, assemble


def test_grid_sizes_and_corners():
    assert generate_grid(105).m == 11025
    pts = generate_grid(2, "fourier").points
    assert {tuple(p) for p in pts[:, 2:]} == {(-4.0, -4.0), (-4.0, 4.0), (4.0, -4.0), (4.0, 4.0)}
    assert np.array_equal(pts[:, :2], pts[:, 2:])


def test_fourier_grid_has_r_equal_w():
    pts = generate_grid(105, "fourier").points
    assert np.all(pts[:, :2] - pts[:, 2:] == 0)


def test_kappa_values():
    assert np.all(kappa_nonlinear(np.zeros(2)) == 0)
    w = np.array([0.6, 0.8])
    assert kappa_factor(w) == pytest.approx(0.5 * np.pi + 2)
    assert np.allclose(kappa_nonlinear(w), (0.5 * np.pi + 2) * w)
    assert kappa_factor(np.array([1e4, 0.0])) == pytest.approx(1.5 * np.pi + 2, rel=1e-7)


def test_kappa_jacobian_matches_finite_differences():
    rng = np.random.default_rng(0)
    w = rng.uniform(-2, 2, size=(20, 2))
    J = kappa_jacobian(w)
    eps = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        fd = (kappa_nonlinear(w + e) - kappa_nonlinear(w - e)) / (2 * eps)
        assert np.allclose(J[:, :, d], fd, atol=1e-7)


def test_unknown_law():
    with pytest.raises(ValueError):
        material_law("hooke")


def test_noise_free_samples_on_the_law():
    ds = generate_samples(500, 0.0, 4)
    assert np.allclose(ds.points[:, :2], kappa_nonlinear(ds.points[:, 2:]), atol=0, rtol=0)


def test_noise_bound():
    clean = generate_samples(1000, 0.0, 7).points
    noisy = generate_samples(1000, 0.1, 7).points
    assert np.abs(noisy - clean).max() <= 0.1
    assert np.abs(noisy - clean).max() > 0.09


def test_same_seed_same_data():
    assert np.array_equal(generate_samples(300, 0.01, 11).points, generate_samples(300, 0.01, 11).points)
    assert not np.array_equal(generate_samples(300, 0.01, 11).points, generate_samples(300, 0.01, 12).points)


def test_rng_stream_is_pinned():
    # Philox with key = seed; first draws frozen so other implementations can compare
    u = make_rng(0).uniform(size=3)
    assert u.tolist() == [0.014067035665647709, 0.2577672456246177, 0.47156538101528966]
    assert isinstance(make_rng(0).bit_generator, np.random.Philox)


def test_constant_field_maps_to_that_point():
    ds = generate_samples(50, 0.0, 1)
    sp_ = assemble(build_mesh(2))
    y = PhaseField.from_values(np.tile(ds.points[17], (8, 1)))
    _, a = project_data(ds, sp_, y)
    assert np.all(a == 17)


def test_nearest_small_examples():
    ds = LocalDataSet(np.array([[0.0, 0, 0, 0], [1.0, 0, 0, 0], [2.0, 0, 0, 0]]))
    assert ds.nearest([0.6, 0, 0, 0])[0] == 1
    assert ds.nearest([0.5, 0, 0, 0])[0] == 0
    assert ds.nearest([1.5, 0, 0, 0])[0] == 1


def test_ties_beyond_k_candidates():
    pts = np.zeros((10, 4))
    pts[:, 0] = [1, -1, 1, -1, 1, -1, 1, -1, 5, 6]
    ds = LocalDataSet(pts[::-1].copy())
    # eight points tied at distance 1 from the origin: lowest index among them wins
    assert ds.nearest(np.zeros(4))[0] == 2


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31 - 1))
def test_nearest_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    ds = LocalDataSet(np.round(rng.uniform(-2, 2, size=(200, 4)), 1))
    q = np.round(rng.uniform(-2.5, 2.5, size=(50, 4)), 1)
    assert np.array_equal(ds.nearest(q), ds.nearest_bruteforce(q))


def test_knn_order():
    ds = generate_samples(400, 0.0, 3)
    p = ds.points[5]
    idx = ds.knn(p, 6)
    assert idx[0] == 5
    d = ((ds.points[idx] - p) ** 2).sum(axis=1)
    assert np.all(np.diff(d) >= 0)
    full = np.argsort(((ds.points - p) ** 2).sum(axis=1), kind="stable")[:6]
    assert np.array_equal(np.sort(idx), np.sort(full))


def test_save_load_roundtrip(tmp_path):
    ds = generate_samples(40, 0.1, 2, "fourier")
    path = tmp_path / "d.txt"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.points, ds.points)
    assert back.metadata == ds.metadata


def test_malformed_row(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("# law=fourier\n1 2 3 4\n1 2 3\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_dataset(path)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("# law=fourier\n")
    with pytest.raises(DataFormatError, match="empty data set"):
        load_dataset(path)
    with pytest.raises(ValueError, match="empty data set"):
        LocalDataSet(np.zeros((0, 4)))


def test_dataset_is_immutable():
    ds = generate_samples(5, 0.0, 0)
    with pytest.raises(ValueError):
        ds.points[0, 0] = 1.0


def test_field_rejects_bad_assignment():
    ds = generate_samples(5, 0.0, 0)
    with pytest.raises(IndexError):
        ds.field(np.array([0, 5]))
