"""Both kernel backends against each other and against the reference oracles."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from gazetrack import kernels
from gazetrack.errors import SingularUpdateError
from oracles import brute_force_assignment, greedy_nms, kalman_predict, kalman_update, mahalanobis_sq, scalar_iou, scalar_siou


def random_boxes(rng, n):
    return np.column_stack([rng.uniform(0, 200, (n, 2)), rng.uniform(5, 80, (n, 2))])


def random_states(rng, n):
    means = np.column_stack([rng.uniform(0, 500, (n, 2)), rng.uniform(100, 4000, n),
                             rng.uniform(0.4, 2.5, n), rng.normal(0, 20, (n, 3))])
    a = rng.normal(size=(n, 7, 7)) * 5
    covs = a @ a.transpose(0, 2, 1) + np.eye(7)
    return means, covs


def test_backend_names():
    names = kernels.available_backends()
    assert "python" in names
    assert kernels.BACKEND in names


def test_env_forces_python():
    code = "import gazetrack.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, GAZETRACK_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.parametrize("seed", range(30))
def test_linear_assignment_optimal(backend, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = int(rng.integers(n, 8))
    cost = rng.uniform(0, 10, (n, m))
    r2c = backend.linear_assignment(cost)
    assert len(set(r2c.tolist())) == n
    _, total, _ = brute_force_assignment(cost, np.zeros_like(cost, dtype=bool))
    assert math.fsum(cost[np.arange(n), r2c]) == pytest.approx(total, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_linear_assignment_duals(backend, seed):
    rng = np.random.default_rng(seed)
    cost = rng.uniform(0, 10, (4, 6))
    r2c, u, v = backend.linear_assignment(cost, duals=True)
    reduced = cost - u[:, None] - v[None, :]
    assert reduced.min() >= -1e-9
    assert np.allclose(reduced[np.arange(4), r2c], 0.0, atol=1e-9)
    free = np.setdiff1d(np.arange(6), r2c)
    assert np.all(v[free] == 0.0)


def test_linear_assignment_rejects_tall(backend):
    with pytest.raises(ValueError):
        backend.linear_assignment(np.zeros((3, 2)))


@pytest.mark.parametrize("seed", range(5))
def test_iou_and_siou_matrices(backend, seed):
    rng = np.random.default_rng(seed)
    a, b = random_boxes(rng, 6), random_boxes(rng, 5)
    ov = backend.iou_matrix(a, b)
    sm = backend.siou_matrix(a, b, 0.05, 1.5)
    for i in range(6):
        for j in range(5):
            assert ov[i, j] == pytest.approx(scalar_iou(a[i], b[j]), abs=1e-12)
            assert sm[i, j] == pytest.approx(scalar_siou(a[i], b[j], 0.05, 1.5)[3], abs=1e-12)


def test_iou_matrix_empty(backend):
    assert backend.iou_matrix(np.empty((0, 4)), np.zeros((3, 4)) + 1).shape == (0, 3)


@pytest.mark.parametrize("seed", range(10))
def test_nms_keep(backend, seed):
    rng = np.random.default_rng(seed)
    boxes = random_boxes(rng, 25)
    scores = rng.random(25)
    classes = rng.integers(0, 2, 25)
    order = np.argsort(-scores, kind="stable").astype(np.int64)
    keep = backend.nms_keep(boxes, order, classes.astype(np.int64), 0.3)
    assert keep.tolist() == greedy_nms(boxes.tolist(), scores.tolist(), classes.tolist(), 0.3)


@pytest.mark.parametrize("seed", range(5))
def test_kalman_kernels(backend, seed):
    rng = np.random.default_rng(seed)
    means, covs = random_states(rng, 4)
    q = rng.uniform(0, 3, 7)
    r = rng.uniform(1, 5, 4)
    pm, pc = means.copy(), covs.copy()
    backend.kf_predict(pm, pc, 0.1, q)
    z = pm[:, :4] + rng.normal(0, 3, (4, 4))
    z[:, 2:] = np.abs(z[:, 2:]) + 0.1
    gate = backend.gating_matrix(pm, pc, r, z)
    um, uc = pm.copy(), pc.copy()
    backend.kf_update(um, uc, z, r)
    for k in range(4):
        em, ec = kalman_predict(means[k], covs[k], 0.1, q)
        assert np.allclose(pm[k], em, rtol=1e-12, atol=1e-9)
        assert np.allclose(pc[k], ec, rtol=1e-12, atol=1e-9)
        for j in range(4):
            assert gate[k, j] == pytest.approx(mahalanobis_sq(pm[k], pc[k], z[j], r), rel=1e-9)
        em, ec = kalman_update(pm[k], pc[k], z[k], r)
        assert np.allclose(um[k], em, rtol=1e-9, atol=1e-7)
        assert np.allclose(uc[k], ec, rtol=1e-8, atol=1e-7)


def test_kf_update_singular(backend):
    means = np.array([[0, 0, 1, 1, 0, 0, 0]], dtype=float)
    covs = np.zeros((1, 7, 7))
    with pytest.raises(SingularUpdateError):
        backend.kf_update(means, covs, np.array([[0, 0, 1, 1.0]]), np.zeros(4))


def test_backends_agree_bitwise_on_assignment():
    backends = kernels.available_backends()
    if len(backends) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(7)
    for _ in range(50):
        cost = rng.integers(0, 4, (5, 6)).astype(float)
        outs = {name: mod.linear_assignment(cost).tolist() for name, mod in backends.items()}
        assert len({tuple(v) for v in outs.values()}) == 1
