"""Compiled kernels vs the numpy fallback: same contract, same numbers."""

import numpy as np
import pytest

from ssl_lab import backend
from ssl_lab import _kernels_py as kpy

knat = pytest.importorskip(
    "ssl_lab._kernels", reason="compiled extension not built")


def _batch(rng, n=64, m=9, scale=2.0):
    return np.ascontiguousarray(scale * rng.standard_normal((n, m)))


def test_backend_selected_a_real_module():
    assert backend.name in ("native", "python")
    assert backend.relu_forward is getattr(
        knat if backend.name == "native" else kpy, "relu_forward")


def test_relu_kernels_agree(rng):
    x = _batch(rng)
    x[0, 0] = 0.0  # pin a kink
    assert np.array_equal(knat.relu_forward(x), kpy.relu_forward(x))
    assert np.array_equal(knat.relu_grad_mask(x), kpy.relu_grad_mask(x))
    assert np.array_equal(kpy.relu_forward(x), np.maximum(x, 0.0))
    assert knat.relu_grad_mask(np.zeros((1, 1)))[0, 0] == 0.0


def test_srelu_kernels_agree(rng):
    x = _batch(rng)
    b = np.ascontiguousarray(rng.uniform(0.0, 1.5, x.shape[1]))
    x[0, 0] = b[0]   # exact kink
    x[0, 1] = -b[1]  # exact kink, negative side
    assert np.array_equal(knat.srelu_forward(x, b), kpy.srelu_forward(x, b))
    assert np.array_equal(knat.srelu_grad_mask(x, b), kpy.srelu_grad_mask(x, b))
    # both treat the closed interval |x| <= b as the flat region
    assert knat.srelu_forward(x, b)[0, 0] == 0.0
    assert knat.srelu_grad_mask(x, b)[0, 0] == 0.0
    assert knat.srelu_grad_mask(x, b)[0, 1] == 0.0


def test_srelu_zero_bias_is_identity(rng):
    x = _batch(rng, n=8, m=4)
    b = np.zeros(4)
    assert np.array_equal(knat.srelu_forward(x, b), x)
    assert np.array_equal(kpy.srelu_forward(x, b), x)


def test_row_norms_agree(rng):
    x = _batch(rng, n=30, m=7)
    expected = np.linalg.norm(x, axis=1)
    assert np.max(np.abs(knat.row_norms(x) - expected)) <= 1e-12
    assert np.max(np.abs(kpy.row_norms(x) - expected)) <= 1e-12


def test_batchnorm_forward_kernels_agree(rng):
    y = _batch(rng, n=33, m=5)
    gamma = np.ascontiguousarray(rng.uniform(0.5, 1.5, 5))
    beta = np.ascontiguousarray(rng.standard_normal(5))
    eps = 1e-5
    outs_n = knat.batchnorm_train_forward(y, gamma, beta, eps)
    outs_p = kpy.batchnorm_train_forward(y, gamma, beta, eps)
    for a, b in zip(outs_n, outs_p):
        assert np.max(np.abs(a - b)) <= 1e-13

    # independent plain-numpy reference, no shared code with either kernel
    mean = y.sum(axis=0) / y.shape[0]
    var = ((y - mean) ** 2).sum(axis=0) / y.shape[0]
    ref = gamma * (y - mean) / np.sqrt(var + eps) + beta
    assert np.max(np.abs(outs_n[0] - ref)) <= 1e-12


def test_batchnorm_backward_kernels_agree(rng):
    n, m = 21, 4
    y = _batch(rng, n=n, m=m)
    gamma = np.ascontiguousarray(rng.uniform(0.5, 1.5, m))
    beta = np.zeros(m)
    _, xhat, inv_std, _, _ = kpy.batchnorm_train_forward(y, gamma, beta, 1e-5)
    dout = np.ascontiguousarray(rng.standard_normal((n, m)))
    dy_n, dg_n, db_n = knat.batchnorm_backward(dout, xhat, inv_std, gamma)
    dy_p, dg_p, db_p = kpy.batchnorm_backward(dout, xhat, inv_std, gamma)
    assert np.max(np.abs(dy_n - dy_p)) <= 1e-13
    assert np.max(np.abs(dg_n - dg_p)) <= 1e-13
    assert np.max(np.abs(db_n - db_p)) <= 1e-13


def test_batchnorm_backward_matches_finite_differences(rng):
    n, m = 12, 3
    y = _batch(rng, n=n, m=m, scale=1.5)
    gamma = np.ascontiguousarray(rng.uniform(0.5, 1.5, m))
    beta = np.ascontiguousarray(rng.standard_normal(m))
    eps = 1e-5
    # scalar objective: sum(out * C) for a fixed random C
    C = rng.standard_normal((n, m))

    def f(yv, gv, bv):
        out = kpy.batchnorm_train_forward(
            np.ascontiguousarray(yv), np.ascontiguousarray(gv),
            np.ascontiguousarray(bv), eps)[0]
        return float((out * C).sum())

    _, xhat, inv_std, _, _ = kpy.batchnorm_train_forward(y, gamma, beta, eps)
    dy, dgamma, dbeta = kpy.batchnorm_backward(C, xhat, inv_std, gamma)

    h = 1e-6
    for arr, grad, label in ((y, dy, "y"), (gamma, dgamma, "gamma"),
                             (beta, dbeta, "beta")):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            bump = {"y": (h, 0, 0), "gamma": (0, h, 0), "beta": (0, 0, h)}[label]
            args_p = [a.copy() for a in (y, gamma, beta)]
            args_m = [a.copy() for a in (y, gamma, beta)]
            which = {"y": 0, "gamma": 1, "beta": 2}[label]
            args_p[which][idx] += h
            args_m[which][idx] -= h
            fd = (f(*args_p) - f(*args_m)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=2e-5, abs=2e-7), (label, idx)
            del bump


def test_kernels_preserve_input(rng):
    x = _batch(rng, n=10, m=4)
    b = np.ascontiguousarray(rng.uniform(0.1, 1.0, 4))
    snap = x.copy()
    knat.relu_forward(x)
    knat.relu_grad_mask(x)
    knat.srelu_forward(x, b)
    knat.srelu_grad_mask(x, b)
    knat.row_norms(x)
    assert np.array_equal(x, snap)
