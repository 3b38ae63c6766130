import os
import subprocess
import sys

import numpy as np
import pytest

from transync import _kernels_py, kernels

cy = pytest.importorskip("transync._kernels_cy", reason="compiled kernels not built")


def moments_by_hand(x, y, m):
    xs, ys = x[m], y[m]
    mx, my = xs.mean(0), ys.mean(0)
    xc, yc = xs - mx, ys - my
    return m.sum(), mx, my, xc.T @ yc, (xc**2).sum(), (yc**2).sum()


def assert_moments_close(a, b, rtol=1e-10, atol=1e-12):
    np.testing.assert_array_equal(a[0], b[0])
    for u, v in zip(a[1:], b[1:]):
        np.testing.assert_allclose(u, v, rtol=rtol, atol=atol)


def batch(rng, p, n, d, keep=0.7, offset=0.0):
    X = np.ascontiguousarray(rng.standard_normal((p, n, d)) + offset)
    Y = np.ascontiguousarray(rng.standard_normal((p, n, d)) * 2 - offset)
    M = np.ascontiguousarray(rng.random((p, n)) < keep, dtype=np.uint8)
    return X, Y, M


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_pair_moments_agree(d, rng):
    X, Y, M = batch(rng, 40, 30, d, offset=50.0)
    ref = _kernels_py.pair_moments(X, Y, M)
    assert_moments_close(cy.pair_moments(X, Y, M), ref)
    for q in range(3):
        by_hand = moments_by_hand(X[q], Y[q], M[q].astype(bool))
        assert_moments_close(tuple(r[q] for r in ref), by_hand)


def test_pair_moments_edge_cases(rng):
    X, Y, M = batch(rng, 4, 6, 2)
    M[0] = 0
    out = cy.pair_moments(X, Y, M)
    assert out[0][0] == 0
    assert_moments_close(out, _kernels_py.pair_moments(X, Y, M))
    empty = np.zeros((0, 5, 2))
    res = cy.pair_moments(empty, empty, np.zeros((0, 5), np.uint8))
    assert res[0].shape == (0,)
    with pytest.raises(ValueError):
        cy.pair_moments(X, Y[:2], M)
    big = np.zeros((1, 3, 17))
    with pytest.raises(ValueError):
        cy.pair_moments(big, big, np.ones((1, 3), np.uint8))


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_all_pair_moments_agree(d, rng):
    P = np.ascontiguousarray(rng.standard_normal((7, 25, d)) * 3 + 100)
    present = np.ascontiguousarray(rng.random((7, 25)) < 0.6, dtype=np.uint8)
    a = cy.all_pair_moments(P, present)
    b = _kernels_py.all_pair_moments(P, present)
    assert_moments_close(a, b, rtol=1e-9, atol=1e-9)


def test_all_pair_moments_mirrored(rng):
    P = np.ascontiguousarray(rng.standard_normal((5, 20, 3)))
    present = np.ascontiguousarray(rng.random((5, 20)) < 0.8, dtype=np.uint8)
    count, mx, my, cross, ssx, ssy = cy.all_pair_moments(P, present)
    np.testing.assert_array_equal(count, count.T)
    np.testing.assert_array_equal(mx, my.transpose(1, 0, 2))
    np.testing.assert_array_equal(ssx, ssy.T)
    np.testing.assert_array_equal(cross, cross.transpose(1, 0, 3, 2))


def test_all_pair_moments_shapes(rng):
    with pytest.raises(ValueError):
        cy.all_pair_moments(np.zeros((3, 4, 2)), np.ones((3, 5), np.uint8))
    out = cy.all_pair_moments(np.zeros((0, 4, 2)), np.ones((0, 4), np.uint8))
    assert out[0].shape == (0, 0)


def test_max_triple_residual_agree(rng):
    B = np.ascontiguousarray(rng.standard_normal((6, 6, 4, 4)))
    assert cy.max_triple_residual(B) == pytest.approx(_kernels_py.max_triple_residual(B), rel=1e-12)
    worst = max(np.linalg.norm(B[i, j] @ B[j, l] - B[i, l]) for i in range(6) for j in range(6) for l in range(6))
    assert cy.max_triple_residual(B) == pytest.approx(worst, rel=1e-12)
    with pytest.raises(ValueError):
        cy.max_triple_residual(np.zeros((2, 3, 2, 2)))


def test_pair_distance_sum_agree(rng):
    F = np.ascontiguousarray(rng.standard_normal((9, 40)))
    expect = sum(np.linalg.norm(F[i] - F[j]) for i in range(9) for j in range(i + 1, 9))
    assert cy.pair_distance_sum(F) == pytest.approx(expect, rel=1e-13)
    assert _kernels_py.pair_distance_sum(F) == pytest.approx(expect, rel=1e-13)
    assert cy.pair_distance_sum(np.zeros((1, 3))) == 0


def test_pure_python_switch():
    code = "from transync import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, TRANSYNC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_pure_python_end_to_end():
    code = (
        "from transync import gpa_sync, kernels\n"
        "from transync.simulate import gen_shapes\n"
        "print(kernels.BACKEND, repr(gpa_sync(gen_shapes(8, 30, rng=1)).error))\n"
    )
    env = dict(os.environ, TRANSYNC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, err = out.stdout.split()
    assert backend == "python"
    from transync import gpa_sync
    from transync.simulate import gen_shapes

    assert float(err) == pytest.approx(gpa_sync(gen_shapes(8, 30, rng=1)).error, rel=1e-10)
