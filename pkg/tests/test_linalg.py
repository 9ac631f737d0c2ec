import numpy as np
import pytest

from effmed.errors import SingularSystem
from effmed.linalg import solve_dense, solve_iterative
from oracles import gauss_eliminate


def _random_system(n, seed=0):
    rng = np.random.default_rng(seed)
    A = np.eye(n) + 0.3 * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(n)
    b = rng.normal(size=n) + 1j * rng.normal(size=n)
    return A, b


def test_dense_matches_elimination_oracle():
    A, b = _random_system(40)
    x, info = solve_dense(A, b)
    np.testing.assert_allclose(x, gauss_eliminate(A, b), rtol=1e-10)
    assert info.residual <= 1e-10 and np.isfinite(info.condition)


def test_dense_condition_estimate_is_reasonable():
    A, b = _random_system(30, 3)
    _, info = solve_dense(A, b)
    exact = np.linalg.cond(A, 1)
    assert exact / 10 <= info.condition <= exact * 10


def test_singular_matrix_raises_with_condition():
    A = np.ones((4, 4), dtype=complex)
    with pytest.raises(SingularSystem) as exc:
        solve_dense(A, np.ones(4))
    assert exc.value.to_json()["code"] == "E_SINGULAR"


def test_iterative_meets_residual_contract():
    A, b = _random_system(120, 5)
    x, info = solve_iterative(lambda v: A @ v, b)
    r = np.max(np.abs(A @ x - b)) / np.max(np.abs(b))
    assert r <= 1e-10 and info.residual <= 1e-10
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=1e-8)


def test_iterative_failure_raises():
    A = np.diag(np.r_[np.ones(10), 0.0]).astype(complex)
    b = np.ones(11, complex)
    with pytest.raises(SingularSystem):
        solve_iterative(lambda v: A @ v, b, maxiter=2, refinements=2)


def test_empty_and_zero_rhs():
    x, _ = solve_dense(np.zeros((0, 0)), np.zeros(0))
    assert x.size == 0
    x, _ = solve_iterative(lambda v: v, np.zeros(5))
    assert np.all(x == 0)


def test_cancelled_identity_is_reported_singular():
    mat = np.array([[1.0 - (1.0 + 2.0**-52)]], dtype=complex)
    x, info = solve_dense(mat, np.ones(1))
    assert info.condition == 1.0
    with pytest.raises(SingularSystem):
        solve_dense(mat, np.ones(1), scale=2.0)
