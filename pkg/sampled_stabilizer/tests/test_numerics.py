from __future__ import annotations

import math

import numpy as np
import pytest

from app.control.errors import DegenerateFit, NotHurwitz, SingularSystem
from app.control.numerics import (
    condition_number,
    eig_real_parts,
    is_hurwitz,
    least_squares,
    loglog_fit,
    loglog_slope,
    power_law_fit,
    pseudo_inverse,
    solve_lyapunov,
)


# === least squares ===

def test_least_squares_consistent_system():
    M = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]
    x = least_squares(M, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(x, [1.0, 2.0], atol=1e-12)


def test_least_squares_normal_equation_residual():
    rng = np.random.default_rng(7)
    for _ in range(50):
        rows = int(rng.integers(3, 9))
        cols = int(rng.integers(1, rows + 1))
        M = rng.normal(size=(rows, cols))
        y = rng.normal(size=rows)
        x = least_squares(M, y)
        lhs = np.linalg.norm(M.T @ (M @ x - y))
        assert lhs <= 1e-9 * (1.0 + np.linalg.norm(M.T @ y))


def test_least_squares_rejects_rank_deficient():
    with pytest.raises(SingularSystem) as exc:
        least_squares(np.ones((3, 2)), [1.0, 1.0, 1.0])
    assert math.isinf(exc.value.condition)


def test_least_squares_rejects_underdetermined():
    with pytest.raises(SingularSystem):
        least_squares([[1.0, 2.0, 3.0]], [1.0])


def test_least_squares_length_mismatch():
    with pytest.raises(ValueError):
        least_squares(np.eye(2), [1.0, 2.0, 3.0])


def test_pseudo_inverse_is_left_inverse():
    M = np.array([[1.0, 0.0, 0.0], [1.0, -1.0, 0.5], [1.0, -2.0, 2.0], [1.0, -3.0, 4.5]])
    np.testing.assert_allclose(pseudo_inverse(M) @ M, np.eye(3), atol=1e-12)


def test_pseudo_inverse_honours_limit():
    M = np.diag([1.0, 1e-6])
    with pytest.raises(SingularSystem):
        pseudo_inverse(M, cond_limit=1e3)


def test_condition_number():
    assert condition_number(np.eye(3)) == pytest.approx(1.0)
    assert condition_number(np.diag([2.0, 0.5])) == pytest.approx(4.0)
    assert math.isinf(condition_number(np.zeros((2, 2))))


# === eigenvalues ===

def test_eig_real_parts_repeated_root():
    np.testing.assert_array_equal(eig_real_parts([[0.0, 1.0], [-9.0, -6.0]]), [-3.0, -3.0])


def test_eig_real_parts_distinct_roots_sorted():
    np.testing.assert_allclose(eig_real_parts([[0.0, 1.0], [-2.0, -3.0]]), [-1.0, -2.0])


def test_eig_real_parts_complex_pair_and_scalar():
    np.testing.assert_allclose(eig_real_parts([[-1.0, 2.0], [-2.0, -1.0]]), [-1.0, -1.0])
    np.testing.assert_allclose(eig_real_parts([[4.0]]), [4.0])


def test_eig_real_parts_general_case():
    A = np.diag([-1.0, 2.0, -3.0])
    np.testing.assert_allclose(eig_real_parts(A), [2.0, -1.0, -3.0])
    assert not is_hurwitz(A)
    assert is_hurwitz(np.diag([-1.0, -2.0, -3.0]))


def test_eig_real_parts_limits():
    with pytest.raises(ValueError):
        eig_real_parts(np.eye(9))
    with pytest.raises(ValueError):
        eig_real_parts(np.ones((2, 3)))


# === Lyapunov ===

def test_solve_lyapunov_scalar():
    sol = solve_lyapunov([[-1.0]], [[2.0]])
    assert sol.P[0, 0] == pytest.approx(1.0)


def test_solve_lyapunov_companion_form():
    sol = solve_lyapunov([[0.0, 1.0], [-9.0, -6.0]], np.eye(2))
    expected = np.array([[7.0 / 6.0, 1.0 / 18.0], [1.0 / 18.0, 5.0 / 54.0]])
    np.testing.assert_allclose(sol.P, expected, atol=1e-12)
    assert sol.quadratic([1.0, 0.0]) == pytest.approx(7.0 / 6.0)


def test_solve_lyapunov_random_stable_matrices():
    rng = np.random.default_rng(2024)
    for trial in range(100):
        n = 1 + trial % 4
        R = rng.normal(size=(n, n))
        A = R - (np.max(np.real(np.linalg.eigvals(R))) + 0.5) * np.eye(n)
        G = rng.normal(size=(n, n))
        Q = G @ G.T + n * np.eye(n)

        sol = solve_lyapunov(A, Q)
        assert np.linalg.norm(A.T @ sol.P + sol.P @ A + Q, "fro") < 1e-10 * np.linalg.norm(Q, "fro")
        assert np.linalg.eigvalsh(sol.P)[0] > 0.0
        np.testing.assert_array_equal(sol.P, sol.P.T)


def test_solve_lyapunov_rejects_unstable():
    with pytest.raises(NotHurwitz):
        solve_lyapunov([[0.0, 1.0], [0.0, 0.0]], np.eye(2))


def test_solve_lyapunov_rejects_bad_weight():
    with pytest.raises(ValueError):
        solve_lyapunov([[-1.0, 0.0], [0.0, -1.0]], [[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        solve_lyapunov([[-1.0, 0.0], [0.0, -1.0]], [[1.0, 0.0], [0.0, -1.0]])


# === fits ===

def test_loglog_slope_exact_power():
    pts = [(x, 5.0 * x ** 3) for x in (0.1, 0.05, 0.025)]
    slope, intercept = loglog_fit(pts)
    assert slope == pytest.approx(3.0)
    assert intercept == pytest.approx(math.log(5.0))


def test_loglog_slope_first_order():
    pts = [(0.1, 0.2), (0.05, 0.1), (0.025, 0.05)]
    assert loglog_slope(pts) == pytest.approx(1.0)


def test_loglog_slope_rejects_bad_input():
    with pytest.raises(ValueError):
        loglog_slope([(1.0, 1.0), (2.0, 2.0)])
    with pytest.raises(ValueError):
        loglog_slope([(1.0, 1.0), (2.0, -2.0), (3.0, 3.0)])
    with pytest.raises(DegenerateFit):
        loglog_slope([(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)])


def test_power_law_fit_recovers_exponents():
    features = [[a, b] for a in (0.5, 1.0, 2.0) for b in (0.01, 0.02, 0.04)]
    values = [2.0 * a * b ** -2 for a, b in features]
    coef = power_law_fit(features, values)
    np.testing.assert_allclose(coef, [math.log(2.0), 1.0, -2.0], atol=1e-9)


def test_power_law_fit_degenerate():
    features = [[1.0, 0.1], [1.0, 0.2], [1.0, 0.4]]
    with pytest.raises(DegenerateFit):
        power_law_fit(features, [1.0, 2.0, 3.0])


def test_lyapunov_weight_decreases_along_euler_steps():
    A = np.array([[0.0, 1.0], [-9.0, -6.0]])
    P = solve_lyapunov(A, np.eye(2)).P
    rng = np.random.default_rng(9)
    z = rng.normal(size=(100, 2))
    h = 1e-4
    V = np.einsum("ki,ij,kj->k", z, P, z)
    for _ in range(int(round(1.0 / h))):
        z = z + h * z @ A.T
        V_next = np.einsum("ki,ij,kj->k", z, P, z)
        assert np.all(V_next < V)
        V = V_next
