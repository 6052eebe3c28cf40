import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbokoop.errors import InvalidInputError, ShapeError
from turbokoop.linalg import pseudoinverse, solve_stacked_regression


def penrose_gaps(m, p):
    """Largest violation of each of the four Penrose conditions."""
    mp, pm = m @ p, p @ m
    return (
        np.max(np.abs(mp @ m - m)),
        np.max(np.abs(pm @ p - p)),
        np.max(np.abs(mp - mp.T)),
        np.max(np.abs(pm - pm.T)),
    )


def normal_equations(y, x, u):
    z = np.vstack([x, u])
    return np.linalg.solve(z @ z.T, z @ y.T).T


def test_identity():
    np.testing.assert_array_equal(pseudoinverse(np.eye(3)), np.eye(3))


def test_rank_deficient_diagonal():
    p = pseudoinverse(np.diag([2.0, 0.0]), rank_tolerance=1e-12)
    np.testing.assert_array_equal(p, np.diag([0.5, 0.0]))


def test_penrose_random_full_rank():
    m = np.random.default_rng(0).standard_normal((5, 3))
    p = pseudoinverse(m)
    assert p.shape == (3, 5)
    assert max(penrose_gaps(m, p)) < 1e-10


@settings(max_examples=60, deadline=None)
@given(
    rows=st.integers(1, 8),
    cols=st.integers(1, 8),
    rank=st.integers(0, 8),
    seed=st.integers(0, 2**32 - 1),
)
def test_penrose_property(rows, cols, rank, seed):
    rng = np.random.default_rng(seed)
    r = min(rank, rows, cols)
    m = rng.standard_normal((rows, r)) @ rng.standard_normal((r, cols))
    p = pseudoinverse(m)
    scale = max(1.0, np.max(np.abs(m)), np.max(np.abs(p)))
    assert max(penrose_gaps(m, p)) <= 1e-9 * scale**3


def test_nonfinite_rejected():
    with pytest.raises(InvalidInputError):
        pseudoinverse(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInputError):
        solve_stacked_regression([[1.0, np.inf]], [[1.0, 2.0]], [[0.0, 0.0]])


def test_ridge_matches_tikhonov_closed_form():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((4, 7))
    lam = 0.3
    expected = m.T @ np.linalg.inv(m @ m.T + lam * np.eye(4))
    np.testing.assert_allclose(pseudoinverse(m, ridge=lam), expected, atol=1e-12)


def test_shifted_scalar_sequence():
    y = np.array([[2.0, 3.0, 4.0]])
    x = np.array([[1.0, 2.0, 3.0]])
    u = np.zeros((1, 3))
    sol = solve_stacked_regression(y, x, u)
    # scalar least squares of y on x: sum(xy)/sum(x^2) = 20/14; B is the min-norm zero
    assert sol.A[0, 0] == pytest.approx(20.0 / 14.0, abs=1e-12)
    assert sol.B[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert sol.effective_rank == 1


def test_exact_linear_recovery():
    rng = np.random.default_rng(11)
    A0 = rng.standard_normal((4, 4))
    B0 = rng.standard_normal((4, 2))
    x = rng.standard_normal((4, 200))
    u = rng.standard_normal((2, 200))
    sol = solve_stacked_regression(A0 @ x + B0 @ u, x, u)
    np.testing.assert_allclose(sol.A, A0, atol=1e-8)
    np.testing.assert_allclose(sol.B, B0, atol=1e-8)
    assert sol.coefficients.shape == (4, 6)
    assert sol.residual_norm < 1e-10


def test_zero_regressors():
    y = np.random.default_rng(1).standard_normal((3, 10))
    sol = solve_stacked_regression(y, np.zeros((3, 10)), np.zeros((2, 10)))
    assert not sol.coefficients.any()
    assert sol.residual_norm == pytest.approx(np.linalg.norm(y), rel=1e-15)
    assert sol.effective_rank == 0


def test_column_mismatch():
    with pytest.raises(ShapeError):
        solve_stacked_regression(np.zeros((2, 5)), np.zeros((2, 4)), np.zeros((1, 5)))
    with pytest.raises(ShapeError):
        solve_stacked_regression(np.zeros((2, 5)), np.zeros((3, 5)), np.zeros((1, 5)))


@pytest.mark.parametrize("seed", range(5))
def test_agrees_with_normal_equations(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((5, 300))
    u = rng.standard_normal((3, 300))
    y = rng.standard_normal((5, 300))
    assert np.linalg.cond(np.vstack([x, u])) < 1e6
    sol = solve_stacked_regression(y, x, u)
    np.testing.assert_allclose(sol.coefficients, normal_equations(y, x, u), atol=1e-8)


def test_no_perturbation_beats_solution():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((3, 40))
    u = rng.standard_normal((2, 40))
    y = rng.standard_normal((3, 40))
    sol = solve_stacked_regression(y, x, u)
    z = np.vstack([x, u])
    for _ in range(100):
        trial = sol.coefficients + 1e-3 * rng.standard_normal(sol.coefficients.shape)
        assert np.linalg.norm(y - trial @ z) >= sol.residual_norm - 1e-10


def test_common_scaling_invariance():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 50))
    u = rng.standard_normal((2, 50))
    y = rng.standard_normal((3, 50))
    base = solve_stacked_regression(y, x, u).coefficients
    for c in (1e-3, 7.5, 1e4):
        scaled = solve_stacked_regression(c * y, c * x, c * u).coefficients
        np.testing.assert_allclose(scaled, base, atol=1e-10)


def test_rank_deficient_regression_is_minimum_norm():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((2, 30))
    x = np.vstack([x, x[0]])  # duplicated row
    u = rng.standard_normal((1, 30))
    y = rng.standard_normal((3, 30))
    sol = solve_stacked_regression(y, x, u)
    z = np.vstack([x, u])
    oracle = np.linalg.lstsq(z.T, y.T, rcond=None)[0].T
    np.testing.assert_allclose(sol.coefficients, oracle, atol=1e-10)
    assert sol.effective_rank == 3
