import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmx.errors import ContractViolation
from dmx.linalg import (DEFAULT_TOL, ToleranceConfig, is_spd, is_symmetric, near_rank_threshold,
                        null_basis, numeric_rank, pinv, range_projector, symmetrize)
from dmx.scenarios import section3

from conftest import random_with_singular_values


def test_pinv_identity():
    np.testing.assert_array_equal(pinv(np.eye(2)), np.eye(2))


def test_pinv_diagonal_projector():
    np.testing.assert_allclose(pinv([[1.0, 0.0], [0.0, 0.0]]), [[1.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize("q0, c0, S0", [(3.0, 0.8, 2.0), (1.25, -0.4, 0.5), (7.0, 0.0, 1.0)])
def test_pinv_scalar_example_B0(q0, c0, S0):
    B0 = np.array([[q0 + c0 ** 2 * S0, c0 * S0], [c0 * S0, S0]])
    expected = np.array([[1 / q0, -c0 / q0], [-c0 / q0, c0 ** 2 / q0 + 1 / S0]])
    np.testing.assert_allclose(pinv(B0), expected, atol=1e-12)


def test_pinv_shapes_and_zero():
    assert pinv(np.zeros((3, 2))).shape == (2, 3)
    np.testing.assert_array_equal(pinv(np.zeros((3, 2))), 0.0)
    assert pinv(np.zeros((0, 4))).shape == (4, 0)


def test_pinv_drops_values_below_cutoff():
    a = np.diag([1.0, 1e-11])
    np.testing.assert_allclose(pinv(a), np.diag([1.0, 0.0]))
    loose = ToleranceConfig(rank_rel_tol=1e-12)
    np.testing.assert_allclose(pinv(a, loose), np.diag([1.0, 1e11]))


def test_pinv_rejects_nonfinite():
    with pytest.raises(ContractViolation):
        pinv([[np.nan, 1.0]])


def test_range_projector_examples():
    np.testing.assert_array_equal(range_projector(np.diag([1.0, 0.0])), np.diag([1.0, 0.0]))
    np.testing.assert_array_equal(range_projector(np.zeros((3, 3))), np.zeros((3, 3)))
    # scalar example: P1 = R1 H1' H1 with H1 = (h1, 0)
    H1 = np.array([[1.7, 0.0]])
    np.testing.assert_allclose(range_projector(0.5 * H1.T @ H1), np.diag([1.0, 0.0]),
                               atol=1e-15)


def test_range_projector_rejects_asymmetric():
    with pytest.raises(ContractViolation):
        range_projector([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ContractViolation):
        range_projector(np.ones((2, 3)))


def test_numeric_rank_examples(rng):
    assert numeric_rank(np.eye(3)) == 3
    assert numeric_rank(np.zeros((2, 2))) == 0
    A = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 4))
    assert numeric_rank(A) == 2


def test_numeric_rank_section3_stacked():
    # the third column is observed at odd k only (h3 = 150k for odd k)
    model = section3(6).model
    for k in range(7):
        stacked = np.vstack([model.F[k], model.H[k]])
        assert numeric_rank(stacked) == (3 if k % 2 == 1 else 2)


def test_is_spd_examples():
    assert is_spd(np.diag([1 / 60, 1 / 120]))
    assert not is_spd([[1.0, 2.0], [2.0, 1.0]])
    assert not is_spd(0.0)
    assert not is_spd(np.zeros((2, 2)))
    assert not is_spd([[1.0, 0.5], [0.0, 1.0]])
    assert not is_spd(np.ones((2, 3)))


def test_tolerance_config_validation(monkeypatch):
    for bad in (0.0, 1.0, -1e-3, 2.0):
        with pytest.raises(ContractViolation):
            ToleranceConfig(rank_rel_tol=bad)
    monkeypatch.setenv("DMX_RANK_TOL", "1e-6")
    assert ToleranceConfig.from_env().rank_rel_tol == 1e-6
    assert ToleranceConfig.from_env(rank_rel_tol=1e-8).rank_rel_tol == 1e-8
    monkeypatch.setenv("DMX_RANK_TOL", "tiny")
    with pytest.raises(ContractViolation):
        ToleranceConfig.from_env()
    monkeypatch.delenv("DMX_RANK_TOL")
    assert ToleranceConfig.from_env() == DEFAULT_TOL


def test_near_rank_threshold():
    assert near_rank_threshold(np.diag([1.0, 3e-10]))
    assert not near_rank_threshold(np.diag([1.0, 1e-3]))
    assert not near_rank_threshold(np.diag([1.0, 0.0]))


def test_null_basis_coordinate_axes_exact():
    F = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    np.testing.assert_array_equal(null_basis(F), [[0.0], [0.0], [1.0]])
    F0 = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(null_basis(F0), [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert null_basis(np.eye(2)).shape == (2, 0)


def _matrix(rng, rows, cols, rank, cond):
    s = np.geomspace(1.0, 1.0 / cond, rank) if rank else np.zeros(0)
    return random_with_singular_values(rng, rows, cols, s) * rng.uniform(0.1, 10.0)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 8), st.floats(1.0, 1e6),
       st.integers(0, 2 ** 32 - 1))
def test_penrose_identities(rows, cols, rank, cond, seed):
    rng = np.random.default_rng(seed)
    A = _matrix(rng, rows, cols, min(rank, rows, cols), cond)
    X = pinv(A)
    nA, nX = max(np.linalg.norm(A, 2), 1e-300), max(np.linalg.norm(X, 2), 1e-300)
    assert np.linalg.norm(A @ X @ A - A) <= 1e-8 * nA
    assert np.linalg.norm(X @ A @ X - X) <= 1e-8 * nX
    assert np.linalg.norm(A @ X - (A @ X).T) <= 1e-8
    assert np.linalg.norm(X @ A - (X @ A).T) <= 1e-8


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 8), st.integers(0, 2 ** 32 - 1))
def test_rank_transpose_invariant(rows, cols, rank, seed):
    rng = np.random.default_rng(seed)
    A = _matrix(rng, rows, cols, min(rank, rows, cols), 1e3)
    assert numeric_rank(A) == numeric_rank(A.T) == min(rank, rows, cols)


@given(st.integers(1, 8), st.integers(0, 8), st.integers(0, 2 ** 32 - 1))
def test_range_projector_is_orthogonal_projector(n, rank, seed):
    rng = np.random.default_rng(seed)
    B = _matrix(rng, n, n, min(rank, n), 1e3)
    P = symmetrize(B @ B.T)
    Pi = range_projector(P)
    np.testing.assert_allclose(Pi @ Pi, Pi, atol=1e-10)
    np.testing.assert_allclose(Pi, Pi.T, atol=1e-10)
    np.testing.assert_allclose(Pi, pinv(P) @ P, atol=1e-6)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_double_pinv(rows, cols, seed):
    rng = np.random.default_rng(seed)
    A = _matrix(rng, rows, cols, min(rows, cols), 1e2)
    np.testing.assert_allclose(pinv(pinv(A)), A, atol=1e-8 * np.linalg.norm(A, 2))


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 6), st.integers(0, 2 ** 32 - 1))
def test_null_basis_is_orthonormal_complement(rows, cols, rank, seed):
    rng = np.random.default_rng(seed)
    A = _matrix(rng, rows, cols, min(rank, rows, cols), 1e3)
    Z = null_basis(A)
    assert Z.shape == (cols, cols - numeric_rank(A))
    np.testing.assert_allclose(Z.T @ Z, np.eye(Z.shape[1]), atol=1e-10)
    np.testing.assert_allclose(A @ Z, 0.0, atol=1e-9 * max(1.0, np.linalg.norm(A)))


def test_is_symmetric_relative_scale():
    a = np.array([[1e6, 1.0], [1.0 + 1e-4, 1e6]])
    assert is_symmetric(a)
    assert not is_symmetric([[1.0, 0.0], [1e-3, 1.0]])
