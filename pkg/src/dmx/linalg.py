"""Dense linear-algebra kernels shared by the filters.

Every rank decision in the package goes through one SVD-based cutoff so that
the pseudoinverse, the range projector and the numeric rank always agree on
which singular values count as zero.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericalFailure

__all__ = [
    "ToleranceConfig",
    "DEFAULT_TOL",
    "as_matrix",
    "svd",
    "pinv",
    "range_projector",
    "numeric_rank",
    "null_basis",
    "is_spd",
    "is_symmetric",
    "symmetrize",
    "near_rank_threshold",
]


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical cutoffs.

    Parameters
    ----------
    rank_rel_tol : float
        Singular values below ``rank_rel_tol * sigma_max`` are treated as zero.
    sym_tol : float
        Largest admissible ``max|M - M'|``, relative to ``max(1, max|M|)``.
    spd_tol : float
        Eigenvalues must exceed ``spd_tol * max(1, sigma_max)`` for a matrix
        to count as positive definite.
    """

    rank_rel_tol: float = 1e-10
    sym_tol: float = 1e-9
    spd_tol: float = 1e-12

    def __post_init__(self):
        for name in ("rank_rel_tol", "sym_tol", "spd_tol"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ContractViolation(f"{name} must lie in (0, 1), got {value!r}")

    @classmethod
    def from_env(cls, **overrides) -> "ToleranceConfig":
        """Defaults, with ``DMX_RANK_TOL`` overriding ``rank_rel_tol``."""
        env = os.environ.get("DMX_RANK_TOL")
        if env is not None and "rank_rel_tol" not in overrides:
            try:
                overrides["rank_rel_tol"] = float(env)
            except ValueError as exc:
                raise ContractViolation(f"DMX_RANK_TOL is not a number: {env!r}") from exc
        return cls(**overrides)


DEFAULT_TOL = ToleranceConfig()


def as_matrix(m, name="matrix") -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ContractViolation(f"{name} must be two-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    return a


def svd(m):
    """Thin SVD ``m = U diag(s) Vt`` with empty matrices handled."""
    a = as_matrix(m)
    rows, cols = a.shape
    k = min(rows, cols)
    if k == 0:
        return np.zeros((rows, 0)), np.zeros(0), np.zeros((0, cols))
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def _cutoff(s, tol):
    if s.size == 0:
        return 0.0
    return tol.rank_rel_tol * s[0]


def _rank_from_singular_values(s, tol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s >= _cutoff(s, tol)))


def pinv(m, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse with a relative singular-value cutoff.

    Parameters
    ----------
    m : array_like, shape (rows, cols)
    tol : ToleranceConfig

    Returns
    -------
    ndarray, shape (cols, rows)
    """
    u, s, vt = svd(m)
    rank = _rank_from_singular_values(s, tol)
    if rank == 0:
        return np.zeros((vt.shape[1], u.shape[0]))
    return (vt[:rank].T / s[:rank]) @ u[:, :rank].T


def numeric_rank(m, tol: ToleranceConfig = DEFAULT_TOL) -> int:
    _, s, _ = svd(m)
    return _rank_from_singular_values(s, tol)


def near_rank_threshold(m, tol: ToleranceConfig = DEFAULT_TOL, factor=10.0) -> bool:
    """True when some nonzero singular value sits within ``factor`` of the cutoff.

    Such matrices have a rank that a small perturbation could change.
    """
    _, s, _ = svd(m)
    if s.size == 0 or s[0] == 0.0:
        return False
    cut = _cutoff(s, tol)
    return bool(np.any((s > cut / factor) & (s < cut * factor)))


def is_symmetric(m, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        return False
    if a.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(a))))
    return float(np.max(np.abs(a - a.T))) <= tol.sym_tol * scale


def symmetrize(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    return 0.5 * (a + a.T)


def range_projector(m, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Orthogonal projector ``pinv(m) @ m`` onto the range of symmetric ``m``.

    The input is symmetrized before factorization; the projector is then
    formed from the retained right singular vectors, which gives the same
    matrix as ``pinv(m) @ m`` but exactly symmetric.

    Raises
    ------
    ContractViolation
        If ``m`` is not square or not symmetric within ``tol.sym_tol``.
    """
    a = as_matrix(m)
    if not is_symmetric(a, tol):
        raise ContractViolation("range_projector needs a symmetric matrix")
    _, s, vt = svd(symmetrize(a))
    rank = _rank_from_singular_values(s, tol)
    v = vt[:rank].T
    return v @ v.T


def null_basis(m, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the null space of ``m`` as columns.

    The basis is made canonical by Gram-Schmidt on the columns of the null
    space projector ``I - pinv(m) m`` taken in index order, so it does not
    depend on sign or rotation choices inside the SVD. Null spaces spanned
    by coordinate axes come out as exactly those axes.
    """
    a = as_matrix(m)
    n = a.shape[1]
    _, s, vt = svd(a)
    rank = _rank_from_singular_values(s, tol)
    if rank == n:
        return np.zeros((n, 0))
    v = vt[:rank].T
    proj = np.eye(n) - v @ v.T
    basis = []
    for j in range(n):
        w = proj[:, j].copy()
        for b in basis:
            w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            w /= norm
            # exact zeros keep coordinate-aligned bases exact
            w[np.abs(w) < 1e-15] = 0.0
            basis.append(w)
        if len(basis) == n - rank:
            break
    return np.column_stack(basis)


def is_spd(m, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.size == 0:
        return False
    if not np.all(np.isfinite(a)) or not is_symmetric(a, tol):
        return False
    eig = np.linalg.eigvalsh(symmetrize(a))
    sigma_max = float(np.max(np.abs(eig)))
    return bool(eig[0] > tol.spd_tol * max(1.0, sigma_max))
