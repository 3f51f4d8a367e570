"""Recursive minimax filter for discrete-time descriptor systems.

The filter carries the information-form triple ``(P, r, alpha)`` such that,
after data ``y[0..k]``, the worst-case disturbance energy compatible with a
terminal state ``x`` is

    V_k(x) = (P x, x) - 2 (r, x) + alpha.

The guaranteed set is ``{x : V_k(x) <= 1}``, an ellipsoid centred at
``pinv(P) r`` that is unbounded along the null space of ``P``. Directions
outside the range of ``P`` carry no information, and ``n - rank(P)`` is the
index of non-causality.

The full-column-rank Kalman recursion is kept alongside for cross-checks,
and :func:`batch_oracle` solves the same problem as one stacked
least-squares fit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import ContractViolation, DimensionMismatch, NumericalFailure, PreconditionViolation
from .linalg import (DEFAULT_TOL, ToleranceConfig, near_rank_threshold, numeric_rank, pinv,
                     range_projector, symmetrize)
from .model import DiscreteDescriptorModel

__all__ = [
    "UNBOUNDED",
    "Unbounded",
    "FilterState",
    "EstimateReport",
    "KalmanFullRankState",
    "filter_init",
    "filter_step",
    "estimate",
    "in_observable_subspace",
    "directional_error",
    "membership",
    "run_filter",
    "kalman_init",
    "kalman_fullrank_step",
    "run_kalman",
    "batch_system",
    "batch_oracle",
    "rank_well_separated",
]

log = logging.getLogger(__name__)

INCONSISTENCY_SLACK = 1e-8
MEMBERSHIP_SLACK = 1e-9


class Unbounded:
    """Marker for an infinite worst-case error.

    There is a single instance, :data:`UNBOUNDED`. It prints as ``inf`` so it
    can be written to CSV directly, but it is not a float.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __str__(self):
        return "inf"

    def __reduce__(self):
        return (Unbounded, ())


UNBOUNDED = Unbounded()


def _vec(v, dim, name):
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (dim,):
        raise DimensionMismatch(f"{name} must have length {dim}, got {a.shape}")
    return a


@dataclass(frozen=True)
class FilterState:
    """Information-form filter state at step ``k``."""

    k: int
    P: np.ndarray
    r: np.ndarray
    alpha: float


@dataclass(frozen=True)
class EstimateReport:
    """Estimate and observability summary extracted from a :class:`FilterState`.

    Attributes
    ----------
    x_hat : ndarray
        Centre of the guaranteed set, ``pinv(P) @ r``.
    beta_hat : float
        Squared size of the guaranteed set, ``1 - alpha + (P x_hat, x_hat)``.
    projector : ndarray
        Orthogonal projector onto the observable subspace (range of P).
    index : int
        Index of non-causality, ``n - rank(P)``.
    p_pinv : ndarray
        ``pinv(P)``, kept for directional error queries.
    inconsistent : bool
        ``beta_hat`` is negative beyond slack: the data cannot have been
        produced by any admissible disturbance.
    rank_warning : bool
        Some singular value of P is within a factor 10 of the rank cutoff,
        so the index may be fragile.
    """

    k: int
    x_hat: np.ndarray
    beta_hat: float
    projector: np.ndarray
    index: int
    p_pinv: np.ndarray
    P: np.ndarray
    inconsistent: bool = False
    rank_warning: bool = False
    tol: ToleranceConfig = field(default=DEFAULT_TOL, repr=False, compare=False)

    @property
    def rank(self) -> int:
        return self.P.shape[0] - self.index


def filter_init(model: DiscreteDescriptorModel, y0, q_anchor=None) -> FilterState:
    """Initial state from the first measurement.

    Parameters
    ----------
    y0 : array_like, shape (p,)
    q_anchor : array_like, shape (m,), optional
        Known centre of the initial condition ``F[0] x[0]``. When given, the
        initial term becomes ``(S (F[0] x - q_anchor), F[0] x - q_anchor)``,
        which adds ``F[0]' S q_anchor`` to r and ``(S q_anchor, q_anchor)`` to
        alpha.
    """
    y0 = _vec(y0, model.p, "y0")
    F0, H0, R0, S = model.F[0], model.H[0], model.R_seq[0], model.S
    P = symmetrize(F0.T @ S @ F0 + H0.T @ R0 @ H0)
    r = H0.T @ R0 @ y0
    alpha = float(y0 @ R0 @ y0)
    if q_anchor is not None:
        q = _vec(q_anchor, model.m, "q_anchor")
        r = r + F0.T @ S @ q
        alpha += float(q @ S @ q)
    return FilterState(k=0, P=P, r=r, alpha=alpha)


def filter_step(state: FilterState, F_k, C_prev, H_k, S_prev, R_k, y_k,
                tol: ToleranceConfig = DEFAULT_TOL) -> FilterState:
    """Advance the filter from step ``k-1`` to ``k``.

    With ``B = P + C' S C`` (all at ``k-1``)::

        P_k = H' R H + F' (S - S C pinv(B) C' S) F
        r_k = F' S C pinv(B) r + H' R y
        alpha_k = alpha + (R y, y) - (pinv(B) r, r)
    """
    n = state.P.shape[0]
    F_k, C_prev, H_k = (np.asarray(a, dtype=float) for a in (F_k, C_prev, H_k))
    S_prev, R_k = np.asarray(S_prev, dtype=float), np.asarray(R_k, dtype=float)
    if C_prev.shape[1] != n or F_k.shape[1] != n or H_k.shape[1] != n \
            or F_k.shape[0] != C_prev.shape[0]:
        raise DimensionMismatch(f"step matrices F{F_k.shape} C{C_prev.shape} H{H_k.shape} "
                                f"incompatible with state dimension {n}")
    y_k = _vec(y_k, H_k.shape[0], "y_k")

    B_pinv, W = _step_factors(state.P, C_prev, S_prev, tol)
    FW = F_k.T @ W
    P = symmetrize(H_k.T @ R_k @ H_k + FW @ FW.T)
    r = F_k.T @ (S_prev @ C_prev @ (B_pinv @ state.r)) + H_k.T @ R_k @ y_k
    alpha = state.alpha + float(y_k @ R_k @ y_k) - float(state.r @ B_pinv @ state.r)
    return FilterState(k=state.k + 1, P=P, r=r, alpha=alpha)


def _step_factors(P, C, S, tol):
    """``pinv(B)`` and a factor ``W`` with ``W W' = S - S C pinv(B) C' S``.

    Writing ``P = L L'``, ``S = T T'`` and ``G = T' C`` gives ``B = M' M``
    for the stacked ``M = [L'; G]``, and ``I - G pinv(B) G'`` is the
    projector onto the part of the left null space of M seen by the G rows.
    Forming W from that null space avoids the cancellation in
    ``S - S C pinv(B) C' S``, which otherwise leaves round-off of the size
    ``eps * cond(B)`` in directions that should carry no information.

    The cutoff on M is ``sqrt(rank_rel_tol)`` since ``sigma(B) = sigma(M)**2``.
    """
    n = P.shape[0]
    m = S.shape[0]
    _, s, vt = np.linalg.svd(symmetrize(P))
    keep = s > tol.rank_rel_tol * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    L = vt[keep].T * np.sqrt(s[keep])
    try:
        T = np.linalg.cholesky(symmetrize(S))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("dynamic weight is not positive definite") from exc
    M = np.vstack([L.T, T.T @ C])
    try:
        u, sm, vmt = np.linalg.svd(M, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    rank = 0
    if sm.size and sm[0] > 0:
        rank = int(np.count_nonzero(sm >= np.sqrt(tol.rank_rel_tol) * sm[0]))
    B_pinv = (vmt[:rank].T / sm[:rank] ** 2) @ vmt[:rank]
    W = T @ u[M.shape[0] - m:, rank:]
    return B_pinv.reshape(n, n), W


def estimate(state: FilterState, tol: ToleranceConfig = DEFAULT_TOL) -> EstimateReport:
    """Centre, size and observable subspace of the guaranteed set."""
    P = state.P
    n = P.shape[0]
    p_pinv = pinv(P, tol)
    x_hat = p_pinv @ state.r
    beta_hat = 1.0 - state.alpha + float(x_hat @ P @ x_hat)
    report = EstimateReport(
        k=state.k,
        x_hat=x_hat,
        beta_hat=beta_hat,
        projector=range_projector(P, tol),
        index=n - numeric_rank(P, tol),
        p_pinv=p_pinv,
        P=P,
        inconsistent=beta_hat < -INCONSISTENCY_SLACK,
        rank_warning=near_rank_threshold(P, tol),
        tol=tol,
    )
    if report.inconsistent:
        log.warning("step %d: data inconsistent with the uncertainty set (beta_hat=%.3e)",
                    state.k, beta_hat)
    if report.rank_warning:
        log.warning("step %d: singular value of P close to the rank cutoff", state.k)
    return report


def in_observable_subspace(report: EstimateReport, l) -> bool:
    l = _vec(l, report.P.shape[0], "l")
    return bool(np.linalg.norm(report.projector @ l - l) <= 1e-8 * max(np.linalg.norm(l), 1e-300))


def directional_error(report: EstimateReport, l):
    """Worst-case error of ``(l, x_hat)`` as an estimate of ``(l, x)``.

    Returns :data:`UNBOUNDED` when ``l`` leaves the observable subspace,
    otherwise ``sqrt(beta_hat) * sqrt((pinv(P) l, l))``. A negative
    ``beta_hat`` (inconsistent data) is clipped to zero.
    """
    l = _vec(l, report.P.shape[0], "l")
    if not np.any(l):
        return 0.0
    if not in_observable_subspace(report, l):
        return UNBOUNDED
    quad = max(float(l @ report.p_pinv @ l), 0.0)
    return float(np.sqrt(max(report.beta_hat, 0.0) * quad))


def membership(report: EstimateReport, state: FilterState, x,
               slack: float = MEMBERSHIP_SLACK) -> bool:
    """Whether ``x`` lies in the guaranteed set ``(P (x - x_hat), x - x_hat) <= beta_hat``."""
    e = _vec(x, state.P.shape[0], "x") - report.x_hat
    return bool(float(e @ state.P @ e) <= report.beta_hat + slack)


def run_filter(model: DiscreteDescriptorModel, y, tol: Optional[ToleranceConfig] = None,
               q_anchor=None) -> List[FilterState]:
    """Filter states for every step ``0..N`` given measurements ``y[0..N]``."""
    tol = tol or model.tol
    y = np.asarray(y, dtype=float)
    if y.shape != (model.N + 1, model.p):
        raise DimensionMismatch(f"measurements have shape {y.shape}, "
                                f"expected {(model.N + 1, model.p)}")
    states = [filter_init(model, y[0], q_anchor)]
    for k in range(1, model.N + 1):
        states.append(filter_step(states[-1], model.F[k], model.C[k - 1], model.H[k],
                                  model.S_seq[k - 1], model.R_seq[k], y[k], tol))
    return states


# -- full-column-rank Kalman recursion ---------------------------------------

@dataclass(frozen=True)
class KalmanFullRankState:
    k: int
    P_filt: np.ndarray
    x_filt: np.ndarray


def _inv(a, what, step):
    try:
        out = np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"{what} singular at step {step}") from exc
    if not np.all(np.isfinite(out)):
        raise NumericalFailure(f"{what} singular at step {step}")
    return out


def _check_full_column_rank(F, H, step, tol):
    n = F.shape[1]
    if numeric_rank(np.vstack([F, H]), tol) < n:
        raise PreconditionViolation(f"rank([F; H]) < {n} at step {step}", step=step)


def kalman_init(model: DiscreteDescriptorModel, y0, q_anchor=None,
                tol: Optional[ToleranceConfig] = None) -> KalmanFullRankState:
    """``P_{0|0}^{-1} = F0' S F0 + H0' R0 H0``, ``x_{0|0} = P_{0|0} (H0' R0 y0 [+ F0' S q])``."""
    tol = tol or model.tol
    y0 = _vec(y0, model.p, "y0")
    F0, H0, R0, S = model.F[0], model.H[0], model.R_seq[0], model.S
    _check_full_column_rank(F0, H0, 0, tol)
    P = symmetrize(_inv(F0.T @ S @ F0 + H0.T @ R0 @ H0, "information matrix", 0))
    rhs = H0.T @ R0 @ y0
    if q_anchor is not None:
        rhs = rhs + F0.T @ S @ _vec(q_anchor, model.m, "q_anchor")
    return KalmanFullRankState(k=0, P_filt=P, x_filt=P @ rhs)


def kalman_fullrank_step(state: KalmanFullRankState, F_k, C_prev, H_k, S_prev, R_k, y_k,
                         tol: ToleranceConfig = DEFAULT_TOL) -> KalmanFullRankState:
    """One step of the descriptor Kalman recursion, using explicit inverses.

    ::

        A^{-1} = S_prev^{-1} + C_prev P_{k-1|k-1} C_prev'
        P_{k|k}^{-1} = F' A F + H' R H
        x_{k|k} = P_{k|k} (F' A C_prev x_{k-1|k-1} + H' R y)

    Raises
    ------
    PreconditionViolation
        If ``[F_k; H_k]`` does not have full column rank.
    """
    k = state.k + 1
    F_k, C_prev, H_k = (np.asarray(a, dtype=float) for a in (F_k, C_prev, H_k))
    y_k = _vec(y_k, H_k.shape[0], "y_k")
    _check_full_column_rank(F_k, H_k, k, tol)
    A = _inv(_inv(S_prev, "S", k) + C_prev @ state.P_filt @ C_prev.T, "A^{-1}", k)
    P = symmetrize(_inv(F_k.T @ A @ F_k + H_k.T @ R_k @ H_k, "P_{k|k}^{-1}", k))
    x = P @ (F_k.T @ A @ C_prev @ state.x_filt + H_k.T @ R_k @ y_k)
    return KalmanFullRankState(k=k, P_filt=P, x_filt=x)


def run_kalman(model: DiscreteDescriptorModel, y, q_anchor=None,
               tol: Optional[ToleranceConfig] = None) -> List[KalmanFullRankState]:
    tol = tol or model.tol
    y = np.asarray(y, dtype=float)
    states = [kalman_init(model, y[0], q_anchor, tol)]
    for k in range(1, model.N + 1):
        states.append(kalman_fullrank_step(states[-1], model.F[k], model.C[k - 1], model.H[k],
                                           model.S_seq[k - 1], model.R_seq[k], y[k], tol))
    return states


# -- batch verification ------------------------------------------------------

def batch_system(model: DiscreteDescriptorModel, y, tau: int):
    """Whitened stacked system ``(A, b)`` of the trajectory fit up to ``tau``.

    ``||A z - b||^2`` equals the fit objective of :func:`batch_oracle` for the
    stacked trajectory ``z = (x[0], .., x[tau])``.
    """
    n = model.n
    y = np.asarray(y, dtype=float)
    if not 0 <= tau <= model.N:
        raise DimensionMismatch(f"tau={tau} outside 0..{model.N}")
    if y.shape[0] < tau + 1 or y.shape[1:] != (model.p,):
        raise DimensionMismatch(f"measurements have shape {y.shape}, need {tau + 1} rows "
                                f"of length {model.p}")

    def root(w):
        # ||root(w) v||^2 = (w v, v)
        return np.linalg.cholesky(w).T

    rows, rhs = [], []
    cols = n * (tau + 1)

    def block_row(blocks, b):
        row = np.zeros((blocks[0][1].shape[0], cols))
        for idx, mat in blocks:
            row[:, idx * n:(idx + 1) * n] += mat
        rows.append(row)
        rhs.append(b)

    W = root(model.S)
    block_row([(0, W @ model.F[0])], np.zeros(model.m))
    for k in range(tau):
        W = root(model.S_seq[k])
        block_row([(k + 1, W @ model.F[k + 1]), (k, -W @ model.C[k])], np.zeros(model.m))
    for k in range(tau + 1):
        W = root(model.R_seq[k])
        block_row([(k, W @ model.H[k])], W @ y[k])
    return np.vstack(rows), np.concatenate(rhs)


def batch_oracle(model: DiscreteDescriptorModel, y, tau: int,
                 tol: Optional[ToleranceConfig] = None):
    """Solve the whole-trajectory weighted least-squares fit up to ``tau``.

    Minimizes, over ``x[0..tau]``::

        (S F0 x0, F0 x0)
          + sum_{k<tau} (S_k (F_{k+1} x_{k+1} - C_k x_k), .)
          + sum_{k<=tau} (R_k (y_k - H_k x_k), .)

    by a minimum-norm least-squares solve of the stacked, whitened system.

    Returns
    -------
    x_tau : ndarray
        Block ``tau`` of the minimum-norm minimizer.
    psi_min : float
        The minimum value.
    """
    tol = tol or model.tol
    n = model.n
    A, b = batch_system(model, y, tau)
    sol, *_ = np.linalg.lstsq(A, b, rcond=tol.rank_rel_tol)
    resid = A @ sol - b
    return sol[tau * n:(tau + 1) * n], float(resid @ resid)


def _has_gap(mat, band):
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return True
    rel = s / s[0]
    return not np.any((rel > band[0]) & (rel < band[1]))


def rank_well_separated(model: DiscreteDescriptorModel, band=(1e-13, 1e-7),
                        tol: Optional[ToleranceConfig] = None) -> bool:
    """Whether every rank decision of the filter and the batch fit is unambiguous.

    Checks that no relative singular value of ``P_k``, ``B_k`` or the stacked
    batch matrix falls inside ``band``. Values below the band are round-off;
    values above it are information. Inside the band, the numerical rank and
    the exact rank can disagree, and the filter and the batch fit may then
    resolve the ambiguity differently. None of these matrices depends on y.
    """
    tol = tol or model.tol
    lo, hi = band
    if not 0.0 < lo < hi < 1.0:
        raise ContractViolation(f"band must satisfy 0 < lo < hi < 1, got {band!r}")
    states = run_filter(model, np.zeros((model.N + 1, model.p)), tol)
    for s in states:
        if not _has_gap(s.P, band):
            return False
        if s.k < model.N:
            C, S = model.C[s.k], model.S_seq[s.k]
            if not _has_gap(s.P + C.T @ S @ C, band):
                return False
    A, _ = batch_system(model, np.zeros((model.N + 1, model.p)), model.N)
    return _has_gap(A, band)
