"""Reduced-order minimax filter for continuous-time descriptor systems.

The model is

    d/dt (F x) = C(t) x + f(t),    F x(t0) = 0,
    y(t) = H(t) x(t) + eta(t),

with constant ``F`` and ``int (Q f, f) dt <= 1``, ``int (R eta, eta) dt <= 1``.
An SVD of ``F`` brings it to the block form ``[[I, 0], [0, 0]]``; the second
block row is then an algebraic constraint and the second block of the state
enters like an unknown input. Eliminating it gives an ``r``-dimensional
filter driven by a Riccati equation.

Coefficients are sampled on a time grid and interpolated linearly. Both
Riccati sign conventions are available; see :class:`Convention`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (CoefficientAssemblyError, ContractViolation, DegenerateModel,
                     DimensionMismatch, FiniteEscape, NumericalFailure)
from .linalg import DEFAULT_TOL, ToleranceConfig, is_spd, pinv, symmetrize

__all__ = [
    "Convention",
    "ContinuousDescriptorModel",
    "ReducedModel",
    "Coefficients",
    "RiccatiState",
    "RiccatiSolution",
    "ContinuousEstimate",
    "svd_reduce",
    "assemble_coefficients",
    "riccati_integrate",
    "filter_integrate",
    "closed_range_diagnostic",
    "DEFAULT_BLOWUP",
]

DEFAULT_BLOWUP = 1e8
COEFF_SYM_TOL = 1e-10


class Convention(str, enum.Enum):
    """Sign of the quadratic and forcing terms of the Riccati equation.

    ``PAPER``: ``K' = A K + K A' + K M K - G``.
    ``DUAL``: ``K' = A K + K A' - K M K + G``, the covariance form. With
    ``K(t0) = 0`` only this one keeps ``K`` positive semidefinite.
    """

    PAPER = "paper"
    DUAL = "dual"

    @property
    def sign(self) -> float:
        return 1.0 if self is Convention.PAPER else -1.0


# determined by the discretization cross-check in the test suite
DEFAULT_CONVENTION = Convention.DUAL


def _samples(arr, count, shape, name):
    a = np.asarray(arr, dtype=float)
    if a.ndim == 2:
        a = np.broadcast_to(a, (count,) + a.shape)
    if a.shape != (count,) + shape:
        raise DimensionMismatch(f"{name} has shape {a.shape}, expected {(count,) + shape}")
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} has non-finite entries")
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ContinuousDescriptorModel:
    """Constant ``F`` with coefficients sampled on ``grid``.

    Parameters
    ----------
    F : array_like, shape (m, n)
    grid : array_like, shape (L+1,)
        Strictly increasing sample times, ``grid[0] = t0``, ``grid[-1] = T``.
    C_samples, H_samples, Q_samples, R_samples : array_like
        Shapes ``(L+1, m, n)``, ``(L+1, p, n)``, ``(L+1, m, m)``, ``(L+1, p, p)``.
        A single 2-D matrix is broadcast over the grid.
    """

    F: np.ndarray
    grid: np.ndarray
    C_samples: np.ndarray
    H_samples: np.ndarray
    Q_samples: np.ndarray
    R_samples: np.ndarray
    tol: ToleranceConfig = field(default=DEFAULT_TOL, compare=False)

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim != 2 or not np.all(np.isfinite(F)):
            raise ContractViolation(f"F must be a finite matrix, got shape {F.shape}")
        grid = np.asarray(self.grid, dtype=float).reshape(-1)
        if grid.size < 2:
            raise ContractViolation("grid needs at least two points")
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise ContractViolation("grid must be finite and strictly increasing")
        m, n = F.shape
        H = np.asarray(self.H_samples, dtype=float)
        p = H.shape[-2] if H.ndim >= 2 else 0
        count = grid.size
        F = F.copy()
        F.setflags(write=False)
        grid.setflags(write=False)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "C_samples", _samples(self.C_samples, count, (m, n), "C"))
        object.__setattr__(self, "H_samples", _samples(H, count, (p, n), "H"))
        object.__setattr__(self, "Q_samples", _samples(self.Q_samples, count, (m, m), "Q"))
        object.__setattr__(self, "R_samples", _samples(self.R_samples, count, (p, p), "R"))
        for name, seq in (("Q", self.Q_samples), ("R", self.R_samples)):
            for i, w in enumerate(seq):
                if not is_spd(w, self.tol):
                    raise ContractViolation(f"{name} at grid point {i} is not positive definite")

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def m(self) -> int:
        return self.F.shape[0]

    @property
    def p(self) -> int:
        return self.H_samples.shape[1]


@dataclass(frozen=True)
class Coefficients:
    """Reduced filter coefficients at one grid point.

    ``C_bar`` depends on the Riccati solution, ``C_bar(K) = cbar0 - cbar1 K``.
    The output gain is ``[K, C_bar(K)'] H' R = K hr1 + inp0 - K inp1``.
    """

    A: np.ndarray
    M: np.ndarray
    G: np.ndarray
    cbar0: np.ndarray
    cbar1: np.ndarray
    hr1: np.ndarray
    inp0: np.ndarray
    inp1: np.ndarray

    def C_bar(self, K) -> np.ndarray:
        return self.cbar0 - self.cbar1 @ K


def _blocks(X, r_rows, r_cols):
    return X[..., :r_rows, :r_cols], X[..., :r_rows, r_cols:], \
        X[..., r_rows:, :r_cols], X[..., r_rows:, r_cols:]


@dataclass(frozen=True)
class ReducedModel:
    """A continuous model in SVD coordinates.

    With ``F = U diag(s) V'``, the new state is ``z = T^{-1} x`` for
    ``T = V diag(1/s_1..1/s_r, 1..1)`` and the equations are premultiplied
    by ``U'``, so the transformed ``F`` is ``[[I_r, 0], [0, 0]]``.

    Block names follow the partition of rows (equations, ``r`` then ``m-r``)
    and columns (state, ``r`` then ``n-r``): ``C1 C2 / C3 C4`` for ``U' C T``,
    ``S1 S2 / S3 S4`` for ``S = (H T)' R (H T)`` and ``W1 W2 / W3 W4`` for the
    disturbance covariance ``U' Q^{-1} U``.
    """

    r: int
    U: np.ndarray
    V: np.ndarray
    T: np.ndarray
    F_tilde: np.ndarray
    grid: np.ndarray
    C_tilde: np.ndarray
    H_tilde: np.ndarray
    W: np.ndarray
    S: np.ndarray
    R: np.ndarray
    coefficients: tuple = ()

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[0]

    def C_blocks(self, i):
        return _blocks(self.C_tilde[i], self.r, self.r)

    def W_blocks(self, i):
        return _blocks(self.W[i], self.r, self.r)

    def S_blocks(self, i):
        return _blocks(self.S[i], self.r, self.r)

    def restore(self, i):
        """Original ``(C, H, Q)`` at grid point ``i``, rebuilt from the reduced data."""
        T_inv = np.linalg.inv(self.T)
        C = self.U @ self.C_tilde[i] @ T_inv
        H = self.H_tilde[i] @ T_inv
        Q = self.U @ np.linalg.inv(self.W[i]) @ self.U.T
        return C, H, symmetrize(Q)

    def split_direction(self, l) -> np.ndarray:
        """``l1``: the first ``r`` coordinates of ``U' l`` for ``l`` in equation space."""
        l = np.asarray(l, dtype=float).reshape(-1)
        if l.shape != (self.m,):
            raise DimensionMismatch(f"direction must have length {self.m}, got {l.shape}")
        return self.U[:, :self.r].T @ l


def _canonical_svd(F, tol):
    U, s, Vt = np.linalg.svd(F, full_matrices=True)
    V = Vt.T
    s_max = s[0] if s.size else 0.0
    r = int(np.count_nonzero(s >= tol.rank_rel_tol * s_max)) if s_max > 0 else 0
    # sign convention: the largest entry of each singular vector is positive
    for i in range(V.shape[1]):
        j = np.argmax(np.abs(V[:, i]))
        if V[j, i] < 0:
            V[:, i] *= -1
            if i < r:
                U[:, i] *= -1
    for i in range(r, U.shape[1]):
        j = np.argmax(np.abs(U[:, i]))
        if U[j, i] < 0:
            U[:, i] *= -1
    return U, s[:r], V, r


def svd_reduce(model: ContinuousDescriptorModel, tol: Optional[ToleranceConfig] = None,
               verbatim: bool = False) -> ReducedModel:
    """Bring the model to SVD coordinates and assemble coefficients on the grid.

    Raises
    ------
    DegenerateModel
        If ``F`` is numerically zero.
    CoefficientAssemblyError
        If the coefficients cannot be assembled (see :func:`assemble_coefficients`).
    """
    tol = tol or model.tol
    U, s, V, r = _canonical_svd(model.F, tol)
    if r == 0:
        raise DegenerateModel("F is zero; there is no differential part to filter")
    n = model.n
    T = V @ np.diag(np.concatenate([1.0 / s, np.ones(n - r)]))
    F_tilde = U.T @ model.F @ T
    try:
        W = np.array([symmetrize(U.T @ np.linalg.inv(Q) @ U) for Q in model.Q_samples])
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("Q is singular") from exc
    C_tilde = np.einsum("ij,kjl,lm->kim", U.T, model.C_samples, T)
    H_tilde = model.H_samples @ T
    S = np.array([symmetrize(Ht.T @ R @ Ht) for Ht, R in zip(H_tilde, model.R_samples)])
    reduced = ReducedModel(r=r, U=U, V=V, T=T, F_tilde=F_tilde, grid=model.grid,
                           C_tilde=C_tilde, H_tilde=H_tilde, W=W, S=S,
                           R=np.array(model.R_samples))
    coeffs = tuple(assemble_coefficients(reduced, i, tol, verbatim)
                   for i in range(model.grid.size))
    object.__setattr__(reduced, "coefficients", coeffs)
    return reduced


def _inv(a):
    if a.size == 0:
        return np.zeros(a.shape)
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("covariance block is singular") from exc


def _check_symmetric(name, X, i):
    scale = max(1.0, float(np.max(np.abs(X)))) if X.size else 1.0
    if X.size and float(np.max(np.abs(X - X.T))) > COEFF_SYM_TOL * scale:
        raise CoefficientAssemblyError(f"{name} is not symmetric at grid point {i}")


def assemble_coefficients(reduced: ReducedModel, i: int,
                          tol: ToleranceConfig = DEFAULT_TOL,
                          verbatim: bool = False) -> Coefficients:
    """Filter coefficients at grid point ``i``.

    With ``Wi`` the covariance blocks, ``Bb = C2 - W2 W4^{-1} C4``,
    ``D = S3 + C4' W4^{-1} C3`` and ``St4 = S4 + C4' W4^{-1} C4``::

        A = C1 - W2 W4^{-1} C3 - Bb pinv(St4) D
        M = S1 + C3' W4^{-1} C3 - (S2 + C3' W4^{-1} C4) pinv(St4) D
        G = W1 - W2 W4^{-1} W3 + Bb pinv(St4) Bb'
        C_bar(K) = pinv(St4) (Bb' - D K)

    ``verbatim=True`` uses ``S2 C3' W4^{-1} C4`` in M and ``W2 W1^{-1} W3``
    in G instead. Those products are dimensionally inconsistent unless the
    block sizes happen to agree, and they break the symmetry of M and G.

    Raises
    ------
    CoefficientAssemblyError
        If M or G is not symmetric within 1e-10, or (verbatim only) the
        products cannot be formed.
    """
    C1, C2, C3, C4 = reduced.C_blocks(i)
    W1, W2, W3, W4 = reduced.W_blocks(i)
    S1, S2, S3, S4 = reduced.S_blocks(i)
    W4_inv = _inv(W4)
    Bb = C2 - W2 @ W4_inv @ C4
    D = S3 + C4.T @ W4_inv @ C3
    St4_pinv = pinv(symmetrize(S4 + C4.T @ W4_inv @ C4), tol) if S4.size else np.zeros(S4.shape)
    A = C1 - W2 @ W4_inv @ C3 - Bb @ St4_pinv @ D
    try:
        if verbatim:
            M = S1 + C3.T @ W4_inv @ C3 - (S2 @ C3.T @ W4_inv @ C4) @ St4_pinv @ D
            G = W1 - W2 @ _inv(W1) @ W3 + Bb @ St4_pinv @ Bb.T
        else:
            M = S1 + C3.T @ W4_inv @ C3 - (S2 + C3.T @ W4_inv @ C4) @ St4_pinv @ D
            G = W1 - W2 @ W4_inv @ W3 + Bb @ St4_pinv @ Bb.T
    except ValueError as exc:
        raise CoefficientAssemblyError(f"literal coefficient products are not defined "
                                       f"for these block sizes: {exc}") from exc
    _check_symmetric("M", M, i)
    _check_symmetric("G", G, i)

    H1, H2 = reduced.H_tilde[i][:, :reduced.r], reduced.H_tilde[i][:, reduced.r:]
    R = reduced.R[i]
    return Coefficients(
        A=A, M=symmetrize(M), G=symmetrize(G),
        cbar0=St4_pinv @ Bb.T, cbar1=St4_pinv @ D,
        hr1=H1.T @ R,
        inp0=Bb @ St4_pinv @ H2.T @ R,
        inp1=D.T @ St4_pinv @ H2.T @ R,
    )


# -- integration --------------------------------------------------------------

def _steps_per_interval(grid, h):
    if not h > 0:
        raise ContractViolation(f"step must be positive, got {h!r}")
    counts = []
    for dt in np.diff(grid):
        k = int(round(dt / h))
        if k < 1 or abs(k * h - dt) > 1e-9 * dt:
            raise ContractViolation(f"step {h!r} does not divide grid interval {dt!r}")
        counts.append(k)
    return counts


def _lerp(a, b, theta):
    return a + theta * (b - a)


@dataclass(frozen=True)
class RiccatiState:
    t: float
    K: np.ndarray
    x_hat: np.ndarray


@dataclass(frozen=True)
class RiccatiSolution:
    """``K`` and its derivative at every integration node.

    ``grid_index[i]`` is the node that coincides with ``grid[i]``.
    """

    times: np.ndarray
    K: np.ndarray
    K_dot: np.ndarray
    grid_index: np.ndarray
    convention: Convention
    steps: List[int]

    @property
    def K_final(self) -> np.ndarray:
        return self.K[-1]

    def on_grid(self) -> np.ndarray:
        return self.K[self.grid_index]


def _coeff_at(reduced, i, theta):
    c0, c1 = reduced.coefficients[i], reduced.coefficients[i + 1]
    return (_lerp(c0.A, c1.A, theta), _lerp(c0.M, c1.M, theta), _lerp(c0.G, c1.G, theta))


def _riccati_rhs(K, A, M, G, sign):
    return A @ K + K @ A.T + sign * (K @ M @ K - G)


def riccati_integrate(reduced: ReducedModel, h: float,
                      convention: Convention = DEFAULT_CONVENTION,
                      blowup: float = DEFAULT_BLOWUP) -> RiccatiSolution:
    """Integrate the Riccati equation from ``K(t0) = 0`` with fixed-step RK4.

    ``h`` must divide every grid interval. ``K`` is symmetrized after each
    step.

    Raises
    ------
    FiniteEscape
        If ``|K|`` exceeds ``blowup`` or becomes non-finite.
    """
    convention = Convention(convention)
    sign = convention.sign
    grid = reduced.grid
    counts = _steps_per_interval(grid, h)
    r = reduced.r
    K = np.zeros((r, r))
    times, Ks, Kdots, grid_index = [grid[0]], [K], [], [0]
    for i, count in enumerate(counts):
        step = (grid[i + 1] - grid[i]) / count
        for j in range(count):
            th0, th1, th2 = j / count, (j + 0.5) / count, (j + 1) / count
            A0, M0, G0 = _coeff_at(reduced, i, th0)
            A1, M1, G1 = _coeff_at(reduced, i, th1)
            A2, M2, G2 = _coeff_at(reduced, i, th2)
            k1 = _riccati_rhs(K, A0, M0, G0, sign)
            k2 = _riccati_rhs(K + 0.5 * step * k1, A1, M1, G1, sign)
            k3 = _riccati_rhs(K + 0.5 * step * k2, A1, M1, G1, sign)
            k4 = _riccati_rhs(K + step * k3, A2, M2, G2, sign)
            Kdots.append(k1)
            K = symmetrize(K + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))
            t = grid[i] + th2 * (grid[i + 1] - grid[i])
            norm = float(np.linalg.norm(K))
            if not np.isfinite(norm) or norm > blowup:
                raise FiniteEscape(t, norm)
            times.append(t)
            Ks.append(K)
        grid_index.append(len(times) - 1)
    A, M, G = _coeff_at(reduced, len(counts) - 1, 1.0)
    Kdots.append(_riccati_rhs(K, A, M, G, sign))
    return RiccatiSolution(times=np.array(times), K=np.array(Ks), K_dot=np.array(Kdots),
                           grid_index=np.array(grid_index), convention=convention,
                           steps=counts)


@dataclass(frozen=True)
class ContinuousEstimate:
    """Filter output on the grid plus the terminal error form."""

    times: np.ndarray
    x_hat: np.ndarray
    K_final: np.ndarray
    reduced: ReducedModel = field(repr=False)

    def error(self, l1) -> float:
        """``(l1, K(T) l1)`` for ``l1`` in the reduced coordinates."""
        l1 = np.asarray(l1, dtype=float).reshape(-1)
        if l1.shape != (self.reduced.r,):
            raise DimensionMismatch(f"l1 must have length {self.reduced.r}, got {l1.shape}")
        return float(l1 @ self.K_final @ l1)

    def estimate(self, l1) -> float:
        """Estimate of ``(l, F x(T))`` given ``l1``, i.e. ``(l1, x_hat(T))``."""
        l1 = np.asarray(l1, dtype=float).reshape(-1)
        if l1.shape != (self.reduced.r,):
            raise DimensionMismatch(f"l1 must have length {self.reduced.r}, got {l1.shape}")
        return float(l1 @ self.x_hat[-1])

    def states(self, solution: RiccatiSolution) -> List[RiccatiState]:
        K = solution.on_grid()
        return [RiccatiState(t=float(t), K=K[i], x_hat=self.x_hat[i])
                for i, t in enumerate(self.times)]


def filter_integrate(reduced: ReducedModel, solution: RiccatiSolution, y,
                     verbatim_gain: bool = False) -> ContinuousEstimate:
    """Integrate the filter ODE from ``x_hat(t0) = 0`` with RK4 on the Riccati nodes.

    ``x_hat' = (A - K M) x_hat + [K, C_bar'] H' R y``, so the algebraic block
    of the output enters through ``C_bar' = (Bb - K D') pinv(St4)`` without a
    further factor K. ``verbatim_gain=True`` uses ``K [I, C_bar'] H' R y``
    instead; both agree when ``F`` has full column rank.

    ``y`` is sampled on the grid and interpolated linearly; ``K`` between
    nodes comes from cubic Hermite interpolation with the stored derivatives.
    """
    grid = reduced.grid
    y = np.asarray(y, dtype=float)
    p = reduced.H_tilde.shape[1]
    if y.ndim == 1 and p == 1:
        y = y[:, None]
    if y.shape != (grid.size, p):
        raise DimensionMismatch(f"y has shape {y.shape}, expected {(grid.size, p)}")
    if solution.grid_index.size != grid.size or not np.allclose(
            solution.times[solution.grid_index], grid, rtol=0, atol=1e-12 * (1 + abs(grid[-1]))):
        raise DimensionMismatch("Riccati solution was computed on a different grid")

    def rhs(x, K, theta, i):
        c0, c1 = reduced.coefficients[i], reduced.coefficients[i + 1]
        A = _lerp(c0.A, c1.A, theta)
        M = _lerp(c0.M, c1.M, theta)
        algebraic = _lerp(c0.inp0, c1.inp0, theta) - K @ _lerp(c0.inp1, c1.inp1, theta)
        if verbatim_gain:
            algebraic = K @ algebraic
        gain = K @ _lerp(c0.hr1, c1.hr1, theta) + algebraic
        return (A - K @ M) @ x + gain @ _lerp(y[i], y[i + 1], theta)

    x = np.zeros(reduced.r)
    out = [x]
    node = 0
    for i, count in enumerate(solution.steps):
        step = (grid[i + 1] - grid[i]) / count
        for j in range(count):
            K0, K1 = solution.K[node], solution.K[node + 1]
            D0, D1 = solution.K_dot[node], solution.K_dot[node + 1]
            K_mid = 0.5 * (K0 + K1) + step * (D0 - D1) / 8.0
            th0, th1, th2 = j / count, (j + 0.5) / count, (j + 1) / count
            k1 = rhs(x, K0, th0, i)
            k2 = rhs(x + 0.5 * step * k1, K_mid, th1, i)
            k3 = rhs(x + 0.5 * step * k2, K_mid, th1, i)
            k4 = rhs(x + step * k3, K1, th2, i)
            x = x + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            node += 1
        out.append(x)
    return ContinuousEstimate(times=np.array(grid), x_hat=np.array(out),
                              K_final=solution.K_final, reduced=reduced)


# -- closed-range diagnostic ---------------------------------------------------

def closed_range_diagnostic(C2, C4, eps_samples: int = 8):
    """Probe ``sup_eps ||Q(eps) C2'||_mod`` with ``Q(eps) = (eps^2 I + C4' C4)^{-1}``.

    ``||X||_mod`` is the sum of absolute entries. The norm is evaluated at
    ``eps = 10^-1, .., 10^-eps_samples``, one sample per decade. The verdict
    is "bounded" when the last refinement grows the value by less than a
    factor 2; an unbounded sequence grows by about 100 per decade.

    Returns
    -------
    sup_estimate : float
        Largest sampled value.
    bounded : bool
    """
    if eps_samples < 3:
        raise ContractViolation(f"eps_samples must be at least 3, got {eps_samples}")
    C2 = np.atleast_2d(np.asarray(C2, dtype=float))
    C4 = np.atleast_2d(np.asarray(C4, dtype=float))
    if C2.shape[1] != C4.shape[1]:
        raise DimensionMismatch(f"C2 {C2.shape} and C4 {C4.shape} need the same column count")
    try:
        _, s, Vt = np.linalg.svd(C4, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    k = C4.shape[1]
    sq = np.zeros(k)
    sq[:s.size] = s ** 2
    proj = Vt @ C2.T
    values = []
    for eps in 10.0 ** -np.arange(1, eps_samples + 1):
        denom = eps ** 2 + sq
        if np.any(denom == 0):
            raise NumericalFailure(f"eps^2 I + C4'C4 is singular at eps={eps:g}")
        values.append(float(np.sum(np.abs(Vt.T @ (proj / denom[:, None])))))
    last, prev = values[-1], values[-2]
    bounded = last == 0.0 or (prev > 0 and last / prev < 2.0)
    return max(values), bool(bounded)
