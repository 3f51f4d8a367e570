"""Discrete-time uncertain descriptor systems.

The model is

    F[k+1] x[k+1] - C[k] x[k] = f[k],    F[0] x[0] = q,
    y[k] = H[k] x[k] + g[k],

with the disturbance triple (q, f, g) confined to the joint ellipsoid

    (S q, q) + sum_k (S_seq[k] f[k], f[k]) + sum_k (R_seq[k] g[k], g[k]) <= 1.

F[k] may be singular or non-square, so some state components are not fixed
by the dynamics at all. ``propagate`` takes those components from a
user-supplied schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ContractViolation, DimensionMismatch, InfeasibleStep
from .linalg import DEFAULT_TOL, ToleranceConfig, is_spd, null_basis, pinv

__all__ = [
    "DiscreteDescriptorModel",
    "DisturbanceRealization",
    "Trajectory",
    "psi_value",
    "propagate",
    "sample_disturbance",
]


def _stack(mats, shape, name):
    arr = np.asarray(mats, dtype=float)
    if arr.size == 0 and int(np.prod(shape)) == 0:
        arr = arr.reshape(shape)
    elif arr.ndim == 2 and len(shape) == 3:
        arr = arr[None]
    if arr.shape != shape:
        raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteDescriptorModel:
    """Time-varying descriptor model over steps ``0..N``.

    Parameters
    ----------
    F : array_like, shape (N+1, m, n)
    C : array_like, shape (N, m, n)
    H : array_like, shape (N+1, p, n)
    S : array_like, shape (m, m)
        Weight on the initial condition ``q = F[0] x[0]``.
    S_seq : array_like, shape (N, m, m)
        Weights on the dynamic disturbances ``f[k]``.
    R_seq : array_like, shape (N+1, p, p)
        Weights on the measurement noise ``g[k]``.
    """

    F: np.ndarray
    C: np.ndarray
    H: np.ndarray
    S: np.ndarray
    S_seq: np.ndarray
    R_seq: np.ndarray
    tol: ToleranceConfig = field(default=DEFAULT_TOL, compare=False)

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim != 3:
            raise DimensionMismatch(f"F must be a sequence of matrices, got shape {F.shape}")
        N1, m, n = F.shape
        if N1 < 1:
            raise DimensionMismatch("F needs at least one matrix")
        N = N1 - 1
        H = np.asarray(self.H, dtype=float)
        if H.ndim != 3:
            raise DimensionMismatch(f"H must be a sequence of matrices, got shape {H.shape}")
        p = H.shape[1]
        object.__setattr__(self, "F", _stack(F, (N + 1, m, n), "F"))
        object.__setattr__(self, "C", _stack(self.C, (N, m, n), "C"))
        object.__setattr__(self, "H", _stack(H, (N + 1, p, n), "H"))
        object.__setattr__(self, "S", _stack(self.S, (m, m), "S"))
        object.__setattr__(self, "S_seq", _stack(self.S_seq, (N, m, m), "S_seq"))
        object.__setattr__(self, "R_seq", _stack(self.R_seq, (N + 1, p, p), "R_seq"))
        if not is_spd(self.S, self.tol):
            raise ContractViolation("S is not symmetric positive definite")
        for k, w in enumerate(self.S_seq):
            if not is_spd(w, self.tol):
                raise ContractViolation(f"S_seq[{k}] is not symmetric positive definite")
        for k, w in enumerate(self.R_seq):
            if not is_spd(w, self.tol):
                raise ContractViolation(f"R_seq[{k}] is not symmetric positive definite")

    @property
    def n(self) -> int:
        return self.F.shape[2]

    @property
    def m(self) -> int:
        return self.F.shape[1]

    @property
    def p(self) -> int:
        return self.H.shape[1]

    @property
    def N(self) -> int:
        return self.F.shape[0] - 1

    def truncated(self, N: int) -> "DiscreteDescriptorModel":
        """The same model over the shorter horizon ``0..N``."""
        if not 0 <= N <= self.N:
            raise ContractViolation(f"cannot truncate horizon {self.N} to {N}")
        return DiscreteDescriptorModel(
            F=self.F[:N + 1], C=self.C[:N], H=self.H[:N + 1], S=self.S,
            S_seq=self.S_seq[:N], R_seq=self.R_seq[:N + 1], tol=self.tol)


@dataclass(frozen=True)
class DisturbanceRealization:
    """One disturbance triple ``(q, f[0..N-1], g[0..N])``."""

    q: np.ndarray
    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        f = np.asarray(self.f, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if f.size == 0:
            f = f.reshape(0, q.size)
        elif f.ndim == 1:
            f = f[:, None]
        if g.ndim == 1:
            g = g[:, None]
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @classmethod
    def zeros(cls, model: DiscreteDescriptorModel) -> "DisturbanceRealization":
        return cls(q=np.zeros(model.m), f=np.zeros((model.N, model.m)),
                   g=np.zeros((model.N + 1, model.p)))

    def check(self, model: DiscreteDescriptorModel):
        if self.q.shape != (model.m,) or self.f.shape != (model.N, model.m) \
                or self.g.shape != (model.N + 1, model.p):
            raise DimensionMismatch(
                f"realization shapes q{self.q.shape} f{self.f.shape} g{self.g.shape} "
                f"do not match model (m={model.m}, p={model.p}, N={model.N})")


@dataclass(frozen=True)
class Trajectory:
    x: np.ndarray
    y: np.ndarray


def psi_value(model: DiscreteDescriptorModel, d: DisturbanceRealization, tau: int) -> float:
    """Quadratic disturbance energy seen by the filter up to step ``tau``.

    Sums ``(S q, q)``, the dynamic terms for ``f[0..tau-1]`` and the
    measurement terms for ``g[0..tau]``. Nondecreasing in ``tau``.
    """
    d.check(model)
    if not 0 <= tau <= model.N:
        raise ContractViolation(f"tau={tau} outside 0..{model.N}")
    total = float(d.q @ model.S @ d.q)
    for k in range(tau):
        total += float(d.f[k] @ model.S_seq[k] @ d.f[k])
    for k in range(tau + 1):
        total += float(d.g[k] @ model.R_seq[k] @ d.g[k])
    return total


FreeSchedule = Union[None, Sequence, Callable[[int, np.ndarray], Sequence[float]]]


def _free_coords(free: FreeSchedule, k, x_det, dim):
    if dim == 0:
        return np.zeros(0)
    if free is None:
        coords = np.zeros(dim)
    elif callable(free):
        coords = np.asarray(free(k, x_det), dtype=float).reshape(-1)
    else:
        coords = np.asarray(free[k], dtype=float).reshape(-1)
    if coords.shape != (dim,):
        raise DimensionMismatch(f"free coordinates at step {k} must have length {dim}, "
                                f"got {coords.shape}")
    return coords


def _solve_descriptor(F, rhs, free, k, tol):
    x_det = pinv(F, tol) @ rhs
    residual = float(np.linalg.norm(F @ x_det - rhs))
    if residual > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
        raise InfeasibleStep(k, residual)
    Z = null_basis(F, tol)
    return x_det + Z @ _free_coords(free, k, x_det, Z.shape[1])


def propagate(model: DiscreteDescriptorModel, d: DisturbanceRealization,
              free: FreeSchedule = None,
              tol: Optional[ToleranceConfig] = None) -> Trajectory:
    """Generate states and outputs driven by the realization ``d``.

    Each state is ``pinv(F) @ rhs + Z @ c`` where ``Z`` is the canonical
    orthonormal null-space basis of ``F`` (see :func:`dmx.linalg.null_basis`)
    and ``c`` the free coordinates for that step.

    Parameters
    ----------
    free : sequence or callable, optional
        ``free[k]`` (or ``free(k, x_det)``) gives the coordinates of ``x[k]``
        along the null space of ``F[k]``; ``x_det`` is the minimum-norm part
        already fixed by the equations. Missing schedule means zeros.

    Raises
    ------
    InfeasibleStep
        If ``F[k+1] x = C[k] x[k] + f[k]`` (or ``F[0] x = q``) is inconsistent.
    """
    d.check(model)
    tol = tol or model.tol
    n, N = model.n, model.N
    x = np.zeros((N + 1, n))
    x[0] = _solve_descriptor(model.F[0], d.q, free, 0, tol)
    for k in range(N):
        rhs = model.C[k] @ x[k] + d.f[k]
        x[k + 1] = _solve_descriptor(model.F[k + 1], rhs, free, k + 1, tol)
    y = np.einsum("kpn,kn->kp", model.H, x) + d.g
    return Trajectory(x=x, y=y)


def sample_disturbance(model: DiscreteDescriptorModel, seed: int, margin: float = 1.0,
                       q=None) -> DisturbanceRealization:
    """Draw a disturbance realization with total energy exactly ``margin``.

    ``q`` is drawn as ``F[0] @ z`` with Gaussian ``z`` so that the initial
    condition is consistent; f and g are standard Gaussian. The whole triple
    is then scaled by one factor. If ``q`` is given it is kept fixed and only
    f and g are scaled.
    """
    if not 0.0 < margin <= 1.0:
        raise ContractViolation(f"margin must lie in (0, 1], got {margin!r}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(model.n)
    f = rng.standard_normal((model.N, model.m))
    g = rng.standard_normal((model.N + 1, model.p))
    fixed_q = q is not None
    q = np.asarray(q, dtype=float) if fixed_q else model.F[0] @ z

    d = DisturbanceRealization(q=q, f=f, g=g)
    q_energy = float(q @ model.S @ q)
    fg_energy = psi_value(model, d, model.N) - q_energy
    if fixed_q:
        if q_energy > margin:
            raise ContractViolation(f"fixed q already uses energy {q_energy:.6g} > {margin}")
        scale = np.sqrt((margin - q_energy) / fg_energy) if fg_energy > 0 else 0.0
        return DisturbanceRealization(q=q, f=scale * f, g=scale * g)
    scale = np.sqrt(margin / (q_energy + fg_energy))
    return DisturbanceRealization(q=scale * q, f=scale * f, g=scale * g)
