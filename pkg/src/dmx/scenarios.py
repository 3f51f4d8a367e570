"""Built-in scenarios and random model factories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ContractViolation
from .model import DiscreteDescriptorModel

__all__ = ["Scenario", "section3", "section3_h", "scalar_example", "random_model",
           "random_well_posed_model", "BUILTINS"]


@dataclass(frozen=True)
class Scenario:
    """A model bundled with the data needed to simulate it.

    ``free`` feeds :func:`dmx.model.propagate`; ``q`` is a fixed initial
    condition (``None`` lets the disturbance sampler draw one).
    """

    name: str
    model: DiscreteDescriptorModel
    free: Union[None, Sequence, Callable] = None
    q: Optional[np.ndarray] = None


def section3_h(k: int) -> np.ndarray:
    """Output matrix of the 3-state example at step ``k`` (k=0 uses special values)."""
    if k == 0:
        h1, h2, h4, h5, h6, h7, h8 = 0.6, 0.96, 1000.0, 2.3, 0.0, 0.0, 1.0
    else:
        h1, h2, h4, h5, h6, h7, h8 = 0.6 * k, float(k), 100.0 * k, k / 100, 0.05, 10.0 * k, 0.0
    h3 = 150.0 * k if k % 2 == 1 else 0.0
    return np.array([
        [h1, h2, 0.0],
        [h4, h5, 0.0],
        [h8, 0.005, h3],
        [h6, h7, 0.0],
    ])


def section3_x3(k: int) -> float:
    # x3 is not constrained by the dynamics; any bounded schedule will do
    return 2.0 * np.sin(0.3 * k + 0.5)


def section3(N: int = 40) -> Scenario:
    """Three-state non-causal example with alternating observability of x3.

    ``F[k] = [[1, 0, 0], [0, k, 0]]`` leaves x3 free at every step; x3 is
    seen only through the third output row, and only at odd ``k``.
    Initial values x1 = 1, x2 = -3, with x3 from the free schedule.
    """
    if N < 1:
        raise ContractViolation("section3 needs N >= 1")
    C = np.array([[1 / 40, 1 / 2, 0.0], [1 / 10, 1 / 4, 3 / 10]])
    F = np.array([[[1.0, 0.0, 0.0], [0.0, float(k), 0.0]] for k in range(N + 1)])
    H = np.array([section3_h(k) for k in range(N + 1)])
    R_seq = np.array([np.diag([1 / 11, 1 / 22, 1 / 33, 1 / 44]) / (k + 1) for k in range(N + 1)])
    S_seq = np.array([np.diag([1 / (35 * (k + 1)), 1 / (70 * (k + 1))]) for k in range(N)])
    S = np.diag([1 / 60, 1 / 120])
    model = DiscreteDescriptorModel(F=F, C=np.repeat(C[None], N, axis=0), H=H,
                                    S=S, S_seq=S_seq, R_seq=R_seq)

    x0 = np.array([1.0, -3.0, section3_x3(0)])
    # null space of F[0] is span(e2, e3); of F[k], k >= 1, span(e3)
    free = [np.array([x0[1], x0[2]])] + [np.array([section3_x3(k)]) for k in range(1, N + 1)]
    return Scenario("section3", model, free=free, q=F[0] @ x0)


def scalar_example(N: int = 20, S: float = 1.0, c=None, h=None, S_seq=None, R_seq=None,
                   nonlinearity: Callable[[float], float] = lambda p: 0.5 * np.sin(p)) -> Scenario:
    """Scalar nonlinear system embedded as a two-state descriptor model.

    ``x[k+1] = c[k] x[k] + v(x[k]) + f[k]`` becomes ``F z[k+1] = C[k] z[k] + f[k]``
    with ``F = (1, 0)``, ``C[k] = (c[k], 1)``, ``H[k] = (h[k], 0)``; the second
    state carries ``v(z1)`` and is supplied through the free schedule.
    """
    c = np.asarray(c if c is not None else [0.8 + 0.1 * np.cos(k) for k in range(N)], dtype=float)
    h = np.asarray(h if h is not None else [1.0 + 0.5 * np.sin(k) for k in range(N + 1)],
                   dtype=float)
    S_seq = np.asarray(S_seq if S_seq is not None else np.full(N, 2.0), dtype=float)
    R_seq = np.asarray(R_seq if R_seq is not None else [4.0 / (k + 1) for k in range(N + 1)],
                       dtype=float)
    model = DiscreteDescriptorModel(
        F=np.tile([[1.0, 0.0]], (N + 1, 1, 1)),
        C=np.array([[[ck, 1.0]] for ck in c]).reshape(N, 1, 2),
        H=np.array([[[hk, 0.0]] for hk in h]),
        S=np.array([[S]]),
        S_seq=S_seq.reshape(N, 1, 1),
        R_seq=R_seq.reshape(N + 1, 1, 1),
    )
    return Scenario("scalar-example", model, free=lambda k, x_det: [nonlinearity(x_det[0])])


def _random_spd(rng, dim, low=0.5, high=2.0):
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (Q * rng.uniform(low, high, dim)) @ Q.T


def _random_rank(rng, rows, cols, rank):
    if rank == 0:
        return np.zeros((rows, cols))
    return rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))


def random_model(rng: np.random.Generator, n=None, m=None, p=None, N=None,
                 full_column_rank=False, rank_deficient_F=False) -> DiscreteDescriptorModel:
    """Random descriptor model with SPD weights.

    ``full_column_rank`` makes ``rank([F[k]; H[k]]) = n`` at every step (p is
    raised to at least ``n - m`` and the rank is verified). ``rank_deficient_F``
    draws every ``F[k]`` with rank below ``min(m, n)``.
    """
    n = n or int(rng.integers(1, 6))
    m = m or int(rng.integers(1, n + 1))
    p = p or int(rng.integers(1, 5))
    if full_column_rank:
        p = max(p, n - m)
    N = int(rng.integers(1, 21)) if N is None else N
    F, H = [], []
    for k in range(N + 1):
        if rank_deficient_F:
            Fk = _random_rank(rng, m, n, int(rng.integers(0, min(m, n))))
        else:
            Fk = rng.standard_normal((m, n))
        Hk = rng.standard_normal((p, n))
        if full_column_rank and np.linalg.matrix_rank(np.vstack([Fk, Hk])) < n:
            raise ContractViolation(f"stacked [F; H] lost rank at step {k}")
        F.append(Fk)
        H.append(Hk)
    return DiscreteDescriptorModel(
        F=np.array(F),
        C=rng.standard_normal((N, m, n)) * 0.7,
        H=np.array(H),
        S=_random_spd(rng, m),
        S_seq=np.array([_random_spd(rng, m) for _ in range(N)]),
        R_seq=np.array([_random_spd(rng, p) for _ in range(N + 1)]),
    )


def random_well_posed_model(rng: np.random.Generator, max_draws: int = 100, band=(1e-13, 1e-7),
                            **kwargs):
    """Draw from :func:`random_model` until the rank decisions are unambiguous.

    Random descriptor models often lose information geometrically along some
    direction, leaving singular values of ``P_k`` between round-off and
    signal. Such draws have no well-defined numerical answer, so they are
    rejected using :func:`dmx.discrete.rank_well_separated`.

    Returns
    -------
    model : DiscreteDescriptorModel
    rejected : int
        Number of draws discarded before this one.
    """
    from .discrete import rank_well_separated

    for rejected in range(max_draws):
        model = random_model(rng, **kwargs)
        if rank_well_separated(model, band):
            return model, rejected
    raise ContractViolation(f"no well-posed model in {max_draws} draws")


BUILTINS = {"section3": section3, "scalar-example": scalar_example}
